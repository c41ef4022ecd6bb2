#include "pdn/training.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <unordered_set>

namespace pdn {

nlohmann::json TrainConfig::to_json() const {
  return {{"epochs", epochs},
          {"batch_size", batch_size},
          {"negatives", negatives},
          {"lr", adam.lr},
          {"beta1", adam.beta1},
          {"beta2", adam.beta2},
          {"eps", adam.eps},
          {"n_max", n_max},
          {"seed", seed},
          {"positives_per_user", positives_per_user},
          {"use_bias", use_bias},
          {"debug_dir", debug_dir.string()}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.negatives = j.value("negatives", c.negatives);
  c.adam.lr = j.value("lr", c.adam.lr);
  c.adam.beta1 = j.value("beta1", c.adam.beta1);
  c.adam.beta2 = j.value("beta2", c.adam.beta2);
  c.adam.eps = j.value("eps", c.adam.eps);
  c.n_max = j.value("n_max", c.n_max);
  c.seed = j.value("seed", c.seed);
  c.positives_per_user = j.value("positives_per_user", c.positives_per_user);
  c.use_bias = j.value("use_bias", c.use_bias);
  c.debug_dir = j.value("debug_dir", c.debug_dir.string());
  if (c.batch_size == 0) throw ConfigError("train.batch_size must be >= 1");
  return c;
}

std::vector<ItemId> sample_negatives(const InteractionLog& log, UserId u, std::size_t count, std::mt19937_64& rng,
                                     std::span<const ItemId> exclude) {
  if (count == 0) throw ConfigError("sample_negatives: count must be >= 1");
  const std::size_t n = log.num_items();
  std::vector<char> banned(n, 0);
  for (const auto& r : log.history(u)) banned[r.item] = 1;
  for (ItemId i : exclude) {
    if (i < n) banned[i] = 1;
  }
  std::size_t eligible = 0;
  for (char b : banned) eligible += b ? 0 : 1;

  std::vector<ItemId> out;
  if (eligible <= count) {
    for (ItemId i = 0; i < n; ++i) {
      if (!banned[i]) out.push_back(i);
    }
    std::shuffle(out.begin(), out.end(), rng);
    return out;
  }
  std::uniform_int_distribution<ItemId> pick(0, static_cast<ItemId>(n - 1));
  while (out.size() < count) {
    const ItemId i = pick(rng);
    if (banned[i]) continue;
    banned[i] = 1;
    out.push_back(i);
  }
  return out;
}

std::vector<ItemId> sample_negatives(const InteractionLog& log, UserId u, std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return sample_negatives(log, u, count, rng);
}

std::vector<TrainExample> build_examples(const InteractionLog& train, std::span<const TestCase> test,
                                         const TrainConfig& config, std::mt19937_64& rng) {
  std::vector<ItemId> held_out(train.num_users(), kNoItem);
  for (const auto& t : test) {
    if (t.user < held_out.size()) held_out[t.user] = t.target;
  }
  std::vector<TrainExample> out;
  for (UserId u = 0; u < train.num_users(); ++u) {
    const auto h = train.history(u);
    std::size_t first = 0;
    if (config.positives_per_user != 0 && h.size() > config.positives_per_user) first = h.size() - config.positives_per_user;
    for (std::size_t p = first; p < h.size(); ++p) {
      if (h[p].item == held_out[u]) continue;
      out.push_back(TrainExample{u, h[p].item, 1, p, h[p].timestamp});
      if (config.negatives == 0) continue;
      const ItemId ex[1] = {held_out[u]};
      const auto negs = sample_negatives(train, u, config.negatives, rng,
                                         held_out[u] == kNoItem ? std::span<const ItemId>{} : std::span<const ItemId>(ex));
      for (ItemId i : negs) out.push_back(TrainExample{u, i, 0, p, h[p].timestamp});
    }
  }
  return out;
}

namespace {

ScoreInput make_input(const ContextEncoder& encoder, const TrainExample& ex, const TrainConfig& config) {
  const auto h = encoder.log().history(ex.user);
  std::optional<std::int64_t> ts;
  if (config.use_bias) ts = ex.timestamp;
  return encoder.input(ex.user, h, ex.anchor, ex.target, config.n_max, ts);
}

void dump_batch(const ContextEncoder& encoder, std::span<const TrainExample> batch, const TrainConfig& config,
                std::size_t epoch, std::size_t batch_index) {
  nlohmann::json j;
  j["epoch"] = epoch;
  j["batch"] = batch_index;
  j["model_id"] = to_hex(encoder.model().id());
  auto& rows = j["examples"] = nlohmann::json::array();
  for (const auto& ex : batch) {
    const auto b = encoder.model().score(make_input(encoder, ex, config));
    nlohmann::json r = {{"user", encoder.log().user_name(ex.user)},
                        {"target", encoder.log().item_name(ex.target)},
                        {"label", ex.label},
                        {"anchor", ex.anchor},
                        {"timestamp", ex.timestamp},
                        {"direct_logit", b.direct_logit},
                        {"bias_logit", b.bias_logit},
                        {"score", b.total}};
    for (const auto& p : b.paths) {
      r["paths"].push_back({{"trigger", encoder.log().item_name(p.trigger)}, {"t", p.trigger_score}, {"s", p.sim_score}});
    }
    rows.push_back(std::move(r));
  }
  std::filesystem::create_directories(config.debug_dir);
  std::ofstream out(config.debug_dir / "nonfinite_batch.json", std::ios::trunc);
  // NaN is not valid JSON; nlohmann writes null for it.
  out << j.dump(2) << '\n';
}

using ExampleSource = std::function<std::vector<TrainExample>(std::size_t epoch)>;

TrainResult run(PdnModel& model, const ContextEncoder& encoder, const ExampleSource& source, const TrainConfig& config) {
  if (&encoder.model() != &model) throw ConfigError("encoder was built for a different model");
  const auto start = std::chrono::steady_clock::now();
  TrainResult result;
  ScoreWorkspace ws;
  model.params().zero_grad();
  {
    const auto initial = source(0);
    if (initial.empty()) throw DataError("training set is empty");
    result.initial_loss = evaluate_mean_loss(encoder, initial, config);
  }
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    auto examples = source(epoch);
    if (examples.empty()) throw DataError("training set is empty");
    std::mt19937_64 rng(config.seed * 0x9E3779B97F4A7C15ULL + epoch + 1);
    std::shuffle(examples.begin(), examples.end(), rng);
    result.examples_per_epoch = examples.size();
    double epoch_sum = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t begin = 0; begin < examples.size(); begin += config.batch_size, ++batch_index) {
      const std::size_t end = std::min(examples.size(), begin + config.batch_size);
      const std::span<const TrainExample> batch(examples.data() + begin, end - begin);
      const double w = 1.0 / static_cast<double>(batch.size());
      double batch_sum = 0.0;
      for (const auto& ex : batch) batch_sum += model.accumulate_gradients(make_input(encoder, ex, config), ex.label, w, ws);
      if (!std::isfinite(batch_sum)) {
        model.params().zero_grad();
        dump_batch(encoder, batch, config, epoch, batch_index);
        throw NonFiniteError("non-finite loss in epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(batch_index) + "; batch written to " +
                             (config.debug_dir / "nonfinite_batch.json").string());
      }
      epoch_sum += batch_sum;
      adam_step(model.params(), config.adam);
    }
    result.epoch_loss.push_back(epoch_sum / static_cast<double>(examples.size()));
  }
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

}  // namespace

double evaluate_mean_loss(const ContextEncoder& encoder, std::span<const TrainExample> examples, const TrainConfig& config) {
  if (examples.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& ex : examples) sum += pdn_loss(encoder.model().score(make_input(encoder, ex, config)).total, ex.label);
  return sum / static_cast<double>(examples.size());
}

TrainResult train_examples(PdnModel& model, const ContextEncoder& encoder, std::span<const TrainExample> examples,
                           const TrainConfig& config) {
  std::vector<TrainExample> fixed(examples.begin(), examples.end());
  return run(model, encoder, [&](std::size_t) { return fixed; }, config);
}

TrainResult train(PdnModel& model, const ContextEncoder& encoder, const Dataset& data, const TrainConfig& config) {
  if (&encoder.log() != &data.train) throw ConfigError("encoder was built over a different log");
  std::mt19937_64 rng(config.seed);
  std::vector<TrainExample> epoch0;
  return run(
      model, encoder,
      [&](std::size_t epoch) {
        // Epoch 0's draw also serves as the initial-loss sample.
        if (epoch == 0) {
          if (epoch0.empty()) epoch0 = build_examples(data.train, data.test, config, rng);
          return epoch0;
        }
        return build_examples(data.train, data.test, config, rng);
      },
      config);
}

}  // namespace pdn
