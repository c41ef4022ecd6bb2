#include "pdn/model.h"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "pdn/checkpoint.h"
#include "pdn/numeric.h"

namespace pdn {

namespace {

MlpSpec make_spec(std::size_t input, std::vector<std::size_t> hidden, std::size_t output, double slope) {
  MlpSpec spec;
  spec.input_width = input;
  spec.layer_widths = std::move(hidden);
  spec.layer_widths.push_back(output);
  spec.leaky_slope = slope;
  spec.output_activation = Activation::identity;
  return spec;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) acc += a[k] * b[k];
  return acc;
}

void copy_into(std::span<const double> src, std::vector<double>& dst, std::size_t offset) {
  std::copy(src.begin(), src.end(), dst.begin() + static_cast<std::ptrdiff_t>(offset));
}

}  // namespace

nlohmann::json ModelConfig::to_json() const {
  nlohmann::json j;
  j["schemas"] = schemas_to_json(schemas);
  j["trig_hidden"] = trig_hidden;
  j["sim_hidden"] = sim_hidden;
  j["tower_hidden"] = tower_hidden;
  j["direct_width"] = direct_width;
  j["bias_hidden"] = bias_hidden;
  j["leaky_slope"] = leaky_slope;
  j["embedding_init_scale"] = embedding_init_scale;
  j["init_seed"] = init_seed;
  return j;
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  if (j.contains("schemas")) c.schemas = schemas_from_json(j.at("schemas"));
  c.trig_hidden = j.value("trig_hidden", c.trig_hidden);
  c.sim_hidden = j.value("sim_hidden", c.sim_hidden);
  c.tower_hidden = j.value("tower_hidden", c.tower_hidden);
  c.direct_width = j.value("direct_width", c.direct_width);
  c.bias_hidden = j.value("bias_hidden", c.bias_hidden);
  c.leaky_slope = j.value("leaky_slope", c.leaky_slope);
  c.embedding_init_scale = j.value("embedding_init_scale", c.embedding_init_scale);
  c.init_seed = j.value("init_seed", c.init_seed);
  return c;
}

PdnModel::PdnModel(ModelConfig config) : config_(std::move(config)) {
  if (!config_.schemas.resolved()) throw ConfigError("model schemas must be resolved before building the model");
  if (config_.direct_width == 0) throw ConfigError("direct-path width must be >= 1");
  auto& s = config_.schemas;
  user_emb_ = FieldEmbedder(s.user, params_, "emb.user");
  item_emb_ = FieldEmbedder(s.item, params_, "emb.item");
  behavior_emb_ = FieldEmbedder(s.behavior, params_, "emb.behavior");
  cooc_emb_ = FieldEmbedder(s.cooccurrence, params_, "emb.cooccurrence");
  bias_emb_ = FieldEmbedder(s.bias, params_, "emb.bias");
  direct_user_emb_ = FieldEmbedder(s.user, params_, "direct_emb.user");
  direct_item_emb_ = FieldEmbedder(s.item, params_, "direct_emb.item");

  const double slope = config_.leaky_slope;
  trig_ = Mlp(make_spec(user_emb_.width() + behavior_emb_.width() + item_emb_.width(), config_.trig_hidden, 1, slope),
              params_, "trig");
  sim_ = Mlp(make_spec(2 * item_emb_.width() + cooc_emb_.width(), config_.sim_hidden, 1, slope), params_, "sim");
  user_tower_ = Mlp(make_spec(direct_user_emb_.width(), config_.tower_hidden, config_.direct_width, slope), params_,
                    "user_tower");
  item_tower_ = Mlp(make_spec(direct_item_emb_.width(), config_.tower_hidden, config_.direct_width, slope), params_,
                    "item_tower");
  if (user_tower_.spec().output_width() != item_tower_.spec().output_width()) {
    throw ConfigError("user and item towers must end in the same width");
  }
  if (bias_emb_.width() > 0) {
    bias_net_ = Mlp(make_spec(bias_emb_.width(), config_.bias_hidden, 1, slope), params_, "bias_net");
  }
  initialize();
}

void PdnModel::initialize() {
  std::mt19937_64 rng(config_.init_seed);
  const double scale = config_.embedding_init_scale;
  for (const auto* e : {&user_emb_, &item_emb_, &behavior_emb_, &cooc_emb_, &bias_emb_, &direct_user_emb_, &direct_item_emb_}) {
    e->init(params_, rng, scale);
  }
  trig_.init(params_, rng);
  sim_.init(params_, rng);
  user_tower_.init(params_, rng);
  item_tower_.init(params_, rng);
  if (bias_net_.layers() > 0) bias_net_.init(params_, rng);
  for (auto& p : params_) {
    p.step = 0;
    std::fill(p.first_moment.begin(), p.first_moment.end(), 0.0);
    std::fill(p.second_moment.begin(), p.second_moment.end(), 0.0);
  }
  params_.zero_grad();
}

double PdnModel::trig_score(const EncodedField& user, const EncodedField& behavior, const EncodedField& trigger_item) const {
  std::vector<double> in(trig_.spec().input_width);
  const std::size_t du = user_emb_.width(), da = behavior_emb_.width(), di = item_emb_.width();
  user_emb_.lookup(params_, user, std::span(in).subspan(0, du));
  behavior_emb_.lookup(params_, behavior, std::span(in).subspan(du, da));
  item_emb_.lookup(params_, trigger_item, std::span(in).subspan(du + da, di));
  return trig_.infer(params_, in)[0];
}

double PdnModel::sim_score(const EncodedField& trigger_item, const EncodedField& cooccurrence,
                           const EncodedField& target_item) const {
  std::vector<double> in(sim_.spec().input_width);
  const std::size_t di = item_emb_.width(), dc = cooc_emb_.width();
  item_emb_.lookup(params_, trigger_item, std::span(in).subspan(0, di));
  cooc_emb_.lookup(params_, cooccurrence, std::span(in).subspan(di, dc));
  item_emb_.lookup(params_, target_item, std::span(in).subspan(di + dc, di));
  return sim_.infer(params_, in)[0];
}

std::vector<double> PdnModel::user_vector(const EncodedField& user) const {
  std::vector<double> in(direct_user_emb_.width());
  direct_user_emb_.lookup(params_, user, in);
  return user_tower_.infer(params_, in);
}

std::vector<double> PdnModel::item_vector(const EncodedField& item) const {
  std::vector<double> in(direct_item_emb_.width());
  direct_item_emb_.lookup(params_, item, in);
  return item_tower_.infer(params_, in);
}

double PdnModel::direct_score(const EncodedField& user, const EncodedField& item) const {
  return dot(user_vector(user), item_vector(item));
}

double PdnModel::bias_score(const EncodedField& bias) const {
  if (bias_net_.layers() == 0) return 0.0;
  std::vector<double> in(bias_emb_.width());
  bias_emb_.lookup(params_, bias, in);
  return bias_net_.infer(params_, in)[0];
}

double PdnModel::forward(const ScoreInput& input, ScoreWorkspace& ws, ScoreBreakdown* out) const {
  const std::size_t du = user_emb_.width(), da = behavior_emb_.width(), di = item_emb_.width(), dc = cooc_emb_.width();

  ws.user_emb.assign(du, 0.0);
  ws.item_emb.assign(di, 0.0);
  user_emb_.lookup(params_, input.user, ws.user_emb);
  item_emb_.lookup(params_, input.item, ws.item_emb);

  ws.direct_user_in.assign(direct_user_emb_.width(), 0.0);
  ws.direct_item_in.assign(direct_item_emb_.width(), 0.0);
  direct_user_emb_.lookup(params_, input.user, ws.direct_user_in);
  direct_item_emb_.lookup(params_, input.item, ws.direct_item_in);
  const auto p = user_tower_.forward(params_, ws.direct_user_in, ws.user_tower);
  const auto q = item_tower_.forward(params_, ws.direct_item_in, ws.item_tower);
  const double d = dot(p, q);
  double total = softplus(d);
  if (out) {
    out->direct_logit = d;
    out->direct = total;
    out->paths.clear();
  }

  if (ws.paths.size() < input.triggers.size()) ws.paths.resize(input.triggers.size());
  for (std::size_t k = 0; k < input.triggers.size(); ++k) {
    const auto& trig = input.triggers[k];
    auto& pt = ws.paths[k];
    pt.trig_in.resize(du + da + di);
    copy_into(ws.user_emb, pt.trig_in, 0);
    behavior_emb_.lookup(params_, trig.behavior, std::span(pt.trig_in).subspan(du, da));
    item_emb_.lookup(params_, trig.item, std::span(pt.trig_in).subspan(du + da, di));
    const double t = trig_.forward(params_, pt.trig_in, pt.trig)[0];

    pt.sim_in.resize(2 * di + dc);
    copy_into(std::span(pt.trig_in).subspan(du + da, di), pt.sim_in, 0);
    cooc_emb_.lookup(params_, trig.cooccurrence, std::span(pt.sim_in).subspan(di, dc));
    copy_into(ws.item_emb, pt.sim_in, di + dc);
    const double s = sim_.forward(params_, pt.sim_in, pt.sim)[0];

    const double w = merge_path(t, s);
    total += w;
    if (out) out->paths.push_back(PathScore{t, s, w, trig.item_id});
  }

  if (input.bias && bias_net_.layers() > 0) {
    ws.bias_in.assign(bias_emb_.width(), 0.0);
    bias_emb_.lookup(params_, *input.bias, ws.bias_in);
    const double yb = bias_net_.forward(params_, ws.bias_in, ws.bias)[0];
    const double b = softplus(yb);
    total += b;
    if (out) {
      out->bias_logit = yb;
      out->bias = b;
    }
  } else if (out) {
    out->bias_logit = 0.0;
    out->bias = 0.0;
  }
  if (out) out->total = total;
  return total;
}

ScoreBreakdown PdnModel::score(const ScoreInput& input) const {
  ScoreWorkspace ws;
  ScoreBreakdown out;
  forward(input, ws, &out);
  return out;
}

double PdnModel::accumulate_gradients(const ScoreInput& input, int label, double weight, ScoreWorkspace& ws) {
  ScoreBreakdown fwd;
  const double y = forward(input, ws, &fwd);
  const double loss = pdn_loss(y, label);
  const double g = weight * pdn_loss_grad(y, label);

  const std::size_t du = user_emb_.width(), da = behavior_emb_.width(), di = item_emb_.width(), dc = cooc_emb_.width();
  std::vector<double> user_grad(du, 0.0);
  std::vector<double> item_grad(di, 0.0);

  // Direct path: d = p . q.
  {
    const double gd = g * sigmoid(fwd.direct_logit);
    const auto p = ws.user_tower.output();
    const auto q = ws.item_tower.output();
    std::vector<double> gp(p.size()), gq(q.size());
    for (std::size_t k = 0; k < p.size(); ++k) {
      gp[k] = gd * q[k];
      gq[k] = gd * p[k];
    }
    ws.grad_buf.assign(direct_user_emb_.width(), 0.0);
    user_tower_.backward(params_, ws.user_tower, gp, ws.grad_buf);
    direct_user_emb_.backward(params_, input.user, ws.grad_buf);
    ws.grad_buf.assign(direct_item_emb_.width(), 0.0);
    item_tower_.backward(params_, ws.item_tower, gq, ws.grad_buf);
    direct_item_emb_.backward(params_, input.item, ws.grad_buf);
  }

  for (std::size_t k = 0; k < input.triggers.size(); ++k) {
    const auto& trig = input.triggers[k];
    auto& pt = ws.paths[k];
    const double gpath = g * sigmoid(fwd.paths[k].trigger_score + fwd.paths[k].sim_score);
    const double up[1] = {gpath};

    ws.grad_buf.assign(du + da + di, 0.0);
    trig_.backward(params_, pt.trig, up, ws.grad_buf);
    for (std::size_t c = 0; c < du; ++c) user_grad[c] += ws.grad_buf[c];
    behavior_emb_.backward(params_, trig.behavior, std::span<const double>(ws.grad_buf).subspan(du, da));

    ws.grad_buf2.assign(2 * di + dc, 0.0);
    sim_.backward(params_, pt.sim, up, ws.grad_buf2);
    // Trigger item embedding feeds both nets.
    for (std::size_t c = 0; c < di; ++c) ws.grad_buf2[c] += ws.grad_buf[du + da + c];
    item_emb_.backward(params_, trig.item, std::span<const double>(ws.grad_buf2).subspan(0, di));
    cooc_emb_.backward(params_, trig.cooccurrence, std::span<const double>(ws.grad_buf2).subspan(di, dc));
    for (std::size_t c = 0; c < di; ++c) item_grad[c] += ws.grad_buf2[di + dc + c];
  }

  if (input.bias && bias_net_.layers() > 0) {
    const double up[1] = {g * sigmoid(fwd.bias_logit)};
    ws.grad_buf.assign(bias_emb_.width(), 0.0);
    bias_net_.backward(params_, ws.bias, up, ws.grad_buf);
    bias_emb_.backward(params_, *input.bias, ws.grad_buf);
  }

  user_emb_.backward(params_, input.user, user_grad);
  item_emb_.backward(params_, input.item, item_grad);
  return loss;
}

double PdnModel::trig_score(const FeatureVector& user, const FeatureVector& behavior, const FeatureVector& trigger_item) const {
  return trig_score(user_emb_.encode(user), behavior_emb_.encode(behavior), item_emb_.encode(trigger_item));
}

double PdnModel::sim_score(const FeatureVector& trigger_item, const FeatureVector& cooccurrence,
                           const FeatureVector& target_item) const {
  return sim_score(item_emb_.encode(trigger_item), cooc_emb_.encode(cooccurrence), item_emb_.encode(target_item));
}

double PdnModel::direct_score(const FeatureVector& user, const FeatureVector& item) const {
  return direct_score(user_emb_.encode(user), item_emb_.encode(item));
}

double PdnModel::bias_score(const FeatureVector& bias) const { return bias_score(bias_emb_.encode(bias)); }

ScoreInput PdnModel::encode(const FeatureVector& user, const FeatureVector& item, std::span<const TriggerFeatures> triggers,
                            const std::optional<FeatureVector>& bias) const {
  ScoreInput in;
  in.user = user_emb_.encode(user);
  in.item = item_emb_.encode(item);
  for (const auto& t : triggers) {
    in.triggers.push_back(TriggerInput{t.item_id, item_emb_.encode(t.item), behavior_emb_.encode(t.behavior),
                                       cooc_emb_.encode(t.cooccurrence)});
  }
  if (bias) in.bias = bias_emb_.encode(*bias);
  return in;
}

double PdnModel::score(const FeatureVector& user, const FeatureVector& item, std::span<const TriggerFeatures> triggers,
                       const std::optional<FeatureVector>& bias) const {
  return score(encode(user, item, triggers, bias)).total;
}

std::uint64_t PdnModel::id() const { return checkpoint_id(params_); }

void PdnModel::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  nlohmann::json j = config_.to_json();
  j["model_id"] = to_hex(id());
  std::ofstream out(dir / "model.json", std::ios::trunc);
  out << j.dump(2) << '\n';
  save_checkpoint(params_, dir / "checkpoint.bin");
}

PdnModel PdnModel::load(const std::filesystem::path& dir) {
  std::ifstream in(dir / "model.json");
  if (!in) throw DataError("cannot open '" + (dir / "model.json").string() + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("model.json: " + std::string(e.what()));
  }
  PdnModel m(ModelConfig::from_json(j));
  load_checkpoint(dir / "checkpoint.bin", m.params_);
  return m;
}

double click_probability(double score) {
  if (!(score > 0.0)) throw std::domain_error("click_probability requires a positive score");
  return -std::expm1(-score);
}

double pdn_loss(double score, int label) {
  if (label == 0) return score;
  return -log1mexp(score);
}

double pdn_loss_grad(double score, int label) {
  if (label == 0) return 1.0;
  return -1.0 / std::expm1(score);
}

}  // namespace pdn
