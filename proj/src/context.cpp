#include "pdn/context.h"

#include "pdn/numeric.h"
#include "pdn/parallel.h"

namespace pdn {

ContextEncoder::ContextEncoder(const PdnModel& model, const FeatureExtractor& features)
    : model_(&model), features_(&features) {
  const auto& log = features.log();
  users_.reserve(log.num_users());
  for (UserId u = 0; u < log.num_users(); ++u) users_.push_back(model.user_embedder().encode(features.user(u)));
  items_.reserve(log.num_items());
  for (ItemId i = 0; i < log.num_items(); ++i) items_.push_back(model.item_embedder().encode(features.item(i)));
}

EncodedField ContextEncoder::behavior(std::span<const Interaction> history, std::size_t position, std::size_t anchor) const {
  return model_->behavior_embedder().encode(features_->behavior(history, position, anchor));
}

EncodedField ContextEncoder::cooccurrence(ItemId j, ItemId i) const {
  return model_->cooccurrence_embedder().encode(features_->cooccurrence(j, i));
}

EncodedField ContextEncoder::bias(std::int64_t timestamp) const {
  return model_->bias_embedder().encode(features_->bias(timestamp));
}

std::vector<std::size_t> ContextEncoder::trigger_positions(std::span<const Interaction> history, std::size_t anchor,
                                                           ItemId target, std::size_t n_max) {
  std::vector<std::size_t> out;
  anchor = std::min(anchor, history.size());
  for (std::size_t q = anchor; q-- > 0;) {
    if (history[q].item == target) continue;
    out.push_back(q);
    if (n_max != 0 && out.size() == n_max) break;
  }
  std::reverse(out.begin(), out.end());
  return out;
}

ScoreInput ContextEncoder::input(UserId u, std::span<const Interaction> history, std::size_t anchor, ItemId target,
                                 std::size_t n_max, std::optional<std::int64_t> bias_timestamp) const {
  ScoreInput in;
  in.user = user(u);
  in.item = item(target);
  for (std::size_t q : trigger_positions(history, anchor, target, n_max)) {
    const ItemId j = history[q].item;
    in.triggers.push_back(TriggerInput{j, item(j), behavior(history, q, anchor), cooccurrence(j, target)});
  }
  if (bias_timestamp) in.bias = bias(*bias_timestamp);
  return in;
}

TowerCache TowerCache::build(const ContextEncoder& encoder, unsigned threads) {
  TowerCache c;
  const auto& log = encoder.log();
  c.users_.resize(log.num_users());
  c.items_.resize(log.num_items());
  parallel_for(log.num_users(), threads,
               [&](std::size_t u) { c.users_[u] = encoder.model().user_vector(encoder.user(static_cast<UserId>(u))); });
  parallel_for(log.num_items(), threads,
               [&](std::size_t i) { c.items_[i] = encoder.model().item_vector(encoder.item(static_cast<ItemId>(i))); });
  return c;
}

UserScorer::UserScorer(const ContextEncoder& encoder, UserId u, std::span<const Interaction> history,
                       std::span<const std::size_t> trigger_positions, std::size_t anchor, const TowerCache* towers)
    : encoder_(&encoder), towers_(towers && !towers->empty() ? towers : nullptr) {
  const auto& model = encoder.model();
  if (towers_) {
    const auto p = towers_->user(u);
    p_.assign(p.begin(), p.end());
  } else {
    p_ = model.user_vector(encoder.user(u));
  }
  const auto& user = encoder.user(u);
  for (std::size_t q : trigger_positions) {
    const ItemId j = history[q].item;
    triggers_.push_back(Trigger{j, model.trig_score(user, encoder.behavior(history, q, anchor), encoder.item(j))});
  }
}

double UserScorer::direct(ItemId i) const {
  std::vector<double> owned;
  std::span<const double> q;
  if (towers_) {
    q = towers_->item(i);
  } else {
    owned = encoder_->model().item_vector(encoder_->item(i));
    q = owned;
  }
  double d = 0.0;
  for (std::size_t k = 0; k < q.size(); ++k) d += p_[k] * q[k];
  return d;
}

double UserScorer::score(ItemId i) const {
  const auto& model = encoder_->model();
  double total = softplus(direct(i));
  const auto& target = encoder_->item(i);
  for (const auto& trig : triggers_) {
    if (trig.item == i) continue;
    total += merge_path(trig.t, model.sim_score(encoder_->item(trig.item), encoder_->cooccurrence(trig.item, i), target));
  }
  return total;
}

}  // namespace pdn
