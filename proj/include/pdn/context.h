#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "pdn/feature_extractor.h"
#include "pdn/model.h"

namespace pdn {

/// Encodes log entities against a model's schemas. Entity encodings are computed once;
/// they depend on the schemas only, so the encoder stays valid while parameters train.
class ContextEncoder {
 public:
  ContextEncoder(const PdnModel& model, const FeatureExtractor& features);

  const PdnModel& model() const { return *model_; }
  const FeatureExtractor& features() const { return *features_; }
  const InteractionLog& log() const { return features_->log(); }

  const EncodedField& user(UserId u) const { return users_.at(u); }
  const EncodedField& item(ItemId i) const { return items_.at(i); }
  EncodedField behavior(std::span<const Interaction> history, std::size_t position, std::size_t anchor) const;
  EncodedField cooccurrence(ItemId j, ItemId i) const;
  EncodedField bias(std::int64_t timestamp) const;

  /// Positions of history strictly before `anchor` whose item differs from `target`, keeping
  /// the `n_max` most recent (0 keeps all). Ascending.
  static std::vector<std::size_t> trigger_positions(std::span<const Interaction> history, std::size_t anchor,
                                                    ItemId target, std::size_t n_max);

  ScoreInput input(UserId u, std::span<const Interaction> history, std::size_t anchor, ItemId target, std::size_t n_max,
                   std::optional<std::int64_t> bias_timestamp) const;

 private:
  const PdnModel* model_;
  const FeatureExtractor* features_;
  std::vector<EncodedField> users_;
  std::vector<EncodedField> items_;
};

/// Precomputed direct-path representations p_u and q_i.
class TowerCache {
 public:
  TowerCache() = default;
  static TowerCache build(const ContextEncoder& encoder, unsigned threads = 1);

  bool empty() const { return items_.empty(); }
  std::span<const double> user(UserId u) const { return users_.at(u); }
  std::span<const double> item(ItemId i) const { return items_.at(i); }

 private:
  std::vector<std::vector<double>> users_;
  std::vector<std::vector<double>> items_;
};

/// Full serving score (no bias) of many targets for one user context. Trigger scores and
/// p_u are computed once; a trigger equal to the target is left out of that target's sum.
class UserScorer {
 public:
  UserScorer(const ContextEncoder& encoder, UserId u, std::span<const Interaction> history,
             std::span<const std::size_t> trigger_positions, std::size_t anchor, const TowerCache* towers = nullptr);

  double score(ItemId i) const;
  double direct(ItemId i) const;
  std::size_t triggers() const { return triggers_.size(); }

 private:
  struct Trigger {
    ItemId item;
    double t;
  };
  const ContextEncoder* encoder_;
  const TowerCache* towers_;
  std::vector<double> p_;
  std::vector<Trigger> triggers_;
};

}  // namespace pdn
