#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "pdn/baseline_cf.h"
#include "pdn/features.h"
#include "pdn/interaction_log.h"

namespace pdn {

/// Raw co-occurrence statistics for the pair (trigger j, target i):
/// [co-click count, Pearson correlation, same-category indicator].
/// Unseen pairs give zero statistics. Self-pairs are rejected with InvalidFeatureError.
FeatureVector build_cooccurrence_features(const CooccurrenceStats& stats, const InteractionLog& log, ItemId j, ItemId i);

/// Turns log entities into feature vectors for each field, by feature name:
///   user:         user_id
///   item:         item_id, category
///   behavior:     recency (interactions between trigger and anchor), count (prior clicks on the
///                 trigger), extra:<column> (numeric TSV column)
///   cooccurrence: cocount, pearson, same_category
///   bias:         position (always the unknown bucket for public logs), hour (UTC hour + 1)
class FeatureExtractor {
 public:
  FeatureExtractor(const InteractionLog& log, std::shared_ptr<const CooccurrenceStats> stats, SchemaSet schemas);

  /// Fills "auto" vocabularies and quantile bins from the training log.
  static SchemaSet resolve(SchemaSet schemas, const InteractionLog& log, std::shared_ptr<const CooccurrenceStats> stats,
                           std::size_t n_max, std::uint64_t seed);

  const SchemaSet& schemas() const { return schemas_; }
  const InteractionLog& log() const { return *log_; }
  const CooccurrenceStats& stats() const { return *stats_; }

  FeatureVector user(UserId u) const;
  FeatureVector item(ItemId i) const;
  /// Behavior of history[position] seen from `anchor` (the index of the target in the sequence,
  /// or history.size() at serving time).
  FeatureVector behavior(std::span<const Interaction> history, std::size_t position, std::size_t anchor) const;
  FeatureVector cooccurrence(ItemId j, ItemId i) const;
  FeatureVector bias(std::int64_t timestamp) const;

 private:
  enum class Source { user_id, item_id, category, recency, count, extra, cocount, pearson, same_category, position, hour };
  static Source source_for(FieldKind kind, const std::string& name);

  const InteractionLog* log_;
  std::shared_ptr<const CooccurrenceStats> stats_;
  SchemaSet schemas_;
  std::vector<Source> user_src_, item_src_, behavior_src_, cooc_src_, bias_src_;
  std::vector<std::size_t> extra_column_;  // per behavior feature, column for extra:<name>
};

}  // namespace pdn
