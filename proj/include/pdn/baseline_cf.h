#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "pdn/interaction_log.h"

namespace pdn {

/// Pearson correlation of two items' binarized user columns, computed directly from the log.
/// Zero when either column is constant. Throws UnknownEntityError for ids outside the log.
double pearson_sim(const InteractionLog& log, ItemId j, ItemId i);

/// Pearson coefficient of two binary columns from their counts: n users, a and b positives,
/// c shared positives.
double pearson_from_counts(double n, double a, double b, double c);

/// Item co-occurrence counts over distinct users, stored sparsely per item.
class CooccurrenceStats {
 public:
  CooccurrenceStats() = default;
  explicit CooccurrenceStats(const InteractionLog& log, unsigned threads = 1);

  std::size_t num_items() const { return rows_.size(); }
  std::size_t num_users() const { return users_; }
  std::uint32_t item_count(ItemId i) const { return item_counts_.at(i); }
  /// Number of distinct users who interacted with both j and i.
  std::uint32_t cocount(ItemId j, ItemId i) const;
  double pearson(ItemId j, ItemId i) const;
  /// Co-occurring partners of j as (item, count), ascending by item.
  std::span<const std::pair<ItemId, std::uint32_t>> partners(ItemId j) const { return rows_.at(j); }

 private:
  std::size_t users_ = 0;
  std::vector<std::uint32_t> item_counts_;
  std::vector<std::vector<std::pair<ItemId, std::uint32_t>>> rows_;
};

struct CfConfig {
  /// Neighbors kept per item.
  std::size_t k_hat = 600;
  /// Also score pairs that never co-occur (quadratic; meant for small corpora).
  bool all_pairs = false;
  unsigned threads = 1;
};

/// Item-item Pearson similarities truncated to the top k_hat per source item.
class CfMatrix {
 public:
  CfMatrix() = default;
  static CfMatrix build(const CooccurrenceStats& stats, const CfConfig& config);

  std::size_t num_items() const { return rows_.size(); }
  /// c_ji, or 0 when (j, i) was not retained.
  double sim(ItemId j, ItemId i) const;
  /// Row of j sorted by similarity descending (ties by item id).
  std::vector<std::pair<ItemId, double>> ranked_row(ItemId j) const;

  /// Writes "j \t i \t sim" with external ids.
  void export_tsv(const InteractionLog& log, const std::filesystem::path& path) const;

 private:
  // Each row ascending by item id for lookup.
  std::vector<std::vector<std::pair<ItemId, double>>> rows_;
};

/// Regression-form item CF score with unit trigger weights: sum over history of c_ji.
double cf_score(const CfMatrix& matrix, std::span<const ItemId> history, ItemId i);

}  // namespace pdn
