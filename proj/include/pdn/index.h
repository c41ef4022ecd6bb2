#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "json.hpp"
#include "pdn/context.h"

namespace pdn {

struct IndexConfig {
  std::size_t k = 60;
  std::size_t k_hat = 600;
  /// Two interactions of one user form a co-occurrence pair when at most this many seconds apart.
  std::int64_t session_window = 3600;
  bool profile_pairs = true;
  bool all_pairs = false;
  unsigned threads = 0;

  nlohmann::json to_json() const;
  static IndexConfig from_json(const nlohmann::json& j);
};

/// Candidate targets per source item, in priority order.
struct CandidatePairs {
  std::vector<std::vector<ItemId>> targets;

  std::size_t num_items() const { return targets.size(); }
  std::size_t size() const;
};

/// Union of session co-occurrence pairs and same-category pairs, deduplicated, then capped at
/// k_hat per source. Priority: distinct co-clicking users descending, then most recent
/// co-occurrence (or, for category-only pairs, the target's last interaction), then item id.
CandidatePairs generate_candidate_pairs(const InteractionLog& log, const IndexConfig& config);

/// Every ordered pair of distinct items (for small corpora and oracles).
CandidatePairs all_candidate_pairs(std::size_t num_items);

struct Neighbor {
  ItemId item = kNoItem;
  double score = 0.0;

  bool operator==(const Neighbor&) const = default;
};

struct IndexHeader {
  std::uint64_t model_id = 0;
  std::uint32_t k = 0;
  std::int64_t build_timestamp = 0;
  std::uint64_t num_items = 0;

  bool operator==(const IndexHeader&) const = default;
};

/// Per-item top-k SimNet neighbors, descending by score, ties by item id ascending.
class SimIndex {
 public:
  SimIndex() = default;
  SimIndex(IndexHeader header, std::vector<std::vector<Neighbor>> lists);

  const IndexHeader& header() const { return header_; }
  std::size_t num_items() const { return offsets_.empty() ? 0 : offsets_.size() - 1; }
  std::span<const Neighbor> neighbors(ItemId j) const;
  std::optional<double> find(ItemId j, ItemId i) const;
  std::size_t total_neighbors() const { return entries_.size(); }

  bool operator==(const SimIndex& other) const;

 private:
  IndexHeader header_;
  std::vector<std::size_t> offsets_;
  std::vector<Neighbor> entries_;
};

struct IndexBuildSummary {
  std::size_t pairs_scored = 0;
  std::size_t pairs_skipped = 0;
  std::size_t items_with_neighbors = 0;
  double seconds = 0.0;
};

/// Scores every candidate with SimNet and keeps the top k per source. Pairs naming items the
/// encoder does not know are skipped and counted.
SimIndex build_index(const ContextEncoder& encoder, const CandidatePairs& pairs, std::size_t k, unsigned threads = 0,
                     IndexBuildSummary* summary = nullptr, std::optional<std::int64_t> build_timestamp = std::nullopt);

inline constexpr std::uint32_t kIndexVersion = 1;

std::vector<std::byte> encode_index(const SimIndex& index);
SimIndex decode_index(std::span<const std::byte> bytes);
void save_index(const SimIndex& index, const std::filesystem::path& path);
/// Throws ModelMismatchError when `expected_model_id` is given, differs from the header, and
/// `allow_mismatch` is false.
SimIndex load_index(const std::filesystem::path& path, std::optional<std::uint64_t> expected_model_id = std::nullopt,
                    bool allow_mismatch = false);
/// Writes "j \t i \t s_ji" with external ids.
void export_index_tsv(const SimIndex& index, const InteractionLog& log, const std::filesystem::path& path);

}  // namespace pdn
