#pragma once

#include <cstdint>
#include <filesystem>

#include "json.hpp"
#include "pdn/interaction_log.h"

namespace pdn {

/// Category-structured click logs for tests and demos. Users favour one or two categories,
/// items inside a category follow a power-law popularity, and item 0 can be made a
/// popularity-dominant item clicked across all categories.
struct SyntheticConfig {
  std::size_t users = 100;
  std::size_t items = 200;
  std::size_t categories = 10;
  std::size_t min_length = 20;
  std::size_t max_length = 40;
  /// Probability that a click stays in the user's preferred categories.
  double affinity = 0.85;
  /// Exponent of the within-category popularity law (0 = uniform).
  double skew = 1.0;
  /// Probability that a click goes to the dominant item 0.
  double dominant_share = 0.0;
  std::int64_t start_time = 1'600'000'000;
  std::uint64_t seed = 1;

  nlohmann::json to_json() const;
  static SyntheticConfig from_json(const nlohmann::json& j);
};

/// Item names are "i<id>", user names "u<id>", categories "c<id>". No user filter is applied.
InteractionLog generate_synthetic(const SyntheticConfig& config);

/// Writes user, item, timestamp, category TSV rows readable by load_log(..., LogFormat::tsv).
void write_log_tsv(const InteractionLog& log, const std::filesystem::path& path);

}  // namespace pdn
