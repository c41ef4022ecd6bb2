#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "pdn/context.h"
#include "pdn/optim.h"

namespace pdn {

struct TrainConfig {
  std::size_t epochs = 5;
  std::size_t batch_size = 256;
  std::size_t negatives = 4;
  AdamConfig adam;
  std::size_t n_max = 50;
  std::uint64_t seed = 1;
  /// Keep only each user's most recent positives (0 = all).
  std::size_t positives_per_user = 0;
  bool use_bias = true;
  /// Where a batch that produced a non-finite loss is written.
  std::filesystem::path debug_dir = "debug";

  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

/// One (user, target, label) case. Triggers are the user's interactions before `anchor`.
struct TrainExample {
  UserId user = 0;
  ItemId target = 0;
  int label = 0;
  std::size_t anchor = 0;
  std::int64_t timestamp = 0;
};

/// Up to `count` distinct items drawn uniformly from items the user never interacted with and
/// not listed in `exclude`. Returns every eligible item when fewer exist.
std::vector<ItemId> sample_negatives(const InteractionLog& log, UserId u, std::size_t count, std::mt19937_64& rng,
                                     std::span<const ItemId> exclude = {});
std::vector<ItemId> sample_negatives(const InteractionLog& log, UserId u, std::size_t count, std::uint64_t seed);

/// Positives from the training log plus `negatives` sampled negatives per positive. The
/// held-out targets in `test` are never used as negatives.
std::vector<TrainExample> build_examples(const InteractionLog& train, std::span<const TestCase> test,
                                         const TrainConfig& config, std::mt19937_64& rng);

struct TrainResult {
  /// Mean loss over the example set before any update.
  double initial_loss = 0.0;
  /// Mean loss accumulated during each epoch.
  std::vector<double> epoch_loss;
  std::size_t examples_per_epoch = 0;
  double seconds = 0.0;
};

/// Mean loss of the examples under the current parameters.
double evaluate_mean_loss(const ContextEncoder& encoder, std::span<const TrainExample> examples, const TrainConfig& config);

/// Trains on a fixed example set.
TrainResult train_examples(PdnModel& model, const ContextEncoder& encoder, std::span<const TrainExample> examples,
                           const TrainConfig& config);

/// Trains on a dataset, resampling negatives every epoch.
TrainResult train(PdnModel& model, const ContextEncoder& encoder, const Dataset& data, const TrainConfig& config);

}  // namespace pdn
