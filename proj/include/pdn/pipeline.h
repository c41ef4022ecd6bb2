#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "pdn/evaluation.h"
#include "pdn/synthetic.h"
#include "pdn/training.h"

namespace pdn {

struct RunConfig {
  std::filesystem::path data_path;
  std::string data_format = "tsv";
  std::size_t min_interactions = 20;
  /// Inline schema object, or a path string, or null for the built-in default.
  nlohmann::json schema;
  ModelConfig model;
  TrainConfig train;
  IndexConfig index;
  std::size_t retrieve_m = 20;
  std::size_t retrieve_K = 10;
  std::vector<std::string> eval_protocols{"sampled-100"};
  std::vector<std::string> eval_methods{"pdn", "pdn-retrieval", "simnet-i2i", "pcf-i2i"};
  std::size_t eval_K = 10;
  std::size_t cf_k_hat = 600;
  std::uint64_t seed = 1;
  unsigned threads = 0;
  std::filesystem::path out = "run";

  /// Seeds every stochastic stage (init, negatives, shuffling, protocol sampling) from `seed`.
  void apply_seed(std::uint64_t s);

  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::filesystem::path& path);

  std::filesystem::path data_dir() const { return out / "data"; }
  std::filesystem::path model_dir() const { return out / "model"; }
  std::filesystem::path index_dir() const { return out / "index"; }
  std::filesystem::path eval_dir() const { return out / "eval"; }
};

/// Hex FNV-1a of a file's bytes.
std::string file_digest(const std::filesystem::path& path);

struct StageManifest {
  std::string stage;
  std::vector<std::filesystem::path> inputs;
  std::vector<std::filesystem::path> outputs;
  nlohmann::json timings = nlohmann::json::object();
  nlohmann::json extra = nlohmann::json::object();

  /// Writes <dir>/manifest.json (hashes of inputs and outputs, config, timings) and
  /// <dir>/config.resolved.json.
  void write(const std::filesystem::path& dir, const RunConfig& config) const;
};

/// Artifacts loaded for the stages after training. Members reference each other, so the
/// bundle is neither copyable nor movable.
class Workspace {
 public:
  /// Loads the prepared dataset and co-occurrence statistics; with `with_model` also the
  /// trained model and its feature encoder.
  Workspace(const RunConfig& config, bool with_model);
  Workspace(const Workspace&) = delete;
  Workspace& operator=(const Workspace&) = delete;

  const Dataset& data() const { return data_; }
  const InteractionLog& log() const { return data_.train; }
  std::shared_ptr<const CooccurrenceStats> stats() const { return stats_; }
  const PdnModel& model() const;
  const ContextEncoder& encoder() const;

 private:
  Dataset data_;
  std::shared_ptr<const CooccurrenceStats> stats_;
  std::unique_ptr<PdnModel> model_;
  std::unique_ptr<FeatureExtractor> features_;
  std::unique_ptr<ContextEncoder> encoder_;
};

struct PrepareResult {
  LogStats stats;
  std::size_t test_cases = 0;
};

PrepareResult run_prepare(const RunConfig& config);
TrainResult run_train(const RunConfig& config);
IndexBuildSummary run_build_index(const RunConfig& config);

struct NamedRetrieval {
  std::string item;
  double score = 0.0;
  std::vector<std::string> triggers;
};

/// Throws UnknownEntityError for a user missing from the prepared data.
std::vector<NamedRetrieval> run_retrieve(const RunConfig& config, const std::string& user, std::size_t K, std::size_t m,
                                         bool allow_model_mismatch = false, RetrievalDiagnostics* diagnostics = nullptr);

std::vector<EvalReport> run_eval(const RunConfig& config, bool allow_model_mismatch = false);

/// Resolves the schema set named by the config against a training log.
SchemaSet resolve_schemas(const RunConfig& config, const InteractionLog& log,
                          std::shared_ptr<const CooccurrenceStats> stats);

}  // namespace pdn
