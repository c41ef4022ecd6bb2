#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "json.hpp"
#include "pdn/features.h"
#include "pdn/mlp.h"
#include "pdn/param_store.h"

namespace pdn {

struct ModelConfig {
  SchemaSet schemas;
  std::vector<std::size_t> trig_hidden{32, 16};
  std::vector<std::size_t> sim_hidden{32, 16};
  std::vector<std::size_t> tower_hidden{32};
  /// Width K of the direct-path user and item representations.
  std::size_t direct_width = 16;
  std::vector<std::size_t> bias_hidden{8};
  double leaky_slope = 0.01;
  double embedding_init_scale = 0.1;
  std::uint64_t init_seed = 42;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

/// Scores of one two-hop path u -> j -> i.
struct PathScore {
  double trigger_score = 0.0;  // t_uj
  double sim_score = 0.0;      // s_ji
  double weight = 0.0;         // softplus(t_uj + s_ji), always > 0
  ItemId trigger = kNoItem;
};

/// One trigger's encoded inputs: item j, the user's behavior on j, and the (j, target) statistics.
struct TriggerInput {
  ItemId item_id = kNoItem;
  EncodedField item;
  EncodedField behavior;
  EncodedField cooccurrence;
};

struct ScoreInput {
  EncodedField user;
  EncodedField item;
  std::vector<TriggerInput> triggers;
  std::optional<EncodedField> bias;
};

struct ScoreBreakdown {
  double direct_logit = 0.0;  // d_ui
  double direct = 0.0;        // softplus(d_ui)
  std::vector<PathScore> paths;
  double bias_logit = 0.0;
  double bias = 0.0;  // softplus(y_bias) when bias features were given
  double total = 0.0;
};

/// Raw-feature trigger description for the FeatureVector-level API.
struct TriggerFeatures {
  FeatureVector item;
  FeatureVector behavior;
  FeatureVector cooccurrence;
  ItemId item_id = kNoItem;
};

/// Reusable buffers for forward/backward of the full score.
struct ScoreWorkspace;

/// Scalar path-based network: direct path + sum of two-hop path weights (+ bias at training time).
class PdnModel {
 public:
  explicit PdnModel(ModelConfig config);

  const ModelConfig& config() const { return config_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  const FieldEmbedder& user_embedder() const { return user_emb_; }
  const FieldEmbedder& item_embedder() const { return item_emb_; }
  const FieldEmbedder& behavior_embedder() const { return behavior_emb_; }
  const FieldEmbedder& cooccurrence_embedder() const { return cooc_emb_; }
  const FieldEmbedder& bias_embedder() const { return bias_emb_; }
  const Mlp& trig_net() const { return trig_; }
  const Mlp& sim_net() const { return sim_; }
  const Mlp& user_tower() const { return user_tower_; }
  const Mlp& item_tower() const { return item_tower_; }
  const Mlp& bias_net() const { return bias_net_; }

  /// Re-draws all parameters from config().init_seed.
  void initialize();

  // Encoded-input operations (hot path).
  double trig_score(const EncodedField& user, const EncodedField& behavior, const EncodedField& trigger_item) const;
  double sim_score(const EncodedField& trigger_item, const EncodedField& cooccurrence, const EncodedField& target_item) const;
  std::vector<double> user_vector(const EncodedField& user) const;
  std::vector<double> item_vector(const EncodedField& item) const;
  double direct_score(const EncodedField& user, const EncodedField& item) const;
  double bias_score(const EncodedField& bias) const;
  ScoreBreakdown score(const ScoreInput& input) const;

  // Raw-feature operations.
  double trig_score(const FeatureVector& user, const FeatureVector& behavior, const FeatureVector& trigger_item) const;
  double sim_score(const FeatureVector& trigger_item, const FeatureVector& cooccurrence, const FeatureVector& target_item) const;
  double direct_score(const FeatureVector& user, const FeatureVector& item) const;
  double bias_score(const FeatureVector& bias) const;
  double score(const FeatureVector& user, const FeatureVector& item, std::span<const TriggerFeatures> triggers,
               const std::optional<FeatureVector>& bias) const;
  ScoreInput encode(const FeatureVector& user, const FeatureVector& item, std::span<const TriggerFeatures> triggers,
                    const std::optional<FeatureVector>& bias) const;

  /// Forward + backward of loss(score(input), label) scaled by `weight`; gradients accumulate
  /// into params(). Returns the unscaled loss.
  double accumulate_gradients(const ScoreInput& input, int label, double weight, ScoreWorkspace& ws);

  std::uint64_t id() const;
  /// Writes <dir>/model.json and <dir>/checkpoint.bin.
  void save(const std::filesystem::path& dir) const;
  static PdnModel load(const std::filesystem::path& dir);

 private:
  double forward(const ScoreInput& input, ScoreWorkspace& ws, ScoreBreakdown* out) const;

  ModelConfig config_;
  ParamStore params_;
  FieldEmbedder user_emb_, item_emb_, behavior_emb_, cooc_emb_, bias_emb_;
  FieldEmbedder direct_user_emb_, direct_item_emb_;
  Mlp trig_, sim_, user_tower_, item_tower_, bias_net_;
};

struct ScoreWorkspace {
  struct PathTapes {
    MlpTape trig;
    MlpTape sim;
    std::vector<double> trig_in;
    std::vector<double> sim_in;
  };
  std::vector<PathTapes> paths;
  MlpTape user_tower, item_tower, bias;
  std::vector<double> user_emb, item_emb, direct_user_in, direct_item_in, bias_in;
  std::vector<double> grad_buf, grad_buf2;
};

/// 1 - e^{-y}. Throws std::domain_error unless y > 0.
double click_probability(double score);

/// Cross-entropy of click_probability(score) against label: score itself for label 0,
/// -log(1 - e^{-score}) for label 1.
double pdn_loss(double score, int label);

/// d(pdn_loss)/d(score).
double pdn_loss_grad(double score, int label);

}  // namespace pdn
