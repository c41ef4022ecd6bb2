#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "pdn/param_store.h"

namespace pdn {

enum class FieldKind { user, behavior, cooccurrence, item, bias };

const char* field_kind_name(FieldKind kind);
FieldKind parse_field_kind(const std::string& name);

enum class FeatureType { categorical, continuous };

struct FeatureSpec {
  std::string name;
  FeatureType type = FeatureType::categorical;
  /// Categorical: table rows; row 0 is the reserved unknown row. 0 means "resolve from data".
  std::size_t vocab = 0;
  /// Continuous: strictly increasing boundaries. Empty with quantile_buckets > 0 means "fit from data".
  std::vector<double> bins;
  std::size_t quantile_buckets = 0;
  std::size_t width = 4;

  std::size_t rows() const { return type == FeatureType::categorical ? vocab : bins.size() + 1; }
  bool resolved() const { return type == FeatureType::categorical ? vocab >= 1 : quantile_buckets == 0 || !bins.empty(); }
};

struct FieldSchema {
  FieldKind kind = FieldKind::user;
  std::vector<FeatureSpec> features;

  /// Sum of per-feature embedding widths.
  std::size_t width() const;
  /// With allow_unresolved, vocab 0 ("auto") passes.
  void validate(bool allow_unresolved = false) const;
};

/// Raw values for one field, in schema order. Categorical ids are stored as exact integers.
struct FeatureVector {
  FieldKind kind = FieldKind::user;
  std::vector<double> values;
};

struct FieldEmbedding {
  FieldKind kind = FieldKind::user;
  std::vector<double> values;
};

/// One table row per feature, after discretization and unknown-id mapping.
struct EncodedField {
  FieldKind kind = FieldKind::user;
  std::vector<std::uint32_t> rows;
};

/// Bucket of `value` among half-open intervals (b[k-1], b[k]]: 0 below the first boundary,
/// bins.size() above the last. Throws InvalidFeatureError on NaN.
std::size_t discretize(double value, std::span<const double> bins);

/// Up to buckets-1 strictly increasing boundaries at the empirical quantiles of `values`.
std::vector<double> fit_quantile_bins(std::vector<double> values, std::size_t buckets);

/// Embedding tables for one field plus the lookup/backward pair.
class FieldEmbedder {
 public:
  FieldEmbedder() = default;
  /// Registers one table per feature named `<prefix>.<feature>`.
  FieldEmbedder(FieldSchema schema, ParamStore& store, const std::string& prefix);
  static FieldEmbedder bind(FieldSchema schema, const ParamStore& store, const std::string& prefix);

  const FieldSchema& schema() const { return schema_; }
  std::size_t width() const { return width_; }
  ParamId table(std::size_t feature) const { return tables_.at(feature); }

  void init(ParamStore& store, std::mt19937_64& rng, double scale) const;

  EncodedField encode(const FeatureVector& fv) const;
  /// Writes the concatenated embedding into out (length width()).
  void lookup(const ParamStore& store, const EncodedField& enc, std::span<double> out) const;
  FieldEmbedding embed(const ParamStore& store, const FeatureVector& fv) const;
  /// Accumulates grad (length width()) into the looked-up rows only.
  void backward(ParamStore& store, const EncodedField& enc, std::span<const double> grad) const;

  std::size_t unknown_ids_seen() const { return unknown_seen_->load(); }

 private:
  FieldSchema schema_;
  std::vector<ParamId> tables_;
  std::vector<std::size_t> offsets_;
  std::size_t width_ = 0;
  std::shared_ptr<std::atomic<std::size_t>> unknown_seen_ = std::make_shared<std::atomic<std::size_t>>(0);
};

FieldEmbedding embed_field(const FeatureVector& fv, const FieldEmbedder& embedder, const ParamStore& tables);

/// The five schemas a model consumes.
struct SchemaSet {
  FieldSchema user{FieldKind::user, {}};
  FieldSchema behavior{FieldKind::behavior, {}};
  FieldSchema cooccurrence{FieldKind::cooccurrence, {}};
  FieldSchema item{FieldKind::item, {}};
  FieldSchema bias{FieldKind::bias, {}};

  FieldSchema& get(FieldKind kind);
  const FieldSchema& get(FieldKind kind) const;
  bool resolved() const;
};

/// Default feature set for public implicit-feedback logs.
SchemaSet default_schemas(bool with_categories);

nlohmann::json schemas_to_json(const SchemaSet& schemas);
SchemaSet schemas_from_json(const nlohmann::json& j);
SchemaSet load_schemas(const std::string& path);

}  // namespace pdn
