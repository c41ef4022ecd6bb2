#include "pdn/features.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>

namespace pdn {

const char* field_kind_name(FieldKind kind) {
  switch (kind) {
    case FieldKind::user: return "user";
    case FieldKind::behavior: return "behavior";
    case FieldKind::cooccurrence: return "cooccurrence";
    case FieldKind::item: return "item";
    case FieldKind::bias: return "bias";
  }
  return "?";
}

FieldKind parse_field_kind(const std::string& name) {
  for (auto k : {FieldKind::user, FieldKind::behavior, FieldKind::cooccurrence, FieldKind::item, FieldKind::bias}) {
    if (name == field_kind_name(k)) return k;
  }
  throw ConfigError("unknown field kind '" + name + "'");
}

std::size_t FieldSchema::width() const {
  std::size_t w = 0;
  for (const auto& f : features) w += f.width;
  return w;
}

void FieldSchema::validate(bool allow_unresolved) const {
  for (const auto& f : features) {
    const std::string where = std::string(field_kind_name(kind)) + "." + f.name;
    if (f.width == 0) throw ConfigError(where + ": embedding width must be >= 1");
    if (f.type == FeatureType::categorical) {
      if (f.vocab < 1 && !(allow_unresolved && f.vocab == 0)) throw ConfigError(where + ": vocabulary size must be >= 1");
    } else {
      for (std::size_t k = 1; k < f.bins.size(); ++k) {
        if (!(f.bins[k] > f.bins[k - 1])) throw ConfigError(where + ": bin boundaries must be strictly increasing");
      }
      for (double b : f.bins) {
        if (!std::isfinite(b)) throw ConfigError(where + ": non-finite bin boundary");
      }
    }
  }
}

std::size_t discretize(double value, std::span<const double> bins) {
  if (std::isnan(value)) throw InvalidFeatureError("cannot discretize NaN");
  return static_cast<std::size_t>(std::lower_bound(bins.begin(), bins.end(), value) - bins.begin());
}

std::vector<double> fit_quantile_bins(std::vector<double> values, std::size_t buckets) {
  std::vector<double> bins;
  values.erase(std::remove_if(values.begin(), values.end(), [](double v) { return !std::isfinite(v); }), values.end());
  if (values.empty() || buckets < 2) return bins;
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  for (std::size_t k = 1; k < buckets; ++k) {
    const auto idx = static_cast<std::size_t>(std::floor(static_cast<double>(k) * static_cast<double>(n - 1) / static_cast<double>(buckets)));
    const double b = values[idx];
    if (bins.empty() || b > bins.back()) bins.push_back(b);
  }
  return bins;
}

FieldEmbedder::FieldEmbedder(FieldSchema schema, ParamStore& store, const std::string& prefix) : schema_(std::move(schema)) {
  schema_.validate();
  for (const auto& f : schema_.features) {
    if (!f.resolved()) throw ConfigError(prefix + "." + f.name + ": schema not resolved (vocab or bins missing)");
    offsets_.push_back(width_);
    tables_.push_back(store.add(prefix + "." + f.name, f.rows(), f.width));
    width_ += f.width;
  }
}

FieldEmbedder FieldEmbedder::bind(FieldSchema schema, const ParamStore& store, const std::string& prefix) {
  schema.validate();
  FieldEmbedder e;
  e.schema_ = std::move(schema);
  for (const auto& f : e.schema_.features) {
    const ParamId id = store.id_of(prefix + "." + f.name);
    if (store.at(id).rows != f.rows() || store.at(id).cols != f.width) {
      throw DimensionError("embedding table '" + prefix + "." + f.name + "' does not match its schema");
    }
    e.offsets_.push_back(e.width_);
    e.tables_.push_back(id);
    e.width_ += f.width;
  }
  return e;
}

void FieldEmbedder::init(ParamStore& store, std::mt19937_64& rng, double scale) const {
  std::uniform_real_distribution<double> dist(-scale, scale);
  for (ParamId t : tables_) {
    for (auto& v : store.at(t).value) v = dist(rng);
  }
  store.touch();
}

EncodedField FieldEmbedder::encode(const FeatureVector& fv) const {
  if (fv.kind != schema_.kind) {
    throw InvalidFeatureError(std::string("field kind mismatch: expected ") + field_kind_name(schema_.kind) + ", got " +
                              field_kind_name(fv.kind));
  }
  if (fv.values.size() != schema_.features.size()) {
    throw InvalidFeatureError(std::string(field_kind_name(schema_.kind)) + " field expects " +
                              std::to_string(schema_.features.size()) + " values, got " + std::to_string(fv.values.size()));
  }
  EncodedField enc;
  enc.kind = fv.kind;
  enc.rows.resize(fv.values.size());
  for (std::size_t k = 0; k < fv.values.size(); ++k) {
    const auto& f = schema_.features[k];
    const double v = fv.values[k];
    if (std::isnan(v)) throw InvalidFeatureError(std::string(field_kind_name(schema_.kind)) + "." + f.name + " is NaN");
    if (f.type == FeatureType::continuous) {
      enc.rows[k] = static_cast<std::uint32_t>(discretize(v, f.bins));
      continue;
    }
    if (v < 0.0 || v >= static_cast<double>(f.vocab) || v != std::floor(v)) {
      if (unknown_seen_->fetch_add(1) == 0) {
        std::cerr << "warning: " << field_kind_name(schema_.kind) << "." << f.name << " id " << v
                  << " outside vocabulary of " << f.vocab << "; using the unknown row\n";
      }
      enc.rows[k] = 0;
    } else {
      enc.rows[k] = static_cast<std::uint32_t>(v);
    }
  }
  return enc;
}

void FieldEmbedder::lookup(const ParamStore& store, const EncodedField& enc, std::span<double> out) const {
  if (enc.kind != schema_.kind || enc.rows.size() != tables_.size()) {
    throw InvalidFeatureError(std::string("encoded field does not match the ") + field_kind_name(schema_.kind) + " schema");
  }
  if (out.size() != width_) throw DimensionError("embedding output buffer has the wrong width");
  for (std::size_t k = 0; k < tables_.size(); ++k) {
    const auto row = store.at(tables_[k]).row(enc.rows[k]);
    std::copy(row.begin(), row.end(), out.begin() + static_cast<std::ptrdiff_t>(offsets_[k]));
  }
}

FieldEmbedding FieldEmbedder::embed(const ParamStore& store, const FeatureVector& fv) const {
  FieldEmbedding e;
  e.kind = fv.kind;
  e.values.assign(width_, 0.0);
  lookup(store, encode(fv), e.values);
  return e;
}

void FieldEmbedder::backward(ParamStore& store, const EncodedField& enc, std::span<const double> grad) const {
  if (grad.size() != width_) throw DimensionError("embedding gradient has the wrong width");
  for (std::size_t k = 0; k < tables_.size(); ++k) {
    auto g = store.at(tables_[k]).grad_row(enc.rows[k]);
    const double* src = grad.data() + offsets_[k];
    for (std::size_t c = 0; c < g.size(); ++c) g[c] += src[c];
  }
}

FieldEmbedding embed_field(const FeatureVector& fv, const FieldEmbedder& embedder, const ParamStore& tables) {
  return embedder.embed(tables, fv);
}

FieldSchema& SchemaSet::get(FieldKind kind) {
  switch (kind) {
    case FieldKind::user: return user;
    case FieldKind::behavior: return behavior;
    case FieldKind::cooccurrence: return cooccurrence;
    case FieldKind::item: return item;
    case FieldKind::bias: return bias;
  }
  throw ConfigError("bad field kind");
}

const FieldSchema& SchemaSet::get(FieldKind kind) const { return const_cast<SchemaSet*>(this)->get(kind); }

bool SchemaSet::resolved() const {
  for (const auto* s : {&user, &behavior, &cooccurrence, &item, &bias}) {
    for (const auto& f : s->features) {
      if (!f.resolved()) return false;
    }
  }
  return true;
}

namespace {

FeatureSpec categorical(std::string name, std::size_t vocab, std::size_t width) {
  FeatureSpec f;
  f.name = std::move(name);
  f.type = FeatureType::categorical;
  f.vocab = vocab;
  f.width = width;
  return f;
}

FeatureSpec continuous(std::string name, std::vector<double> bins, std::size_t quantiles, std::size_t width) {
  FeatureSpec f;
  f.name = std::move(name);
  f.type = FeatureType::continuous;
  f.bins = std::move(bins);
  f.quantile_buckets = quantiles;
  f.width = width;
  return f;
}

}  // namespace

SchemaSet default_schemas(bool with_categories) {
  SchemaSet s;
  s.user.features = {categorical("user_id", 0, 16)};
  s.item.features = {categorical("item_id", 0, 16)};
  if (with_categories) s.item.features.push_back(categorical("category", 0, 16));
  s.behavior.features = {continuous("recency", {}, 32, 4), continuous("count", {1, 2, 3, 5, 10}, 0, 4)};
  s.cooccurrence.features = {continuous("cocount", {}, 32, 4), continuous("pearson", {}, 32, 4)};
  if (with_categories) s.cooccurrence.features.push_back(categorical("same_category", 2, 4));
  s.bias.features = {categorical("position", 0, 4), categorical("hour", 25, 4)};
  return s;
}

nlohmann::json schemas_to_json(const SchemaSet& schemas) {
  nlohmann::json out = nlohmann::json::object();
  for (auto kind : {FieldKind::user, FieldKind::behavior, FieldKind::cooccurrence, FieldKind::item, FieldKind::bias}) {
    auto arr = nlohmann::json::array();
    for (const auto& f : schemas.get(kind).features) {
      nlohmann::json jf;
      jf["name"] = f.name;
      jf["width"] = f.width;
      if (f.type == FeatureType::categorical) {
        jf["type"] = "categorical";
        if (f.vocab == 0) jf["vocab"] = "auto";
        else jf["vocab"] = f.vocab;
      } else {
        jf["type"] = "continuous";
        if (f.bins.empty() && f.quantile_buckets > 0) jf["bins"] = "quantile:" + std::to_string(f.quantile_buckets);
        else jf["bins"] = f.bins;
      }
      arr.push_back(jf);
    }
    out[field_kind_name(kind)] = arr;
  }
  return out;
}

SchemaSet schemas_from_json(const nlohmann::json& j) {
  SchemaSet s;
  for (auto kind : {FieldKind::user, FieldKind::behavior, FieldKind::cooccurrence, FieldKind::item, FieldKind::bias}) {
    auto& schema = s.get(kind);
    schema.kind = kind;
    const char* key = field_kind_name(kind);
    if (!j.contains(key)) continue;
    for (const auto& jf : j.at(key)) {
      FeatureSpec f;
      f.name = jf.at("name").get<std::string>();
      f.width = jf.value("width", std::size_t{4});
      const auto type = jf.value("type", std::string("categorical"));
      if (type == "categorical") {
        f.type = FeatureType::categorical;
        const auto& v = jf.contains("vocab") ? jf.at("vocab") : nlohmann::json("auto");
        f.vocab = v.is_string() ? 0 : v.get<std::size_t>();
        if (v.is_string() && v.get<std::string>() != "auto") throw ConfigError(f.name + ": vocab must be a number or \"auto\"");
      } else if (type == "continuous") {
        f.type = FeatureType::continuous;
        const auto& b = jf.at("bins");
        if (b.is_string()) {
          const auto spec = b.get<std::string>();
          if (spec.rfind("quantile:", 0) != 0) throw ConfigError(f.name + ": bins must be a list or \"quantile:N\"");
          f.quantile_buckets = std::stoul(spec.substr(9));
        } else {
          f.bins = b.get<std::vector<double>>();
        }
      } else {
        throw ConfigError(f.name + ": unknown feature type '" + type + "'");
      }
      schema.features.push_back(std::move(f));
    }
    schema.validate(true);
  }
  return s;
}

SchemaSet load_schemas(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open schema file '" + path + "'");
  try {
    return schemas_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("schema file '" + path + "': " + e.what());
  }
}

}  // namespace pdn
