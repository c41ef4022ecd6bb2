#include "pdn/feature_extractor.h"

#include <algorithm>
#include <random>

namespace pdn {

FeatureVector build_cooccurrence_features(const CooccurrenceStats& stats, const InteractionLog& log, ItemId j, ItemId i) {
  if (j == i) throw InvalidFeatureError("co-occurrence features are undefined for self-pairs");
  if (j >= log.num_items() || i >= log.num_items()) throw UnknownEntityError("co-occurrence features: unknown item");
  const auto cj = log.category(j);
  const auto ci = log.category(i);
  FeatureVector fv;
  fv.kind = FieldKind::cooccurrence;
  fv.values = {static_cast<double>(stats.cocount(j, i)), stats.pearson(j, i), (cj >= 0 && cj == ci) ? 1.0 : 0.0};
  return fv;
}

FeatureExtractor::Source FeatureExtractor::source_for(FieldKind kind, const std::string& name) {
  switch (kind) {
    case FieldKind::user:
      if (name == "user_id") return Source::user_id;
      break;
    case FieldKind::item:
      if (name == "item_id") return Source::item_id;
      if (name == "category") return Source::category;
      break;
    case FieldKind::behavior:
      if (name == "recency") return Source::recency;
      if (name == "count") return Source::count;
      if (name.rfind("extra:", 0) == 0) return Source::extra;
      break;
    case FieldKind::cooccurrence:
      if (name == "cocount") return Source::cocount;
      if (name == "pearson") return Source::pearson;
      if (name == "same_category") return Source::same_category;
      break;
    case FieldKind::bias:
      if (name == "position") return Source::position;
      if (name == "hour") return Source::hour;
      break;
  }
  throw ConfigError(std::string("no data source for feature ") + field_kind_name(kind) + "." + name);
}

FeatureExtractor::FeatureExtractor(const InteractionLog& log, std::shared_ptr<const CooccurrenceStats> stats,
                                   SchemaSet schemas)
    : log_(&log), stats_(std::move(stats)), schemas_(std::move(schemas)) {
  auto map = [&](FieldKind kind, std::vector<Source>& out) {
    for (const auto& f : schemas_.get(kind).features) out.push_back(source_for(kind, f.name));
  };
  map(FieldKind::user, user_src_);
  map(FieldKind::item, item_src_);
  map(FieldKind::behavior, behavior_src_);
  map(FieldKind::cooccurrence, cooc_src_);
  map(FieldKind::bias, bias_src_);
  for (std::size_t k = 0; k < behavior_src_.size(); ++k) {
    std::size_t col = 0;
    if (behavior_src_[k] == Source::extra) {
      const auto name = schemas_.behavior.features[k].name.substr(6);
      const auto& names = log.extra_names();
      auto it = std::find(names.begin(), names.end(), name);
      if (it == names.end()) throw ConfigError("behavior feature extra:" + name + " has no matching input column");
      col = static_cast<std::size_t>(it - names.begin());
    }
    extra_column_.push_back(col);
  }
}

FeatureVector FeatureExtractor::user(UserId u) const {
  FeatureVector fv{FieldKind::user, {}};
  for (auto s : user_src_) {
    if (s == Source::user_id) fv.values.push_back(static_cast<double>(u) + 1.0);
  }
  return fv;
}

FeatureVector FeatureExtractor::item(ItemId i) const {
  FeatureVector fv{FieldKind::item, {}};
  for (auto s : item_src_) {
    if (s == Source::item_id) fv.values.push_back(static_cast<double>(i) + 1.0);
    else fv.values.push_back(i < log_->num_items() ? static_cast<double>(log_->category(i) + 1) : 0.0);
  }
  return fv;
}

FeatureVector FeatureExtractor::behavior(std::span<const Interaction> history, std::size_t position,
                                         std::size_t anchor) const {
  FeatureVector fv{FieldKind::behavior, {}};
  for (std::size_t k = 0; k < behavior_src_.size(); ++k) {
    switch (behavior_src_[k]) {
      case Source::recency:
        fv.values.push_back(static_cast<double>(anchor - position));
        break;
      case Source::count: {
        const ItemId j = history[position].item;
        double c = 0.0;
        for (std::size_t q = 0; q <= position; ++q) c += history[q].item == j ? 1.0 : 0.0;
        fv.values.push_back(c);
        break;
      }
      case Source::extra:
        fv.values.push_back(log_->extras(history[position])[extra_column_[k]]);
        break;
      default:
        break;
    }
  }
  return fv;
}

FeatureVector FeatureExtractor::cooccurrence(ItemId j, ItemId i) const {
  const auto raw = build_cooccurrence_features(*stats_, *log_, j, i);
  FeatureVector fv{FieldKind::cooccurrence, {}};
  for (auto s : cooc_src_) {
    if (s == Source::cocount) fv.values.push_back(raw.values[0]);
    else if (s == Source::pearson) fv.values.push_back(raw.values[1]);
    else fv.values.push_back(raw.values[2]);
  }
  return fv;
}

FeatureVector FeatureExtractor::bias(std::int64_t timestamp) const {
  FeatureVector fv{FieldKind::bias, {}};
  for (auto s : bias_src_) {
    if (s == Source::position) {
      fv.values.push_back(0.0);
    } else {
      std::int64_t hour = timestamp / 3600;
      if (timestamp % 3600 < 0) --hour;
      hour %= 24;
      if (hour < 0) hour += 24;
      fv.values.push_back(static_cast<double>(hour + 1));
    }
  }
  return fv;
}

SchemaSet FeatureExtractor::resolve(SchemaSet schemas, const InteractionLog& log,
                                    std::shared_ptr<const CooccurrenceStats> stats, std::size_t n_max, std::uint64_t seed) {
  for (auto kind : {FieldKind::user, FieldKind::behavior, FieldKind::cooccurrence, FieldKind::item, FieldKind::bias}) {
    for (auto& f : schemas.get(kind).features) {
      if (f.type != FeatureType::categorical || f.vocab != 0) continue;
      const auto src = source_for(kind, f.name);
      switch (src) {
        case Source::user_id: f.vocab = log.num_users() + 1; break;
        case Source::item_id: f.vocab = log.num_items() + 1; break;
        case Source::category: f.vocab = log.num_categories() + 1; break;
        case Source::same_category: f.vocab = 2; break;
        case Source::hour: f.vocab = 25; break;
        case Source::position: f.vocab = 1; break;
        default:
          throw ConfigError(std::string(field_kind_name(kind)) + "." + f.name + ": cannot infer a vocabulary; set it explicitly");
      }
    }
  }
  if (schemas.resolved()) return schemas;

  // Sample raw values the way training contexts produce them.
  FeatureExtractor probe(log, stats, schemas);
  std::vector<std::vector<double>> behavior_vals(schemas.behavior.features.size());
  std::vector<std::vector<double>> cooc_vals(schemas.cooccurrence.features.size());
  std::mt19937_64 rng(seed);
  constexpr std::size_t kAnchorsPerUser = 8;
  for (UserId u = 0; u < log.num_users(); ++u) {
    const auto h = log.history(u);
    if (h.size() < 2) continue;
    std::uniform_int_distribution<std::size_t> pick(1, h.size() - 1);
    std::uniform_int_distribution<ItemId> any_item(0, static_cast<ItemId>(log.num_items() - 1));
    for (std::size_t a = 0; a < kAnchorsPerUser; ++a) {
      const std::size_t anchor = pick(rng);
      const std::size_t first = anchor > n_max ? anchor - n_max : 0;
      for (std::size_t q = first; q < anchor; ++q) {
        const auto b = probe.behavior(h, q, anchor);
        for (std::size_t k = 0; k < b.values.size(); ++k) behavior_vals[k].push_back(b.values[k]);
        for (ItemId target : {h[anchor].item, any_item(rng)}) {
          if (target == h[q].item) continue;
          const auto c = probe.cooccurrence(h[q].item, target);
          for (std::size_t k = 0; k < c.values.size(); ++k) cooc_vals[k].push_back(c.values[k]);
        }
      }
    }
  }
  auto fit = [](FieldSchema& schema, std::vector<std::vector<double>>& vals) {
    for (std::size_t k = 0; k < schema.features.size(); ++k) {
      auto& f = schema.features[k];
      if (f.type != FeatureType::continuous || f.quantile_buckets == 0 || !f.bins.empty()) continue;
      f.bins = fit_quantile_bins(std::move(vals[k]), f.quantile_buckets);
      // A degenerate sample still needs one boundary so the feature resolves.
      if (f.bins.empty()) f.bins = {0.0};
    }
  };
  fit(schemas.behavior, behavior_vals);
  fit(schemas.cooccurrence, cooc_vals);
  for (auto kind : {FieldKind::user, FieldKind::item, FieldKind::bias}) {
    for (auto& f : schemas.get(kind).features) {
      if (f.type == FeatureType::continuous && f.bins.empty()) f.bins = {0.0};
    }
  }
  return schemas;
}

}  // namespace pdn
