#include "pdn/synthetic.h"

#include <cmath>
#include <fstream>
#include <random>

namespace pdn {

nlohmann::json SyntheticConfig::to_json() const {
  return {{"users", users},         {"items", items},   {"categories", categories},
          {"min_length", min_length}, {"max_length", max_length}, {"affinity", affinity},
          {"skew", skew},           {"dominant_share", dominant_share}, {"start_time", start_time},
          {"seed", seed}};
}

SyntheticConfig SyntheticConfig::from_json(const nlohmann::json& j) {
  SyntheticConfig c;
  c.users = j.value("users", c.users);
  c.items = j.value("items", c.items);
  c.categories = j.value("categories", c.categories);
  c.min_length = j.value("min_length", c.min_length);
  c.max_length = j.value("max_length", c.max_length);
  c.affinity = j.value("affinity", c.affinity);
  c.skew = j.value("skew", c.skew);
  c.dominant_share = j.value("dominant_share", c.dominant_share);
  c.start_time = j.value("start_time", c.start_time);
  c.seed = j.value("seed", c.seed);
  return c;
}

InteractionLog generate_synthetic(const SyntheticConfig& cfg) {
  if (cfg.users == 0 || cfg.items < 2 || cfg.categories == 0 || cfg.categories > cfg.items) {
    throw ConfigError("synthetic: need users >= 1, items >= 2 and 1 <= categories <= items");
  }
  if (cfg.min_length == 0 || cfg.max_length < cfg.min_length) throw ConfigError("synthetic: bad length range");
  std::mt19937_64 rng(cfg.seed);

  // Items are dealt round-robin into categories; within a category earlier items are more popular.
  std::vector<std::vector<std::size_t>> members(cfg.categories);
  for (std::size_t i = 0; i < cfg.items; ++i) members[i % cfg.categories].push_back(i);
  std::vector<std::discrete_distribution<std::size_t>> within;
  for (const auto& m : members) {
    std::vector<double> w;
    for (std::size_t r = 0; r < m.size(); ++r) w.push_back(1.0 / std::pow(static_cast<double>(r + 1), cfg.skew));
    within.emplace_back(w.begin(), w.end());
  }

  LogBuilder b;
  for (std::size_t u = 0; u < cfg.users; ++u) b.declare_user("u" + std::to_string(u));
  for (std::size_t i = 0; i < cfg.items; ++i) b.declare_item("i" + std::to_string(i), "c" + std::to_string(i % cfg.categories));

  std::uniform_int_distribution<std::size_t> len(cfg.min_length, cfg.max_length);
  std::uniform_int_distribution<std::size_t> any_cat(0, cfg.categories - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<std::int64_t> short_gap(30, 900), long_gap(6 * 3600, 3 * 86400);
  for (std::size_t u = 0; u < cfg.users; ++u) {
    const std::size_t fav1 = any_cat(rng);
    const std::size_t fav2 = unit(rng) < 0.5 ? fav1 : any_cat(rng);
    std::int64_t ts = cfg.start_time + static_cast<std::int64_t>(u) * 60;
    const std::size_t n = std::min(len(rng), cfg.items);
    std::vector<char> seen(cfg.items, 0);
    for (std::size_t k = 0; k < n; ++k) {
      // Each user clicks an item at most once.
      std::size_t item = cfg.items;
      for (int attempt = 0; attempt < 64 && (item == cfg.items || seen[item]); ++attempt) {
        if (unit(rng) < cfg.dominant_share) {
          item = 0;
        } else {
          const std::size_t cat = unit(rng) < cfg.affinity ? (unit(rng) < 0.5 ? fav1 : fav2) : any_cat(rng);
          item = members[cat][within[cat](rng)];
        }
      }
      if (seen[item]) {
        std::vector<std::size_t> open;
        for (std::size_t i = 0; i < cfg.items; ++i) {
          if (!seen[i]) open.push_back(i);
        }
        item = open[std::uniform_int_distribution<std::size_t>(0, open.size() - 1)(rng)];
      }
      seen[item] = 1;
      ts += unit(rng) < 0.8 ? short_gap(rng) : long_gap(rng);
      RawInteraction r;
      r.user = "u" + std::to_string(u);
      r.item = "i" + std::to_string(item);
      r.timestamp = ts;
      b.add(std::move(r));
    }
  }
  return b.build(0);
}

void write_log_tsv(const InteractionLog& log, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  for (const auto& r : log.records()) {
    out << log.user_name(r.user) << '\t' << log.item_name(r.item) << '\t' << r.timestamp;
    if (log.has_categories()) {
      const auto c = log.category(r.item);
      out << '\t' << (c >= 0 ? log.category_name(static_cast<std::size_t>(c)) : "-");
    }
    out << '\n';
  }
}

}  // namespace pdn
