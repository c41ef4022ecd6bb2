#include "pdn/baseline_cf.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "pdn/parallel.h"

namespace pdn {

double pearson_sim(const InteractionLog& log, ItemId j, ItemId i) {
  if (j >= log.num_items() || i >= log.num_items()) {
    throw UnknownEntityError("pearson_sim: unknown item id " + std::to_string(std::max(j, i)));
  }
  std::vector<double> xj(log.num_users(), 0.0);
  std::vector<double> xi(log.num_users(), 0.0);
  for (const auto& r : log.records()) {
    if (r.item == j) xj[r.user] = 1.0;
    if (r.item == i) xi[r.user] = 1.0;
  }
  // Only users with at least one interaction take part.
  std::vector<UserId> active;
  for (UserId u = 0; u < log.num_users(); ++u) {
    if (!log.history(u).empty()) active.push_back(u);
  }
  const double n = static_cast<double>(active.size());
  if (n == 0.0) return 0.0;
  double mj = 0.0, mi = 0.0;
  for (auto u : active) {
    mj += xj[u];
    mi += xi[u];
  }
  mj /= n;
  mi /= n;
  double cov = 0.0, vj = 0.0, vi = 0.0;
  for (auto u : active) {
    cov += (xj[u] - mj) * (xi[u] - mi);
    vj += (xj[u] - mj) * (xj[u] - mj);
    vi += (xi[u] - mi) * (xi[u] - mi);
  }
  if (vj == 0.0 || vi == 0.0) return 0.0;
  return cov / std::sqrt(vj * vi);
}

double pearson_from_counts(double n, double a, double b, double c) {
  const double var = a * (n - a) * b * (n - b);
  if (var <= 0.0) return 0.0;
  return (n * c - a * b) / std::sqrt(var);
}

CooccurrenceStats::CooccurrenceStats(const InteractionLog& log, unsigned threads) {
  const std::size_t items = log.num_items();
  item_counts_ = log.item_user_counts();
  rows_.assign(items, {});

  // Distinct items per user and distinct users per item.
  std::vector<std::vector<ItemId>> user_items(log.num_users());
  for (UserId u = 0; u < log.num_users(); ++u) {
    const auto h = log.history(u);
    if (h.empty()) continue;
    ++users_;
    auto& v = user_items[u];
    for (const auto& r : h) v.push_back(r.item);
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  }
  std::vector<std::vector<UserId>> item_users(items);
  for (UserId u = 0; u < log.num_users(); ++u) {
    for (ItemId i : user_items[u]) item_users[i].push_back(u);
  }

  const unsigned workers = resolve_threads(threads);
  std::vector<std::vector<std::uint32_t>> scratch(workers, std::vector<std::uint32_t>(items, 0));
  std::vector<std::vector<ItemId>> touched(workers);
  // Each worker owns a scratch row; assignment is by index modulo worker count.
  parallel_for(workers, workers, [&](std::size_t w) {
    auto& counts = scratch[w];
    auto& seen = touched[w];
    for (std::size_t j = w; j < items; j += workers) {
      seen.clear();
      for (UserId u : item_users[j]) {
        for (ItemId i : user_items[u]) {
          if (i == j) continue;
          if (counts[i]++ == 0) seen.push_back(i);
        }
      }
      std::sort(seen.begin(), seen.end());
      auto& row = rows_[j];
      row.reserve(seen.size());
      for (ItemId i : seen) {
        row.emplace_back(i, counts[i]);
        counts[i] = 0;
      }
    }
  });
}

std::uint32_t CooccurrenceStats::cocount(ItemId j, ItemId i) const {
  if (j == i) return item_counts_.at(j);
  const auto& row = rows_.at(j);
  auto it = std::lower_bound(row.begin(), row.end(), i, [](const auto& p, ItemId v) { return p.first < v; });
  return (it != row.end() && it->first == i) ? it->second : 0;
}

double CooccurrenceStats::pearson(ItemId j, ItemId i) const {
  return pearson_from_counts(static_cast<double>(users_), item_counts_.at(j), item_counts_.at(i), cocount(j, i));
}

CfMatrix CfMatrix::build(const CooccurrenceStats& stats, const CfConfig& config) {
  CfMatrix m;
  const std::size_t items = stats.num_items();
  m.rows_.assign(items, {});
  parallel_for(items, config.threads, [&](std::size_t j) {
    std::vector<std::pair<ItemId, double>> cand;
    if (config.all_pairs) {
      for (ItemId i = 0; i < items; ++i) {
        if (i != j) cand.emplace_back(i, stats.pearson(static_cast<ItemId>(j), i));
      }
    } else {
      for (const auto& [i, c] : stats.partners(static_cast<ItemId>(j))) cand.emplace_back(i, stats.pearson(static_cast<ItemId>(j), i));
    }
    auto by_sim = [](const auto& a, const auto& b) { return a.second != b.second ? a.second > b.second : a.first < b.first; };
    if (cand.size() > config.k_hat) {
      std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(config.k_hat), cand.end(), by_sim);
      cand.resize(config.k_hat);
    }
    std::sort(cand.begin(), cand.end());
    m.rows_[j] = std::move(cand);
  });
  return m;
}

double CfMatrix::sim(ItemId j, ItemId i) const {
  if (j >= rows_.size()) return 0.0;
  const auto& row = rows_[j];
  auto it = std::lower_bound(row.begin(), row.end(), i, [](const auto& p, ItemId v) { return p.first < v; });
  return (it != row.end() && it->first == i) ? it->second : 0.0;
}

std::vector<std::pair<ItemId, double>> CfMatrix::ranked_row(ItemId j) const {
  auto row = rows_.at(j);
  std::sort(row.begin(), row.end(),
            [](const auto& a, const auto& b) { return a.second != b.second ? a.second > b.second : a.first < b.first; });
  return row;
}

void CfMatrix::export_tsv(const InteractionLog& log, const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << "j\ti\tsim\n";
  char buf[32];
  for (ItemId j = 0; j < rows_.size(); ++j) {
    for (const auto& [i, s] : ranked_row(j)) {
      std::snprintf(buf, sizeof(buf), "%.10g", s);
      out << log.item_name(j) << '\t' << log.item_name(i) << '\t' << buf << '\n';
    }
  }
}

double cf_score(const CfMatrix& matrix, std::span<const ItemId> history, ItemId i) {
  double total = 0.0;
  for (ItemId j : history) total += matrix.sim(j, i);
  return total;
}

}  // namespace pdn
