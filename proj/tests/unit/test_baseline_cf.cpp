#include "doctest.h"

#include <cmath>
#include <fstream>
#include <random>
#include <set>

#include "pdn/baseline_cf.h"
#include "test_util.h"

using namespace pdn;
using namespace pdn::test;

namespace {

InteractionLog log_from(const std::vector<std::pair<std::string, std::string>>& rows) {
  LogBuilder b;
  std::int64_t t = 0;
  for (const auto& [u, i] : rows) b.add(RawInteraction{u, i, t++, std::nullopt, {}});
  return b.build(1);
}

// Textbook two-pass Pearson over 0/1 columns.
double oracle_pearson(const std::vector<int>& x, const std::vector<int>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    mx += x[k];
    my += y[k];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    sxy += (x[k] - mx) * (y[k] - my);
    sxx += (x[k] - mx) * (x[k] - mx);
    syy += (y[k] - my) * (y[k] - my);
  }
  if (sxx == 0 || syy == 0) return 0;
  return sxy / std::sqrt(sxx * syy);
}

InteractionLog random_log(std::uint64_t seed, std::size_t users, std::size_t items, std::size_t per_user) {
  std::mt19937_64 rng(seed);
  std::vector<std::pair<std::string, std::string>> rows;
  for (std::size_t u = 0; u < users; ++u) {
    for (std::size_t k = 0; k < per_user; ++k) rows.emplace_back("u" + std::to_string(u), "i" + std::to_string(rng() % items));
  }
  return log_from(rows);
}

std::vector<int> column(const InteractionLog& log, ItemId i) {
  std::vector<int> c(log.num_users(), 0);
  for (const auto& r : log.records()) {
    if (r.item == i) c[r.user] = 1;
  }
  return c;
}

}  // namespace

TEST_CASE("pearson examples") {
  // identical columns
  auto log = log_from({{"u1", "a"}, {"u1", "b"}, {"u2", "a"}, {"u2", "b"}, {"u3", "c"}});
  const ItemId a = *log.find_item("a"), b = *log.find_item("b"), c = *log.find_item("c");
  CHECK(pearson_sim(log, a, b) == doctest::Approx(1.0).epsilon(1e-12));

  // disjoint user sets over 4 users, 2 interactions each
  auto dis = log_from({{"u1", "x"}, {"u2", "x"}, {"u3", "y"}, {"u4", "y"}});
  CHECK(pearson_sim(dis, *dis.find_item("x"), *dis.find_item("y")) == doctest::Approx(-1.0).epsilon(1e-12));

  // constant column
  auto all = log_from({{"u1", "p"}, {"u2", "p"}, {"u3", "p"}, {"u1", "q"}});
  CHECK(pearson_sim(all, *all.find_item("p"), *all.find_item("q")) == 0.0);

  CHECK_THROWS_AS(pearson_sim(log, a, 77), UnknownEntityError);
  CHECK(pearson_sim(log, a, c) == doctest::Approx(oracle_pearson(column(log, a), column(log, c))));
}

TEST_CASE("pearson from counts agrees with the direct computation and is symmetric") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto log = random_log(seed, 25, 15, 6);
    const CooccurrenceStats stats(log);
    for (ItemId j = 0; j < log.num_items(); ++j) {
      for (ItemId i = 0; i < log.num_items(); ++i) {
        if (i == j) continue;
        const double direct = pearson_sim(log, j, i);
        CHECK(direct == pearson_sim(log, i, j));
        CHECK(stats.pearson(j, i) == stats.pearson(i, j));
        CHECK(std::abs(direct - oracle_pearson(column(log, j), column(log, i))) < 1e-12);
        CHECK(std::abs(stats.pearson(j, i) - direct) < 1e-12);
        CHECK(direct >= -1.0 - 1e-12);
        CHECK(direct <= 1.0 + 1e-12);
      }
    }
  }
}

TEST_CASE("co-occurrence counts distinct users") {
  auto log = log_from({{"u1", "a"}, {"u1", "a"}, {"u1", "b"}, {"u2", "a"}, {"u2", "b"}, {"u3", "b"}});
  const CooccurrenceStats stats(log);
  const ItemId a = *log.find_item("a"), b = *log.find_item("b");
  CHECK(stats.cocount(a, b) == 2);
  CHECK(stats.cocount(b, a) == 2);
  CHECK(stats.item_count(a) == 2);
  CHECK(stats.item_count(b) == 3);
  CHECK(stats.num_users() == 3);
  const CooccurrenceStats threaded(log, 4);
  CHECK(threaded.cocount(a, b) == 2);
}

TEST_CASE("cf_score examples") {
  auto log = log_from({{"u1", "a"}, {"u1", "b"}, {"u1", "c"}, {"u2", "a"}, {"u2", "d"}, {"u3", "b"}, {"u3", "d"},
                       {"u4", "c"}, {"u4", "e"}, {"u5", "d"}, {"u5", "e"}});
  const CooccurrenceStats stats(log);
  CfConfig cfg;
  cfg.all_pairs = true;
  const auto m = CfMatrix::build(stats, cfg);
  const ItemId a = *log.find_item("a"), b = *log.find_item("b"), c = *log.find_item("c"), d = *log.find_item("d");
  const std::vector<ItemId> none;
  CHECK(cf_score(m, none, d) == 0.0);
  const std::vector<ItemId> one{a};
  CHECK(cf_score(m, one, d) == doctest::Approx(pearson_sim(log, a, d)));
  const std::vector<ItemId> three{a, b, c};
  const double hand = oracle_pearson(column(log, a), column(log, d)) + oracle_pearson(column(log, b), column(log, d)) +
                      oracle_pearson(column(log, c), column(log, d));
  CHECK(std::abs(cf_score(m, three, d) - hand) < 1e-12);
  // the history item itself contributes nothing (diagonal excluded)
  const std::vector<ItemId> self{d};
  CHECK(cf_score(m, self, d) == 0.0);
}

TEST_CASE("cf_score matches a brute-force double loop and is additive") {
  for (std::uint64_t seed = 10; seed < 14; ++seed) {
    const auto log = random_log(seed, 30, 20, 5);
    const CooccurrenceStats stats(log);
    CfConfig cfg;
    cfg.all_pairs = true;
    cfg.k_hat = 1000;
    const auto m = CfMatrix::build(stats, cfg);
    std::mt19937_64 rng(seed);
    for (int q = 0; q < 30; ++q) {
      std::vector<ItemId> hist(rng() % 8);
      for (auto& h : hist) h = static_cast<ItemId>(rng() % log.num_items());
      const ItemId target = static_cast<ItemId>(rng() % log.num_items());
      double brute = 0;
      for (ItemId j : hist) {
        if (j != target) brute += oracle_pearson(column(log, j), column(log, target));
      }
      CHECK(std::abs(cf_score(m, hist, target) - brute) < 1e-12);
      const std::size_t cut = hist.empty() ? 0 : rng() % hist.size();
      const std::span<const ItemId> all(hist);
      const double parts = cf_score(m, all.subspan(0, cut), target) + cf_score(m, all.subspan(cut), target);
      CHECK(std::abs(cf_score(m, hist, target) - parts) < 1e-12);
    }
  }
}

TEST_CASE("cf matrix truncation keeps the top k-hat per row") {
  const auto log = random_log(3, 40, 25, 6);
  const CooccurrenceStats stats(log);
  CfConfig full;
  full.all_pairs = true;
  full.k_hat = 1000;
  const auto big = CfMatrix::build(stats, full);
  CfConfig cut = full;
  cut.k_hat = 5;
  cut.threads = 3;
  const auto small = CfMatrix::build(stats, cut);
  for (ItemId j = 0; j < log.num_items(); ++j) {
    const auto want = big.ranked_row(j);
    const auto got = small.ranked_row(j);
    REQUIRE(got.size() == std::min<std::size_t>(5, want.size()));
    for (std::size_t k = 0; k < got.size(); ++k) {
      CHECK(got[k].first == want[k].first);
      CHECK(got[k].second == want[k].second);
      CHECK(got[k].first != j);
    }
    // symmetric where both entries are kept
    for (const auto& [i, s] : got) {
      if (small.sim(i, j) != 0.0) CHECK(small.sim(i, j) == s);
    }
  }

  // default build only scores co-occurring pairs; missing ones read as 0
  const auto sparse = CfMatrix::build(stats, CfConfig{});
  for (ItemId j = 0; j < log.num_items(); ++j) {
    std::set<ItemId> partners;
    for (const auto& [i, c] : stats.partners(j)) partners.insert(i);
    for (const auto& [i, s] : sparse.ranked_row(j)) CHECK(partners.count(i) == 1);
    for (ItemId i = 0; i < log.num_items(); ++i) {
      if (!partners.count(i)) CHECK(sparse.sim(j, i) == 0.0);
    }
  }
}

TEST_CASE("cf export writes one line per retained pair") {
  auto log = log_from({{"u1", "a"}, {"u1", "b"}, {"u2", "a"}, {"u2", "c"}, {"u3", "d"}});
  const CooccurrenceStats stats(log);
  const auto m = CfMatrix::build(stats, CfConfig{});
  const auto dir = temp_dir("cf_export");
  m.export_tsv(log, dir / "cf.tsv");
  std::ifstream in(dir / "cf.tsv");
  std::string line;
  std::getline(in, line);
  CHECK(line == "j\ti\tsim");
  std::size_t n = 0;
  while (std::getline(in, line)) ++n;
  std::size_t expected = 0;
  for (ItemId j = 0; j < log.num_items(); ++j) expected += m.ranked_row(j).size();
  CHECK(n == expected);
  CHECK(n == 4);
  std::filesystem::remove_all(dir);
}
