#include "doctest.h"

#include <cmath>
#include <fstream>
#include <limits>
#include <mutex>
#include <set>

#include "pdn/evaluation.h"
#include "pdn/numeric.h"
#include "test_util.h"

using namespace pdn;
using namespace pdn::test;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Dataset synthetic_dataset(std::size_t users, std::size_t items, std::uint64_t seed) {
  SyntheticConfig c;
  c.users = users;
  c.items = items;
  c.categories = 8;
  c.min_length = 6;
  c.max_length = 60;
  c.seed = seed;
  return split_leave_one_out(generate_synthetic(c));
}

/// Scores through a callback of (user, target of that user, candidate).
class FnMethod : public EvalMethod {
 public:
  using Fn = std::function<double(UserId, ItemId)>;
  FnMethod(const Dataset& d, Fn f, std::string name = "fn") : f_(std::move(f)), name_(std::move(name)) {
    for (const auto& tc : d.test) target_[tc.user] = tc.target;
  }
  std::string name() const override { return name_; }
  bool knows_user(UserId) const override { return true; }
  void score(UserId u, std::span<const Interaction>, std::span<const ItemId> cands, std::span<double> out) const override {
    for (std::size_t c = 0; c < cands.size(); ++c) out[c] = f_(u, cands[c]);
  }
  ItemId target(UserId u) const { return target_.at(u); }

 private:
  Fn f_;
  std::string name_;
  std::map<UserId, ItemId> target_;
};

double hash_uniform(UserId u, ItemId i, std::uint64_t salt) {
  std::uint64_t x = (static_cast<std::uint64_t>(u) << 32) ^ i ^ (salt * 0x9E3779B97F4A7C15ULL);
  x ^= x >> 33;
  x *= 0xff51afd7ed558ccdULL;
  x ^= x >> 33;
  x *= 0xc4ceb9fe1a85ec53ULL;
  x ^= x >> 33;
  return static_cast<double>(x >> 11) / 9007199254740992.0;
}

}  // namespace

TEST_CASE("hit and ndcg examples") {
  const std::vector<ItemId> ranked{5, 9, 2, 7, 1, 3, 4, 8, 6, 0, 11, 12};
  auto at = [&](ItemId t, std::size_t K) { return hr_ndcg(ranked, t, K); };
  CHECK(at(5, 10).hr == 1);
  CHECK(at(5, 10).ndcg == 1.0);
  CHECK(at(7, 10).hr == 1);
  CHECK(at(7, 10).ndcg == doctest::Approx(0.4307).epsilon(1e-4));
  CHECK(at(0, 10).hr == 1);
  CHECK(at(0, 10).ndcg == doctest::Approx(1.0 / std::log2(11.0)));
  CHECK(at(11, 10).hr == 0);
  CHECK(at(11, 10).ndcg == 0.0);
  CHECK(at(99, 10).hr == 0);
  CHECK(at(9, 1).hr == 0);
  CHECK_THROWS_AS(at(5, 0), ConfigError);
  CHECK(hr_ndcg_at_rank(4, 10).ndcg == doctest::Approx(1.0 / std::log2(5.0)));
  CHECK(hr_ndcg_at_rank(0, 10).hr == 0);
}

TEST_CASE("ndcg never exceeds hr") {
  std::mt19937_64 rng(9);
  for (int t = 0; t < 2000; ++t) {
    const std::size_t K = 1 + rng() % 50, rank = 1 + rng() % 120;
    const auto m = hr_ndcg_at_rank(rank, K);
    CHECK(m.ndcg <= m.hr);
    CHECK(m.ndcg >= 0.0);
    CHECK(m.hr == (rank <= K ? 1 : 0));
    if (m.hr) CHECK(m.ndcg == doctest::Approx(std::log(2.0) / std::log(static_cast<double>(rank) + 1)));
  }
}

TEST_CASE("protocol labels and parsing") {
  CHECK(Protocol::all_items().label() == "all");
  CHECK(Protocol::sampled(100, 1).label() == "sampled-100");
  CHECK(Protocol::parse("sampled", 4).negatives == 100);
  CHECK(Protocol::parse("sampled-20", 4).negatives == 20);
  CHECK(Protocol::parse("sampled-20", 4).seed == 4);
  CHECK(Protocol::parse("all", 4).kind == Protocol::Kind::all);
  CHECK_THROWS_AS(Protocol::parse("sampled-0", 1), ConfigError);
  CHECK_THROWS_AS(Protocol::parse("sampled-x", 1), ConfigError);
  CHECK_THROWS_AS(Protocol::parse("top", 1), ConfigError);
}

TEST_CASE("perfect and inverted oracles reach the extremes") {
  const auto data = synthetic_dataset(60, 120, 3);
  FnMethod* self = nullptr;
  FnMethod perfect(data, [&](UserId u, ItemId i) { return i == self->target(u) ? 1.0 : 0.0; });
  self = &perfect;
  FnMethod inverted(data, [&](UserId u, ItemId i) { return i == self->target(u) ? -1.0 : 0.0; });
  for (const auto& p : {Protocol::sampled(100, 2), Protocol::all_items()}) {
    const auto good = evaluate(perfect, data, p, EvalOptions{});
    CHECK(good.cases == data.test.size());
    CHECK(good.hr == 1.0);
    CHECK(good.ndcg == 1.0);
    const auto bad = evaluate(inverted, data, p, EvalOptions{});
    CHECK(bad.hr == 0.0);
    CHECK(bad.ndcg == 0.0);
  }
}

TEST_CASE("ties and unretrievable scores count against the target") {
  const auto data = synthetic_dataset(30, 400, 4);
  const FnMethod flat(data, [](UserId, ItemId) { return 0.5; });
  std::vector<CaseResult> cases;
  const auto rep = evaluate(flat, data, Protocol::sampled(100, 1), EvalOptions{}, &cases);
  CHECK(rep.hr == 0.0);
  for (const auto& c : cases) CHECK(c.rank == 101);
  const FnMethod none(data, [](UserId, ItemId) { return -kInf; });
  CHECK(evaluate(none, data, Protocol::sampled(100, 1), EvalOptions{}).hr == 0.0);
}

TEST_CASE("random scorer lands near K over negatives plus one") {
  const auto data = synthetic_dataset(1500, 400, 5);
  const FnMethod random(data, [](UserId u, ItemId i) { return hash_uniform(u, i, 17); });
  const auto rep = evaluate(random, data, Protocol::sampled(100, 8), EvalOptions{});
  const double p = 10.0 / 101.0;
  const double sigma = std::sqrt(p * (1 - p) / static_cast<double>(rep.cases));
  MESSAGE("random HR@10 " << rep.hr << " expected " << p << " sigma " << sigma);
  CHECK(std::abs(rep.hr - p) < 3 * sigma);
  double ndcg = 0;
  for (int r = 1; r <= 10; ++r) ndcg += 1.0 / std::log2(r + 1.0) / 101.0;
  CHECK(rep.ndcg == doctest::Approx(ndcg).epsilon(0.15));
  CHECK(rep.ndcg <= rep.hr);
}

TEST_CASE("sampled candidates exclude history and are reproducible") {
  const auto data = synthetic_dataset(40, 200, 6);
  struct Recorder : EvalMethod {
    mutable std::mutex mu;
    mutable std::map<UserId, std::vector<ItemId>> seen;
    std::string name() const override { return "rec"; }
    bool knows_user(UserId) const override { return true; }
    void score(UserId u, std::span<const Interaction>, std::span<const ItemId> c, std::span<double> out) const override {
      std::lock_guard lock(mu);
      seen[u].assign(c.begin(), c.end());
      for (auto& o : out) o = 0;
    }
  };
  Recorder a, b, c;
  evaluate(a, data, Protocol::sampled(50, 11), EvalOptions{});
  evaluate(b, data, Protocol::sampled(50, 11), EvalOptions{10, 1, {}});
  evaluate(c, data, Protocol::sampled(50, 12), EvalOptions{});
  CHECK(a.seen == b.seen);
  CHECK(a.seen != c.seen);
  for (const auto& tc : data.test) {
    const auto& cands = a.seen.at(tc.user);
    REQUIRE(cands.size() == 51);
    CHECK(cands[0] == tc.target);
    const std::set<ItemId> uniq(cands.begin(), cands.end());
    CHECK(uniq.size() == 51);
    for (const auto& r : data.train.history(tc.user)) {
      if (r.item != tc.target) CHECK(uniq.count(r.item) == 0);
    }
  }
}

TEST_CASE("more negatives never improve a rank") {
  const auto data = synthetic_dataset(200, 150, 7);
  const FnMethod random(data, [](UserId u, ItemId i) { return hash_uniform(u, i, 3); });
  std::vector<CaseResult> s, all;
  const auto rs = evaluate(random, data, Protocol::sampled(60, 2), EvalOptions{}, &s);
  const auto ra = evaluate(random, data, Protocol::all_items(), EvalOptions{}, &all);
  REQUIRE(s.size() == all.size());
  for (std::size_t c = 0; c < s.size(); ++c) CHECK(all[c].rank >= s[c].rank);
  CHECK(ra.hr <= rs.hr);
  CHECK(ra.ndcg <= rs.ndcg);
}

TEST_CASE("unknown users are skipped and subsets restrict the cases") {
  const auto data = synthetic_dataset(30, 100, 8);
  struct Half : EvalMethod {
    std::string name() const override { return "half"; }
    bool knows_user(UserId u) const override { return u % 2 == 0; }
    void score(UserId, std::span<const Interaction>, std::span<const ItemId>, std::span<double> out) const override {
      for (auto& o : out) o = 0;
    }
  } half;
  const auto rep = evaluate(half, data, Protocol::sampled(10, 1), EvalOptions{});
  CHECK(rep.cases == 15);
  CHECK(rep.skipped == 15);
  EvalOptions o;
  o.subset = {0, 2, 4};
  CHECK(evaluate(half, data, Protocol::sampled(10, 1), o).cases + evaluate(half, data, Protocol::sampled(10, 1), o).skipped == 3);
}

TEST_CASE("diversity and length buckets match a direct computation") {
  const auto data = synthetic_dataset(80, 100, 9);
  const FnMethod by_id(data, [](UserId, ItemId i) { return -static_cast<double>(i); });
  const auto rep = evaluate(by_id, data, Protocol::all_items(), EvalOptions{});
  const auto& log = data.train;
  double div = 0;
  std::array<std::size_t, 4> counts{};
  for (const auto& tc : data.test) {
    std::set<ItemId> hist;
    for (const auto& r : log.history(tc.user)) hist.insert(r.item);
    std::set<std::int32_t> cats;
    std::size_t taken = 0;
    for (ItemId i = 0; i < log.num_items() && taken < 10; ++i) {
      if (hist.count(i) && i != tc.target) continue;
      cats.insert(log.category(i));
      ++taken;
    }
    div += static_cast<double>(cats.size()) / static_cast<double>(log.num_categories());
    const auto len = log.history(tc.user).size();
    ++counts[len <= 15 ? 0 : len <= 30 ? 1 : len <= 45 ? 2 : 3];
  }
  CHECK(rep.diversity == doctest::Approx(div / static_cast<double>(data.test.size())));
  REQUIRE(rep.buckets.size() == 4);
  std::size_t total = 0;
  for (std::size_t b = 0; b < 4; ++b) {
    CHECK(rep.buckets[b].cases == counts[b]);
    total += rep.buckets[b].cases;
  }
  CHECK(total == rep.cases);
}

TEST_CASE("report files label each protocol") {
  const auto data = synthetic_dataset(20, 80, 10);
  const FnMethod random(data, [](UserId u, ItemId i) { return hash_uniform(u, i, 1); }, "rand");
  const std::vector<EvalReport> reps{evaluate(random, data, Protocol::all_items(), EvalOptions{}),
                                     evaluate(random, data, Protocol::sampled(100, 1), EvalOptions{})};
  const auto dir = temp_dir("eval_report");
  write_report_tsv(reps, dir / "report.tsv");
  std::ifstream in(dir / "report.tsv");
  std::string line;
  std::size_t rows = 0, all_rows = 0, sampled_rows = 0;
  std::getline(in, line);
  CHECK(line.rfind("method\tprotocol", 0) == 0);
  while (std::getline(in, line)) {
    ++rows;
    all_rows += line.find("\tall\t") != std::string::npos && line.rfind("rand\tall", 0) == 0;
    sampled_rows += line.rfind("rand\tsampled-100", 0) == 0;
  }
  CHECK(rows == 10);
  CHECK(all_rows == 5);
  CHECK(sampled_rows == 5);
  const auto text = format_summary(reps);
  CHECK(text.find("[all]") != std::string::npos);
  CHECK(text.find("[sampled-100]") != std::string::npos);
}

TEST_CASE("model-backed methods agree with the model and the retriever") {
  const auto toy = make_toy(25, 70, 5, 51, 8, 20);
  const auto& enc = *toy->encoder;
  const auto& data = toy->data;
  const PdnScoreMethod full(enc, 6);
  IndexConfig cfg;
  cfg.k = 10;
  const auto idx = build_index(enc, generate_candidate_pairs(toy->log(), cfg), cfg.k, 1);
  const Retriever r(enc, idx);
  const PdnRetrievalMethod greedy(r, 4);
  for (const auto& tc : data.test) {
    const auto h = toy->log().history(tc.user);
    std::vector<ItemId> cands;
    for (ItemId i = 0; i < toy->log().num_items(); ++i) cands.push_back(i);
    std::vector<double> a(cands.size()), b(cands.size());
    full.score(tc.user, h, cands, a);
    greedy.score(tc.user, h, cands, b);
    const auto got = r.retrieve(tc.user, h, 4, cands.size());
    std::map<ItemId, double> ret;
    for (const auto& it : got.items) ret[it.item] = it.score;
    std::set<ItemId> hist;
    for (const auto& x : h) hist.insert(x.item);
    for (ItemId i : cands) {
      if (hist.count(i)) continue;
      const double want = enc.model().score(enc.input(tc.user, h, h.size(), i, 6, std::nullopt)).total;
      CHECK(std::abs(a[i] - want) <= 1e-12 * std::max(1.0, want));
      if (ret.count(i)) {
        CHECK(b[i] == ret[i]);
      } else {
        CHECK(b[i] == -kInf);
      }
    }
  }
}

TEST_CASE("index similarity sums softplus over matched history items") {
  const auto toy = make_toy(6, 10, 2, 53);
  std::vector<std::vector<Neighbor>> lists(10);
  lists[1] = {{4, 1.0}, {5, -2.0}};
  lists[2] = {{4, 0.5}};
  const SimIndex idx(IndexHeader{toy->model->id(), 2, 0, 0}, std::move(lists));
  const IndexSimilarity sim(idx);
  const std::vector<ItemId> h{1, 2, 3};
  CHECK(std::abs(sim.item_to_item(h, 4) - (softplus(1.0) + softplus(0.5))) < 1e-15);
  CHECK(std::abs(sim.item_to_item(h, 5) - softplus(-2.0)) < 1e-15);
  CHECK(sim.item_to_item(h, 6) == -kInf);
  CHECK(sim.item_to_item(h, 99) == -kInf);
  CHECK(sim.item_to_item(std::vector<ItemId>{3}, 4) == -kInf);
}
