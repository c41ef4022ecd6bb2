#include "doctest.h"

#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "pdn/training.h"
#include "test_util.h"

using namespace pdn;
using namespace pdn::test;

namespace {

std::filesystem::path write_file(const std::filesystem::path& dir, const std::string& name, const std::string& text) {
  const auto p = dir / name;
  std::ofstream(p) << text;
  return p;
}

std::vector<double> snapshot(const PdnModel& m) {
  std::vector<double> out;
  for (const auto& p : m.params()) out.insert(out.end(), p.value.begin(), p.value.end());
  return out;
}

}  // namespace

TEST_CASE("load_log counts a hand-written toy file") {
  const auto dir = temp_dir("load_log");
  const auto path = write_file(dir, "toy.tsv",
                               "user_id\titem_id\ttimestamp\tcategory\n"
                               "u1\ta\t30\tx\n"
                               "u1\tb\t10\ty\n"
                               "u1\tc\t20\tx\n"
                               "u2\ta\t5\tx\n"
                               "u2\td\t6\ty\n"
                               "\n"
                               "u3\te\t1\tz\n");
  LoadOptions opt;
  opt.min_interactions = 1;
  const auto log = load_log(path, LogFormat::tsv, opt);
  CHECK(log.num_users() == 3);
  CHECK(log.num_items() == 5);
  CHECK(log.size() == 6);
  CHECK(log.num_categories() == 3);
  const auto h = log.history(*log.find_user("u1"));
  REQUIRE(h.size() == 3);
  CHECK(log.item_name(h[0].item) == "b");
  CHECK(log.item_name(h[1].item) == "c");
  CHECK(log.item_name(h[2].item) == "a");
  for (UserId u = 0; u < log.num_users(); ++u) {
    const auto hu = log.history(u);
    for (std::size_t k = 1; k < hu.size(); ++k) CHECK(hu[k - 1].timestamp <= hu[k].timestamp);
  }

  opt.min_interactions = 2;
  const auto filtered = load_log(path, LogFormat::tsv, opt);
  CHECK(filtered.num_users() == 2);
  CHECK(filtered.size() == 5);
  CHECK(filtered.stats().dropped_users == 1);
  std::filesystem::remove_all(dir);
}

TEST_CASE("load_log filters short users and reports errors") {
  const auto dir = temp_dir("load_log_err");
  std::string five;
  for (int k = 0; k < 5; ++k) five += "u\ti" + std::to_string(k) + "\t" + std::to_string(k) + "\n";
  const auto short_user = write_file(dir, "short.tsv", five);
  try {
    load_log(short_user, LogFormat::tsv);
    FAIL("expected an empty-dataset error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("empty dataset") != std::string::npos);
  }
  const auto bad = write_file(dir, "bad.tsv", "u\ta\t1\nu\tb\tnoon\n");
  try {
    load_log(bad, LogFormat::tsv, LoadOptions{1});
    FAIL("expected a malformed-row error");
  } catch (const DataError& e) {
    CHECK(e.line() == 2);
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  const auto narrow = write_file(dir, "narrow.tsv", "u\ta\t1\nu\tb\n");
  CHECK_THROWS_AS(load_log(narrow, LogFormat::tsv, LoadOptions{1}), DataError);
  CHECK_THROWS_AS(load_log(dir / "missing.tsv", LogFormat::tsv), DataError);
  const auto empty = write_file(dir, "empty.tsv", "");
  CHECK_THROWS_AS(load_log(empty, LogFormat::tsv), DataError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("extra behavior columns are read by header name") {
  const auto dir = temp_dir("extras");
  const auto path = write_file(dir, "x.tsv",
                               "user_id\titem_id\ttimestamp\tcategory\tdwell\n"
                               "u\ta\t1\tc\t2.5\n"
                               "u\tb\t2\tc\t7\n");
  const auto log = load_log(path, LogFormat::tsv, LoadOptions{1});
  REQUIRE(log.extra_columns() == 1);
  CHECK(log.extra_names()[0] == "dwell");
  CHECK(log.extras(log.history(0)[1])[0] == 7.0);
  std::filesystem::remove_all(dir);
}

TEST_CASE("leave-one-out split") {
  LogBuilder b;
  b.add(RawInteraction{"u1", "a", 1, std::nullopt, {}});
  b.add(RawInteraction{"u1", "c", 3, std::nullopt, {}});
  b.add(RawInteraction{"u1", "b", 2, std::nullopt, {}});
  b.add(RawInteraction{"u2", "a", 5, std::nullopt, {}});
  b.add(RawInteraction{"u2", "d", 9, std::nullopt, {}});
  const auto log = b.build(1);
  const auto ds = split_leave_one_out(log);
  REQUIRE(ds.test.size() == 2);
  const UserId u1 = *log.find_user("u1");
  for (const auto& t : ds.test) {
    if (t.user == u1) {
      CHECK(log.item_name(t.target) == "c");
      CHECK(t.timestamp == 3);
    } else {
      CHECK(log.item_name(t.target) == "d");
    }
  }
  const auto h = ds.train.history(u1);
  REQUIRE(h.size() == 2);
  CHECK(log.item_name(h[0].item) == "a");
  CHECK(log.item_name(h[1].item) == "b");
  CHECK(ds.train.num_items() == log.num_items());

  const auto toy = make_toy(30, 50, 5, 3);
  CHECK(toy->data.test.size() == toy->log().num_users());
}

TEST_CASE("sample_negatives") {
  LogBuilder b;
  for (int k = 0; k < 12; ++k) b.add(RawInteraction{"all", "i" + std::to_string(k), k, std::nullopt, {}});
  b.add(RawInteraction{"few", "i0", 0, std::nullopt, {}});
  b.add(RawInteraction{"few", "i1", 1, std::nullopt, {}});
  const auto log = b.build(1);
  const UserId all = *log.find_user("all"), few = *log.find_user("few");
  CHECK(sample_negatives(log, all, 3, 5).empty());
  CHECK(sample_negatives(log, few, 4, 9) == sample_negatives(log, few, 4, 9));
  CHECK_THROWS_AS(sample_negatives(log, few, 0, 1), ConfigError);

  const auto every = sample_negatives(log, few, 100, 2);
  CHECK(every.size() == 10);
  const ItemId i5 = *log.find_item("i5");
  const ItemId ex[1] = {i5};
  std::mt19937_64 rng(4);
  for (int k = 0; k < 200; ++k) {
    const auto s = sample_negatives(log, few, 4, rng, ex);
    CHECK(s.size() == 4);
    CHECK(std::set<ItemId>(s.begin(), s.end()).size() == 4);
    for (ItemId i : s) {
      CHECK(i != i5);
      CHECK(log.item_name(i) != "i0");
      CHECK(log.item_name(i) != "i1");
    }
  }

  // 10 eligible items, 1e5 single draws against the multinomial expectation of 1e4 each
  std::mt19937_64 rng2(77);
  std::map<ItemId, int> freq;
  const int draws = 100000;
  for (int k = 0; k < draws; ++k) ++freq[sample_negatives(log, few, 1, rng2)[0]];
  CHECK(freq.size() == 10);
  const double p = 0.1, mean = draws * p, sigma = std::sqrt(draws * p * (1 - p));
  double chi2 = 0;
  int beyond3 = 0;
  for (const auto& [item, n] : freq) {
    chi2 += (n - mean) * (n - mean) / mean;
    beyond3 += std::abs(n - mean) > 3 * sigma ? 1 : 0;
    CHECK(std::abs(n - mean) <= 4.5 * sigma);
  }
  // 99.9% quantile of chi-square with 9 degrees of freedom
  CHECK(chi2 < 27.88);
  CHECK(beyond3 <= 1);
}

TEST_CASE("training examples never use the held-out item and triggers precede the target") {
  const auto toy = make_toy(40, 80, 6, 11);
  TrainConfig cfg;
  cfg.negatives = 4;
  std::mt19937_64 rng(1);
  const auto ex = build_examples(toy->log(), toy->data.test, cfg, rng);
  std::vector<ItemId> held(toy->log().num_users());
  for (const auto& t : toy->data.test) held[t.user] = t.target;
  std::size_t pos = 0, neg = 0;
  for (const auto& e : ex) {
    CHECK(e.target != held[e.user]);
    const auto h = toy->log().history(e.user);
    if (e.label == 1) {
      ++pos;
      CHECK(h[e.anchor].item == e.target);
    } else {
      ++neg;
      for (const auto& r : h) CHECK(r.item != e.target);
    }
    for (std::size_t p : ContextEncoder::trigger_positions(h, e.anchor, e.target, cfg.n_max)) {
      CHECK(p < e.anchor);
      CHECK(h[p].item != e.target);
    }
  }
  CHECK(pos == toy->log().size());
  CHECK(neg == 4 * pos);
}

TEST_CASE("trigger positions keep the most recent n_max") {
  std::vector<Interaction> h;
  for (ItemId i = 0; i < 10; ++i) h.push_back(Interaction{0, i % 6, static_cast<std::int64_t>(i), 0});
  CHECK(ContextEncoder::trigger_positions(h, 8, 99, 3) == std::vector<std::size_t>{5, 6, 7});
  CHECK(ContextEncoder::trigger_positions(h, 8, 1, 3) == std::vector<std::size_t>{4, 5, 6});
  CHECK(ContextEncoder::trigger_positions(h, 8, 5, 3) == std::vector<std::size_t>{4, 6, 7});
  CHECK(ContextEncoder::trigger_positions(h, 0, 99, 3).empty());
  CHECK(ContextEncoder::trigger_positions(h, 3, 99, 0) == std::vector<std::size_t>{0, 1, 2});
}

TEST_CASE("one epoch on a small set lowers the loss") {
  const auto toy = make_toy(5, 20, 3, 2, 3, 4);
  TrainConfig cfg;
  cfg.negatives = 1;
  cfg.batch_size = 2;
  cfg.adam.lr = 0.01;
  cfg.epochs = 1;
  std::mt19937_64 rng(3);
  auto ex = build_examples(toy->log(), toy->data.test, cfg, rng);
  ex.resize(10);
  const double before = evaluate_mean_loss(*toy->encoder, ex, cfg);
  const auto r = train_examples(*toy->model, *toy->encoder, ex, cfg);
  CHECK(r.initial_loss == before);
  CHECK(evaluate_mean_loss(*toy->encoder, ex, cfg) < before);
  CHECK(r.examples_per_epoch == 10);
  REQUIRE(r.epoch_loss.size() == 1);
}

TEST_CASE("zero learning rate leaves parameters bit-identical") {
  const auto toy = make_toy(10, 30, 3, 5);
  const auto before = snapshot(*toy->model);
  const auto id = toy->model->id();
  TrainConfig cfg;
  cfg.adam.lr = 0.0;
  cfg.epochs = 2;
  cfg.batch_size = 16;
  train(*toy->model, *toy->encoder, toy->data, cfg);
  CHECK(snapshot(*toy->model) == before);
  CHECK(toy->model->id() == id);
}

TEST_CASE("fifty examples are memorized") {
  const auto toy = make_toy(10, 40, 4, 8);
  TrainConfig cfg;
  cfg.negatives = 1;
  cfg.batch_size = 10;
  cfg.adam.lr = 0.01;
  cfg.epochs = 200;
  std::mt19937_64 rng(6);
  auto ex = build_examples(toy->log(), toy->data.test, cfg, rng);
  REQUIRE(ex.size() >= 50);
  ex.resize(50);
  train_examples(*toy->model, *toy->encoder, ex, cfg);
  CHECK(evaluate_mean_loss(*toy->encoder, ex, cfg) < 0.05);
}

TEST_CASE("training is deterministic for a fixed seed") {
  const auto a = make_toy(15, 40, 4, 21);
  const auto b = make_toy(15, 40, 4, 21);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 32;
  const auto ra = train(*a->model, *a->encoder, a->data, cfg);
  const auto rb = train(*b->model, *b->encoder, b->data, cfg);
  CHECK(ra.epoch_loss == rb.epoch_loss);
  CHECK(snapshot(*a->model) == snapshot(*b->model));
  cfg.seed = 2;
  const auto c = make_toy(15, 40, 4, 21);
  train(*c->model, *c->encoder, c->data, cfg);
  CHECK(snapshot(*c->model) != snapshot(*a->model));
}

TEST_CASE("a non-finite loss aborts and dumps the batch") {
  const auto toy = make_toy(6, 20, 3, 9);
  for (auto& p : toy->model->params()) {
    if (p.name == "trig.b" + std::to_string(toy->model->trig_net().layers() - 1)) p.value[0] = std::nan("");
  }
  toy->model->params().touch();
  const auto dir = temp_dir("nonfinite");
  TrainConfig cfg;
  cfg.debug_dir = dir;
  cfg.epochs = 1;
  CHECK_THROWS_AS(train(*toy->model, *toy->encoder, toy->data, cfg), NonFiniteError);
  CHECK(std::filesystem::exists(dir / "nonfinite_batch.json"));
  std::ifstream in(dir / "nonfinite_batch.json");
  const auto j = nlohmann::json::parse(in);
  CHECK_FALSE(j.at("examples").empty());
  std::filesystem::remove_all(dir);
}

TEST_CASE("train config json round trip") {
  TrainConfig c;
  c.epochs = 7;
  c.adam.lr = 0.003;
  c.negatives = 2;
  c.n_max = 12;
  c.use_bias = false;
  const auto back = TrainConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
  CHECK(back.adam.lr == 0.003);
  CHECK(back.n_max == 12);
}
