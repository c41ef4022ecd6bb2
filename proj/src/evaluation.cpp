#include "pdn/evaluation.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <unordered_map>

#include "pdn/numeric.h"
#include "pdn/parallel.h"
#include "pdn/training.h"

namespace pdn {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

HitNdcg hr_ndcg_at_rank(std::size_t rank, std::size_t K) {
  if (K == 0) throw ConfigError("K must be >= 1");
  if (rank == 0 || rank > K) return {};
  return HitNdcg{1, 1.0 / std::log2(static_cast<double>(rank) + 1.0)};
}

HitNdcg hr_ndcg(std::span<const ItemId> ranked, ItemId target, std::size_t K) {
  if (K == 0) throw ConfigError("K must be >= 1");
  const auto it = std::find(ranked.begin(), ranked.end(), target);
  if (it == ranked.end()) return {};
  return hr_ndcg_at_rank(static_cast<std::size_t>(it - ranked.begin()) + 1, K);
}

std::string Protocol::label() const {
  if (kind == Kind::all) return "all";
  return "sampled-" + std::to_string(negatives);
}

Protocol Protocol::parse(const std::string& text, std::uint64_t seed) {
  if (text == "all") return all_items();
  if (text == "sampled") return sampled(100, seed);
  if (text.rfind("sampled-", 0) == 0 || text.rfind("sampled:", 0) == 0) {
    try {
      const auto n = std::stoul(text.substr(8));
      if (n == 0) throw ConfigError("sampled protocol needs at least one negative");
      return sampled(n, seed);
    } catch (const std::logic_error&) {
    }
  }
  throw ConfigError("unknown evaluation protocol '" + text + "' (use all, sampled or sampled-N)");
}

PdnScoreMethod::PdnScoreMethod(const ContextEncoder& encoder, std::size_t n_max, const TowerCache* towers)
    : encoder_(&encoder), n_max_(n_max), towers_(towers) {}

bool PdnScoreMethod::knows_user(UserId u) const { return u < encoder_->log().num_users(); }

void PdnScoreMethod::score(UserId u, std::span<const Interaction> history, std::span<const ItemId> candidates,
                           std::span<double> out) const {
  const auto positions = ContextEncoder::trigger_positions(history, history.size(), kNoItem, n_max_);
  const UserScorer scorer(*encoder_, u, history, positions, history.size(), towers_);
  for (std::size_t c = 0; c < candidates.size(); ++c) out[c] = scorer.score(candidates[c]);
}

PdnRetrievalMethod::PdnRetrievalMethod(const Retriever& retriever, std::size_t m) : retriever_(&retriever), m_(m) {}

bool PdnRetrievalMethod::knows_user(UserId u) const { return u < retriever_->encoder().log().num_users(); }

void PdnRetrievalMethod::score(UserId u, std::span<const Interaction> history, std::span<const ItemId> candidates,
                               std::span<double> out) const {
  const auto result = retriever_->retrieve(u, history, m_, std::numeric_limits<std::size_t>::max());
  std::unordered_map<ItemId, double> found;
  found.reserve(result.items.size());
  for (const auto& r : result.items) found.emplace(r.item, r.score);
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    const auto it = found.find(candidates[c]);
    out[c] = it == found.end() ? kNegInf : it->second;
  }
}

IndexSimilarity::IndexSimilarity(const SimIndex& index) : index_(&index), incoming_(index.num_items()) {
  for (ItemId j = 0; j < index.num_items(); ++j) {
    for (const auto& nb : index.neighbors(j)) incoming_[nb.item].emplace_back(j, nb.score);
  }
}

double IndexSimilarity::item_to_item(std::span<const ItemId> history, ItemId i) const {
  if (i >= incoming_.size()) return kNegInf;
  const auto& in = incoming_[i];
  double sum = 0.0;
  bool any = false;
  for (ItemId j : history) {
    const auto it = std::lower_bound(in.begin(), in.end(), j, [](const auto& e, ItemId v) { return e.first < v; });
    if (it != in.end() && it->first == j) {
      sum += softplus(it->second);
      any = true;
    }
  }
  return any ? sum : kNegInf;
}

double CfSimilarity::item_to_item(std::span<const ItemId> history, ItemId i) const { return cf_score(*matrix_, history, i); }

void ItemToItemMethod::score(UserId, std::span<const Interaction> history, std::span<const ItemId> candidates,
                             std::span<double> out) const {
  std::vector<ItemId> items;
  items.reserve(history.size());
  for (const auto& r : history) items.push_back(r.item);
  for (std::size_t c = 0; c < candidates.size(); ++c) out[c] = source_->item_to_item(items, candidates[c]);
}

namespace {

std::size_t bucket_of(std::size_t history_length) {
  if (history_length <= 15) return 0;
  if (history_length <= 30) return 1;
  if (history_length <= 45) return 2;
  return 3;
}

const char* kBucketLabels[] = {"len<=15", "len16-30", "len31-45", "len>45"};

std::vector<ItemId> negatives_for(const Dataset& data, const TestCase& tc, const Protocol& protocol) {
  const auto& log = data.train;
  const ItemId ex[1] = {tc.target};
  if (protocol.kind == Protocol::Kind::sampled) {
    std::mt19937_64 rng(protocol.seed ^ (0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(tc.user) + 1)));
    return sample_negatives(log, tc.user, protocol.negatives, rng, ex);
  }
  std::vector<char> banned(log.num_items(), 0);
  for (const auto& r : log.history(tc.user)) banned[r.item] = 1;
  if (tc.target < banned.size()) banned[tc.target] = 1;
  std::vector<ItemId> out;
  for (ItemId i = 0; i < log.num_items(); ++i) {
    if (!banned[i]) out.push_back(i);
  }
  return out;
}

}  // namespace

EvalReport evaluate(const EvalMethod& method, const Dataset& data, const Protocol& protocol, const EvalOptions& options,
                    std::vector<CaseResult>* cases) {
  const std::size_t K = options.K;
  if (K == 0) throw ConfigError("K must be >= 1");
  std::vector<std::size_t> which = options.subset;
  if (which.empty()) {
    which.resize(data.test.size());
    for (std::size_t c = 0; c < which.size(); ++c) which[c] = c;
  }
  const auto& log = data.train;
  const double categories = static_cast<double>(log.num_categories());
  std::vector<CaseResult> results(which.size());

  parallel_for(which.size(), options.threads, [&](std::size_t n) {
    const auto& tc = data.test.at(which[n]);
    auto& res = results[n];
    res.user = tc.user;
    res.target = tc.target;
    if (tc.user >= log.num_users() || tc.target >= log.num_items() || !method.knows_user(tc.user)) {
      res.skipped = true;
      return;
    }
    const auto history = log.history(tc.user);
    std::vector<ItemId> cands{tc.target};
    const auto negs = negatives_for(data, tc, protocol);
    cands.insert(cands.end(), negs.begin(), negs.end());
    std::vector<double> scores(cands.size());
    method.score(tc.user, history, cands, scores);
    for (double s : scores) {
      if (std::isnan(s)) throw NonFiniteError(method.name() + " produced NaN for user " + log.user_name(tc.user));
    }
    const double ts = scores[0];
    std::size_t rank = 1;
    for (std::size_t c = 1; c < scores.size(); ++c) rank += scores[c] >= ts ? 1 : 0;
    res.rank = rank;
    res.metrics = hr_ndcg_at_rank(rank, K);

    if (categories > 0) {
      std::vector<std::size_t> order;
      for (std::size_t c = 0; c < cands.size(); ++c) {
        if (scores[c] != kNegInf) order.push_back(c);
      }
      const std::size_t keep = std::min(K, order.size());
      std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(),
                        [&](std::size_t a, std::size_t b) {
                          return scores[a] != scores[b] ? scores[a] > scores[b] : cands[a] < cands[b];
                        });
      std::vector<std::int32_t> cats;
      for (std::size_t q = 0; q < keep; ++q) {
        const auto c = log.category(cands[order[q]]);
        if (c >= 0) cats.push_back(c);
      }
      std::sort(cats.begin(), cats.end());
      cats.erase(std::unique(cats.begin(), cats.end()), cats.end());
      res.diversity = static_cast<double>(cats.size()) / categories;
    }
  });

  EvalReport rep;
  rep.method = method.name();
  rep.protocol = protocol.label();
  rep.K = K;
  rep.buckets.resize(4);
  for (std::size_t b = 0; b < 4; ++b) rep.buckets[b].label = kBucketLabels[b];
  for (const auto& r : results) {
    if (r.skipped) {
      ++rep.skipped;
      continue;
    }
    ++rep.cases;
    rep.hr += r.metrics.hr;
    rep.ndcg += r.metrics.ndcg;
    rep.diversity += r.diversity;
    auto& seg = rep.buckets[bucket_of(log.history(r.user).size())];
    ++seg.cases;
    seg.hr += r.metrics.hr;
    seg.ndcg += r.metrics.ndcg;
  }
  if (rep.cases > 0) {
    const double n = static_cast<double>(rep.cases);
    rep.hr /= n;
    rep.ndcg /= n;
    rep.diversity /= n;
  }
  for (auto& seg : rep.buckets) {
    if (seg.cases == 0) continue;
    seg.hr /= static_cast<double>(seg.cases);
    seg.ndcg /= static_cast<double>(seg.cases);
  }
  if (cases) *cases = std::move(results);
  return rep;
}

EvalReport item_to_item_evaluate(const SimilaritySource& source, const Dataset& data, const Protocol& protocol,
                                 const EvalOptions& options, std::vector<CaseResult>* cases) {
  const ItemToItemMethod method(source);
  return evaluate(method, data, protocol, options, cases);
}

namespace {
std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}
}  // namespace

void write_report_tsv(std::span<const EvalReport> reports, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << "method\tprotocol\tK\tsegment\tcases\thr\tndcg\tdiversity\tskipped\n";
  for (const auto& r : reports) {
    out << r.method << '\t' << r.protocol << '\t' << r.K << "\tall\t" << r.cases << '\t' << num(r.hr) << '\t'
        << num(r.ndcg) << '\t' << num(r.diversity) << '\t' << r.skipped << '\n';
    for (const auto& s : r.buckets) {
      out << r.method << '\t' << r.protocol << '\t' << r.K << '\t' << s.label << '\t' << s.cases << '\t' << num(s.hr)
          << '\t' << num(s.ndcg) << "\t-\t-\n";
    }
  }
}

std::string format_summary(std::span<const EvalReport> reports) {
  std::ostringstream os;
  for (const auto& r : reports) {
    os << r.method << " [" << r.protocol << "] HR@" << r.K << " " << num(r.hr) << "  NDCG@" << r.K << " " << num(r.ndcg)
       << "  diversity " << num(r.diversity) << "  (" << r.cases << " cases";
    if (r.skipped) os << ", " << r.skipped << " skipped";
    os << ")\n";
    for (const auto& s : r.buckets) {
      os << "    " << s.label << ": " << s.cases << " cases, HR " << num(s.hr) << ", NDCG " << num(s.ndcg) << '\n';
    }
  }
  return os.str();
}

}  // namespace pdn
