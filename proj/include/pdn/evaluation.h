#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "pdn/baseline_cf.h"
#include "pdn/retrieval.h"

namespace pdn {

struct HitNdcg {
  int hr = 0;
  double ndcg = 0.0;
};

/// hr = 1 iff target is among the first K entries; ndcg = 1/log2(rank + 1) on a hit.
HitNdcg hr_ndcg(std::span<const ItemId> ranked, ItemId target, std::size_t K);
/// Same from a 1-based rank.
HitNdcg hr_ndcg_at_rank(std::size_t rank, std::size_t K);

struct Protocol {
  enum class Kind { all, sampled };
  Kind kind = Kind::sampled;
  std::size_t negatives = 100;
  std::uint64_t seed = 1;

  static Protocol all_items() { return Protocol{Kind::all, 0, 0}; }
  static Protocol sampled(std::size_t n, std::uint64_t seed) { return Protocol{Kind::sampled, n, seed}; }
  std::string label() const;
  static Protocol parse(const std::string& text, std::uint64_t seed);
};

/// Anything that scores candidate items for one user's history.
class EvalMethod {
 public:
  virtual ~EvalMethod() = default;
  virtual std::string name() const = 0;
  virtual bool knows_user(UserId u) const = 0;
  /// out[c] = score of candidates[c]; higher is better, -inf means "not retrievable".
  virtual void score(UserId u, std::span<const Interaction> history, std::span<const ItemId> candidates,
                     std::span<double> out) const = 0;
};

/// Full PDN serving score (no bias) using the n_max most recent triggers.
class PdnScoreMethod : public EvalMethod {
 public:
  PdnScoreMethod(const ContextEncoder& encoder, std::size_t n_max, const TowerCache* towers = nullptr);
  std::string name() const override { return "pdn"; }
  bool knows_user(UserId u) const override;
  void score(UserId u, std::span<const Interaction> history, std::span<const ItemId> candidates,
             std::span<double> out) const override;

 private:
  const ContextEncoder* encoder_;
  std::size_t n_max_;
  const TowerCache* towers_;
};

/// Greedy index retrieval: candidates outside the retrieved set score -inf.
class PdnRetrievalMethod : public EvalMethod {
 public:
  PdnRetrievalMethod(const Retriever& retriever, std::size_t m);
  std::string name() const override { return "pdn-retrieval"; }
  bool knows_user(UserId u) const override;
  void score(UserId u, std::span<const Interaction> history, std::span<const ItemId> candidates,
             std::span<double> out) const override;

 private:
  const Retriever* retriever_;
  std::size_t m_;
};

/// Item-to-item scoring: sum over history items j of sim(j, i).
class SimilaritySource {
 public:
  virtual ~SimilaritySource() = default;
  virtual std::string name() const = 0;
  virtual std::size_t num_items() const = 0;
  virtual double item_to_item(std::span<const ItemId> history, ItemId i) const = 0;
};

/// Sums softplus(s_ji) over history items whose index list holds i; -inf when none does.
class IndexSimilarity : public SimilaritySource {
 public:
  explicit IndexSimilarity(const SimIndex& index);
  std::string name() const override { return "simnet-i2i"; }
  std::size_t num_items() const override { return index_->num_items(); }
  double item_to_item(std::span<const ItemId> history, ItemId i) const override;

 private:
  const SimIndex* index_;
  // Transposed index: for target i, (source j, s_ji) ascending by j.
  std::vector<std::vector<std::pair<ItemId, double>>> incoming_;
};

/// cf_score over the Pearson matrix (missing pairs contribute 0).
class CfSimilarity : public SimilaritySource {
 public:
  explicit CfSimilarity(const CfMatrix& matrix) : matrix_(&matrix) {}
  std::string name() const override { return "pcf-i2i"; }
  std::size_t num_items() const override { return matrix_->num_items(); }
  double item_to_item(std::span<const ItemId> history, ItemId i) const override;

 private:
  const CfMatrix* matrix_;
};

class ItemToItemMethod : public EvalMethod {
 public:
  explicit ItemToItemMethod(const SimilaritySource& source) : source_(&source) {}
  std::string name() const override { return source_->name(); }
  bool knows_user(UserId) const override { return true; }
  void score(UserId u, std::span<const Interaction> history, std::span<const ItemId> candidates,
             std::span<double> out) const override;

 private:
  const SimilaritySource* source_;
};

struct SegmentMetrics {
  std::string label;
  std::size_t cases = 0;
  double hr = 0.0;
  double ndcg = 0.0;
};

struct EvalReport {
  std::string method;
  std::string protocol;
  std::size_t K = 10;
  std::size_t cases = 0;
  std::size_t skipped = 0;
  double hr = 0.0;
  double ndcg = 0.0;
  double diversity = 0.0;
  /// History-length buckets: <=15, 16-30, 31-45, >45.
  std::vector<SegmentMetrics> buckets;
};

/// Per-case outcome kept for paired analyses.
struct CaseResult {
  UserId user = 0;
  ItemId target = 0;
  std::size_t rank = 0;  // 1-based among target + negatives; ties count against the target
  HitNdcg metrics;
  double diversity = 0.0;
  bool skipped = false;
};

struct EvalOptions {
  std::size_t K = 10;
  unsigned threads = 0;
  /// Evaluate only test cases whose index is listed (empty = all).
  std::vector<std::size_t> subset;
};

EvalReport evaluate(const EvalMethod& method, const Dataset& data, const Protocol& protocol, const EvalOptions& options,
                    std::vector<CaseResult>* cases = nullptr);

EvalReport item_to_item_evaluate(const SimilaritySource& source, const Dataset& data, const Protocol& protocol,
                                 const EvalOptions& options, std::vector<CaseResult>* cases = nullptr);

/// Rows: method, protocol, segment, cases, hr, ndcg, diversity, skipped.
void write_report_tsv(std::span<const EvalReport> reports, const std::filesystem::path& path);
std::string format_summary(std::span<const EvalReport> reports);

}  // namespace pdn
