#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pdn/context.h"
#include "pdn/index.h"

namespace pdn {

struct TriggerScore {
  ItemId item = kNoItem;
  double score = 0.0;         // t_uj
  std::size_t position = 0;   // index in the user's history
};

struct RetrievedItem {
  ItemId item = kNoItem;
  double score = 0.0;
  std::vector<ItemId> triggers;  // triggers whose neighbor list contains the item, by trigger rank
};

struct RetrievalDiagnostics {
  std::size_t triggers_scored = 0;
  std::size_t triggers_missing = 0;  // selected triggers with no neighbor list
  std::size_t candidates = 0;
  double wall_ms = 0.0;
};

struct RetrievalResult {
  std::vector<RetrievedItem> items;
  std::size_t m = 0;
  std::size_t k = 0;
  std::size_t K = 0;
  RetrievalDiagnostics diagnostics;
};

struct RetrieverOptions {
  bool allow_model_mismatch = false;
  /// Precompute p_u and q_i for every user and item at construction.
  bool cache_towers = true;
  unsigned threads = 1;
};

/// Greedy path retrieval over a SimNet index. Read-only; safe for concurrent queries.
class Retriever {
 public:
  Retriever(const ContextEncoder& encoder, const SimIndex& index, const RetrieverOptions& options = {});

  /// TrigNet scores of every history item, best m first; ties go to the more recent item.
  std::vector<TriggerScore> extract_triggers(UserId u, std::span<const Interaction> history, std::size_t m) const;
  std::vector<TriggerScore> extract_triggers(UserId u, std::size_t m) const;

  /// Candidates are the neighbors of the top-m triggers minus history items. Each scores
  /// softplus(d_ui) plus softplus(t_uj + s_ji) over the selected triggers listing it.
  /// Ranked by score descending, ties by item id.
  RetrievalResult retrieve(UserId u, std::span<const Interaction> history, std::size_t m, std::size_t K) const;
  RetrievalResult retrieve(UserId u, std::size_t m, std::size_t K) const;

  const ContextEncoder& encoder() const { return *encoder_; }
  const SimIndex& index() const { return *index_; }
  const TowerCache* towers() const { return towers_.empty() ? nullptr : &towers_; }

 private:
  const ContextEncoder* encoder_;
  const SimIndex* index_;
  TowerCache towers_;
};

}  // namespace pdn
