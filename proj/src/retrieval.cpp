#include "pdn/retrieval.h"

#include <algorithm>
#include <chrono>
#include <unordered_map>

#include "pdn/numeric.h"

namespace pdn {

Retriever::Retriever(const ContextEncoder& encoder, const SimIndex& index, const RetrieverOptions& options)
    : encoder_(&encoder), index_(&index) {
  const auto id = encoder.model().id();
  if (index.header().model_id != id && !options.allow_model_mismatch) {
    throw ModelMismatchError("index was built by model " + to_hex(index.header().model_id) + ", serving model is " +
                             to_hex(id));
  }
  if (options.cache_towers) towers_ = TowerCache::build(encoder, options.threads);
}

std::vector<TriggerScore> Retriever::extract_triggers(UserId u, std::span<const Interaction> history, std::size_t m) const {
  if (m == 0) throw ConfigError("m must be >= 1");
  const auto& model = encoder_->model();
  const auto& user = encoder_->user(u);
  std::vector<TriggerScore> all;
  all.reserve(history.size());
  for (std::size_t q = 0; q < history.size(); ++q) {
    const ItemId j = history[q].item;
    all.push_back(TriggerScore{j, model.trig_score(user, encoder_->behavior(history, q, history.size()), encoder_->item(j)), q});
  }
  auto better = [](const TriggerScore& a, const TriggerScore& b) {
    return a.score != b.score ? a.score > b.score : a.position > b.position;
  };
  const std::size_t keep = std::min(m, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(keep), all.end(), better);
  all.resize(keep);
  return all;
}

std::vector<TriggerScore> Retriever::extract_triggers(UserId u, std::size_t m) const {
  return extract_triggers(u, encoder_->log().history(u), m);
}

RetrievalResult Retriever::retrieve(UserId u, std::span<const Interaction> history, std::size_t m, std::size_t K) const {
  const auto start = std::chrono::steady_clock::now();
  RetrievalResult result;
  result.m = m;
  result.k = index_->header().k;
  result.K = K;
  if (K == 0) return result;

  const auto triggers = history.empty() ? std::vector<TriggerScore>{} : extract_triggers(u, history, m);
  result.diagnostics.triggers_scored = history.size();

  struct Acc {
    std::vector<std::pair<std::size_t, double>> paths;  // (history position, path weight)
    std::vector<ItemId> via;
  };
  std::unordered_map<ItemId, Acc> cands;
  std::vector<ItemId> order;
  std::vector<ItemId> seen;
  seen.reserve(history.size());
  for (const auto& r : history) seen.push_back(r.item);
  std::sort(seen.begin(), seen.end());
  auto in_history = [&](ItemId i) { return std::binary_search(seen.begin(), seen.end(), i); };

  for (const auto& trig : triggers) {
    const auto list = index_->neighbors(trig.item);
    if (list.empty()) {
      ++result.diagnostics.triggers_missing;
      continue;
    }
    for (const auto& nb : list) {
      if (in_history(nb.item)) continue;
      auto [it, fresh] = cands.try_emplace(nb.item);
      if (fresh) order.push_back(nb.item);
      it->second.paths.emplace_back(trig.position, merge_path(trig.score, nb.score));
      auto& via = it->second.via;
      if (std::find(via.begin(), via.end(), trig.item) == via.end()) via.push_back(trig.item);
    }
  }
  result.diagnostics.candidates = order.size();

  const auto& model = encoder_->model();
  std::vector<double> p;
  if (towers()) {
    const auto pu = towers_.user(u);
    p.assign(pu.begin(), pu.end());
  } else {
    p = model.user_vector(encoder_->user(u));
  }
  result.items.reserve(order.size());
  for (ItemId i : order) {
    std::vector<double> owned;
    std::span<const double> q;
    if (towers()) {
      q = towers_.item(i);
    } else {
      owned = model.item_vector(encoder_->item(i));
      q = owned;
    }
    double d = 0.0;
    for (std::size_t c = 0; c < q.size(); ++c) d += p[c] * q[c];
    auto& acc = cands[i];
    // Same summation order as the full model: direct term, then paths by history position.
    std::sort(acc.paths.begin(), acc.paths.end());
    double score = softplus(d);
    for (const auto& [pos, w] : acc.paths) score += w;
    result.items.push_back(RetrievedItem{i, score, std::move(acc.via)});
  }
  auto better = [](const RetrievedItem& a, const RetrievedItem& b) {
    return a.score != b.score ? a.score > b.score : a.item < b.item;
  };
  const std::size_t keep = std::min(K, result.items.size());
  std::partial_sort(result.items.begin(), result.items.begin() + static_cast<std::ptrdiff_t>(keep), result.items.end(), better);
  result.items.resize(keep);
  result.diagnostics.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return result;
}

RetrievalResult Retriever::retrieve(UserId u, std::size_t m, std::size_t K) const {
  return retrieve(u, encoder_->log().history(u), m, K);
}

}  // namespace pdn
