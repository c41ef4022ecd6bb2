#include "pdn/index.h"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>

#include "binary_io.h"
#include "pdn/checkpoint.h"
#include "pdn/parallel.h"

namespace pdn {

nlohmann::json IndexConfig::to_json() const {
  return {{"k", k},
          {"k_hat", k_hat},
          {"session_window", session_window},
          {"profile_pairs", profile_pairs},
          {"all_pairs", all_pairs},
          {"threads", threads}};
}

IndexConfig IndexConfig::from_json(const nlohmann::json& j) {
  IndexConfig c;
  c.k = j.value("k", c.k);
  c.k_hat = j.value("k_hat", 10 * c.k);
  c.session_window = j.value("session_window", c.session_window);
  c.profile_pairs = j.value("profile_pairs", c.profile_pairs);
  c.all_pairs = j.value("all_pairs", c.all_pairs);
  c.threads = j.value("threads", c.threads);
  if (c.k == 0) throw ConfigError("index.k must be >= 1");
  if (c.k_hat < c.k) throw ConfigError("index.k_hat must be >= index.k");
  return c;
}

std::size_t CandidatePairs::size() const {
  std::size_t n = 0;
  for (const auto& t : targets) n += t.size();
  return n;
}

CandidatePairs generate_candidate_pairs(const InteractionLog& log, const IndexConfig& config) {
  if (config.k_hat < config.k) throw ConfigError("k_hat must be >= k");
  const std::size_t n = log.num_items();
  if (config.all_pairs) return all_candidate_pairs(n);

  // (user, position) postings per item, users in ascending order.
  std::vector<std::vector<std::pair<UserId, std::uint32_t>>> postings(n);
  std::vector<std::int64_t> last_seen(n, std::numeric_limits<std::int64_t>::min());
  for (UserId u = 0; u < log.num_users(); ++u) {
    const auto h = log.history(u);
    for (std::uint32_t p = 0; p < h.size(); ++p) {
      postings[h[p].item].emplace_back(u, p);
      last_seen[h[p].item] = std::max(last_seen[h[p].item], h[p].timestamp);
    }
  }
  std::vector<std::vector<ItemId>> by_category(log.num_categories());
  for (ItemId i = 0; i < n; ++i) {
    if (log.category(i) >= 0) by_category[static_cast<std::size_t>(log.category(i))].push_back(i);
  }

  CandidatePairs out;
  out.targets.resize(n);
  parallel_for(n, config.threads, [&](std::size_t js) {
    const auto j = static_cast<ItemId>(js);
    thread_local std::vector<std::uint32_t> count, stamp;
    thread_local std::vector<std::int64_t> recent;
    if (count.size() != n) {
      count.assign(n, 0);
      stamp.assign(n, 0);
      recent.assign(n, std::numeric_limits<std::int64_t>::min());
    }
    std::vector<ItemId> touched;

    for (const auto& [u, p] : postings[j]) {
      const auto h = log.history(u);
      const std::int64_t tp = h[p].timestamp;
      auto visit = [&](std::size_t q) {
        const ItemId i = h[q].item;
        if (i == j) return;
        if (stamp[i] == 0) touched.push_back(i);
        if (stamp[i] != u + 1) {
          stamp[i] = u + 1;
          ++count[i];
        }
        recent[i] = std::max(recent[i], std::max(tp, h[q].timestamp));
      };
      for (std::size_t q = p; q-- > 0 && tp - h[q].timestamp <= config.session_window;) visit(q);
      for (std::size_t q = p + 1; q < h.size() && h[q].timestamp - tp <= config.session_window; ++q) visit(q);
    }
    if (config.profile_pairs && log.category(j) >= 0) {
      for (ItemId i : by_category[static_cast<std::size_t>(log.category(j))]) {
        if (i == j || stamp[i] != 0) continue;
        stamp[i] = std::numeric_limits<std::uint32_t>::max();
        touched.push_back(i);
        recent[i] = last_seen[i];
      }
    }
    auto before = [&](ItemId a, ItemId b) {
      if (count[a] != count[b]) return count[a] > count[b];
      if (recent[a] != recent[b]) return recent[a] > recent[b];
      return a < b;
    };
    const std::size_t keep = std::min(touched.size(), config.k_hat);
    std::partial_sort(touched.begin(), touched.begin() + static_cast<std::ptrdiff_t>(keep), touched.end(), before);
    for (ItemId i : touched) {
      count[i] = 0;
      stamp[i] = 0;
      recent[i] = std::numeric_limits<std::int64_t>::min();
    }
    touched.resize(keep);
    out.targets[j] = std::move(touched);
  });
  return out;
}

CandidatePairs all_candidate_pairs(std::size_t num_items) {
  CandidatePairs out;
  out.targets.resize(num_items);
  for (ItemId j = 0; j < num_items; ++j) {
    auto& t = out.targets[j];
    t.reserve(num_items - 1);
    for (ItemId i = 0; i < num_items; ++i) {
      if (i != j) t.push_back(i);
    }
  }
  return out;
}

SimIndex::SimIndex(IndexHeader header, std::vector<std::vector<Neighbor>> lists) : header_(header) {
  header_.num_items = lists.size();
  offsets_.reserve(lists.size() + 1);
  offsets_.push_back(0);
  for (std::size_t j = 0; j < lists.size(); ++j) {
    const auto& l = lists[j];
    for (std::size_t q = 0; q < l.size(); ++q) {
      const auto& nb = l[q];
      if (nb.item == j) throw IntegrityError("index: self-pair for item " + std::to_string(j));
      if (!std::isfinite(nb.score)) throw IntegrityError("index: non-finite score for item " + std::to_string(j));
      if (q > 0) {
        const auto& prev = l[q - 1];
        if (prev.score < nb.score || (prev.score == nb.score && prev.item >= nb.item)) {
          throw IntegrityError("index: neighbor list of item " + std::to_string(j) + " is not in rank order");
        }
      }
      for (std::size_t r = 0; r < q; ++r) {
        if (l[r].item == nb.item) throw IntegrityError("index: duplicate neighbor for item " + std::to_string(j));
      }
    }
    entries_.insert(entries_.end(), l.begin(), l.end());
    offsets_.push_back(entries_.size());
  }
}

std::span<const Neighbor> SimIndex::neighbors(ItemId j) const {
  if (j >= num_items()) return {};
  return {entries_.data() + offsets_[j], offsets_[j + 1] - offsets_[j]};
}

std::optional<double> SimIndex::find(ItemId j, ItemId i) const {
  for (const auto& nb : neighbors(j)) {
    if (nb.item == i) return nb.score;
  }
  return std::nullopt;
}

bool SimIndex::operator==(const SimIndex& other) const {
  return header_ == other.header_ && offsets_ == other.offsets_ && entries_ == other.entries_;
}

SimIndex build_index(const ContextEncoder& encoder, const CandidatePairs& pairs, std::size_t k, unsigned threads,
                     IndexBuildSummary* summary, std::optional<std::int64_t> build_timestamp) {
  if (k == 0) throw ConfigError("index k must be >= 1");
  const auto start = std::chrono::steady_clock::now();
  const auto& model = encoder.model();
  const std::size_t n = encoder.log().num_items();
  std::vector<std::vector<Neighbor>> lists(n);
  std::vector<std::size_t> scored(n, 0), skipped(n, 0);
  std::size_t skipped_sources = 0;
  for (std::size_t j = n; j < pairs.num_items(); ++j) skipped_sources += pairs.targets[j].size();

  parallel_for(std::min(n, pairs.num_items()), threads, [&](std::size_t js) {
    const auto j = static_cast<ItemId>(js);
    std::vector<ItemId> cands(pairs.targets[j]);
    std::sort(cands.begin(), cands.end());
    cands.erase(std::unique(cands.begin(), cands.end()), cands.end());
    auto& list = lists[j];
    list.reserve(cands.size());
    for (ItemId i : cands) {
      if (i >= n || i == j) {
        ++skipped[j];
        continue;
      }
      const double s = model.sim_score(encoder.item(j), encoder.cooccurrence(j, i), encoder.item(i));
      if (!std::isfinite(s)) {
        ++skipped[j];
        continue;
      }
      ++scored[j];
      list.push_back(Neighbor{i, s});
    }
    auto better = [](const Neighbor& a, const Neighbor& b) { return a.score != b.score ? a.score > b.score : a.item < b.item; };
    if (list.size() > k) {
      std::partial_sort(list.begin(), list.begin() + static_cast<std::ptrdiff_t>(k), list.end(), better);
      list.resize(k);
    } else {
      std::sort(list.begin(), list.end(), better);
    }
    list.shrink_to_fit();
  });

  IndexHeader h;
  h.model_id = model.id();
  h.k = static_cast<std::uint32_t>(k);
  h.build_timestamp = build_timestamp.value_or(encoder.log().max_timestamp());
  SimIndex index(h, std::move(lists));
  if (summary) {
    *summary = IndexBuildSummary{};
    for (std::size_t j = 0; j < n; ++j) {
      summary->pairs_scored += scored[j];
      summary->pairs_skipped += skipped[j];
      summary->items_with_neighbors += index.neighbors(static_cast<ItemId>(j)).empty() ? 0 : 1;
    }
    summary->pairs_skipped += skipped_sources;
    summary->seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
  return index;
}

namespace {
constexpr std::string_view kIndexMagic{"PDNINDX\0", 8};
}

std::vector<std::byte> encode_index(const SimIndex& index) {
  detail::ByteWriter w;
  w.raw(kIndexMagic.data(), kIndexMagic.size());
  w.put<std::uint32_t>(kIndexVersion);
  const auto& h = index.header();
  w.put<std::uint64_t>(h.model_id);
  w.put<std::uint32_t>(h.k);
  w.put<std::int64_t>(h.build_timestamp);
  w.put<std::uint64_t>(index.num_items());
  for (ItemId j = 0; j < index.num_items(); ++j) {
    const auto nb = index.neighbors(j);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(nb.size()));
    for (const auto& e : nb) {
      w.put<std::uint32_t>(e.item);
      w.put<double>(e.score);
    }
  }
  w.seal();
  return std::move(w.bytes());
}

SimIndex decode_index(std::span<const std::byte> bytes) {
  detail::ByteReader r(bytes, "index");
  r.verify_seal();
  r.expect_magic(kIndexMagic);
  const auto version = r.get<std::uint32_t>();
  if (version != kIndexVersion) throw IntegrityError("index: unsupported version " + std::to_string(version));
  IndexHeader h;
  h.model_id = r.get<std::uint64_t>();
  h.k = r.get<std::uint32_t>();
  h.build_timestamp = r.get<std::int64_t>();
  h.num_items = r.get<std::uint64_t>();
  r.need(h.num_items * sizeof(std::uint32_t));
  std::vector<std::vector<Neighbor>> lists(h.num_items);
  for (auto& l : lists) {
    const auto count = r.get<std::uint32_t>();
    if (count > h.k) throw IntegrityError("index: list longer than k");
    r.need(static_cast<std::size_t>(count) * 12);
    l.resize(count);
    for (auto& e : l) {
      e.item = r.get<std::uint32_t>();
      e.score = r.get<double>();
      if (e.item >= h.num_items) throw IntegrityError("index: neighbor id out of range");
    }
  }
  if (r.remaining() != 8) throw IntegrityError("index: trailing bytes");
  return SimIndex(h, std::move(lists));
}

void save_index(const SimIndex& index, const std::filesystem::path& path) { write_file_bytes(path, encode_index(index)); }

SimIndex load_index(const std::filesystem::path& path, std::optional<std::uint64_t> expected_model_id, bool allow_mismatch) {
  auto index = decode_index(read_file_bytes(path));
  if (expected_model_id && *expected_model_id != index.header().model_id && !allow_mismatch) {
    throw ModelMismatchError("index '" + path.string() + "' was built by model " + to_hex(index.header().model_id) +
                             ", serving model is " + to_hex(*expected_model_id));
  }
  return index;
}

void export_index_tsv(const SimIndex& index, const InteractionLog& log, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << "j\ti\tsim\n";
  char buf[64];
  for (ItemId j = 0; j < index.num_items(); ++j) {
    for (const auto& nb : index.neighbors(j)) {
      std::snprintf(buf, sizeof buf, "%.17g", nb.score);
      out << log.item_name(j) << '\t' << log.item_name(nb.item) << '\t' << buf << '\n';
    }
  }
}

}  // namespace pdn
