#include "pdn/interaction_log.h"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace pdn {

namespace {

std::vector<std::string_view> split(std::string_view line, std::string_view sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + sep.size();
  }
}

std::string_view trim_cr(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == '\n')) s.remove_suffix(1);
  return s;
}

std::int64_t parse_int(std::string_view s, std::size_t line, const char* what) {
  std::int64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw DataError("line " + std::to_string(line) + ": bad " + what + " '" + std::string(s) + "'", line);
  }
  return v;
}

double parse_double(std::string_view s, std::size_t line) {
  std::string tmp(s);
  char* end = nullptr;
  const double v = std::strtod(tmp.c_str(), &end);
  if (tmp.empty() || end != tmp.c_str() + tmp.size()) {
    throw DataError("line " + std::to_string(line) + ": bad numeric value '" + tmp + "'", line);
  }
  return v;
}

bool is_unknown_category(std::string_view s) { return s.empty() || s == "-"; }

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

LogFormat parse_log_format(const std::string& name) {
  if (name == "tsv") return LogFormat::tsv;
  if (name == "movielens" || name == "ml") return LogFormat::movielens;
  throw ConfigError("unknown log format '" + name + "' (expected tsv or movielens)");
}

std::optional<UserId> InteractionLog::find_user(const std::string& name) const {
  auto it = user_index_.find(name);
  if (it == user_index_.end()) return std::nullopt;
  return it->second;
}

std::optional<ItemId> InteractionLog::find_item(const std::string& name) const {
  auto it = item_index_.find(name);
  if (it == item_index_.end()) return std::nullopt;
  return it->second;
}

void InteractionLog::finalize() {
  offsets_.assign(num_users() + 1, 0);
  for (const auto& r : records_) ++offsets_[r.user + 1];
  for (std::size_t u = 0; u < num_users(); ++u) offsets_[u + 1] += offsets_[u];

  item_user_counts_.assign(num_items(), 0);
  std::vector<UserId> last_user(num_items(), static_cast<UserId>(-1));
  max_timestamp_ = 0;
  for (const auto& r : records_) {
    if (last_user[r.item] != r.user) {
      last_user[r.item] = r.user;
      ++item_user_counts_[r.item];
    }
    max_timestamp_ = std::max(max_timestamp_, r.timestamp);
  }
  stats_.users = num_users();
  stats_.items = num_items();
  stats_.interactions = records_.size();
}

InteractionLog InteractionLog::with_records(std::vector<std::vector<Interaction>> per_user) const {
  if (per_user.size() != num_users()) throw DimensionError("with_records: one record list per user required");
  InteractionLog out;
  out.user_names_ = user_names_;
  out.item_names_ = item_names_;
  out.user_index_ = user_index_;
  out.item_index_ = item_index_;
  out.item_category_ = item_category_;
  out.category_names_ = category_names_;
  out.extra_columns_ = extra_columns_;
  out.extra_names_ = extra_names_;
  out.extra_values_ = extra_values_;
  for (UserId u = 0; u < per_user.size(); ++u) {
    for (auto& r : per_user[u]) {
      r.user = u;
      out.records_.push_back(r);
    }
  }
  out.finalize();
  return out;
}

LogBuilder::LogBuilder(std::size_t extra_columns, std::vector<std::string> extra_names)
    : extra_columns_(extra_columns), extra_names_(std::move(extra_names)) {
  if (extra_names_.empty()) {
    for (std::size_t c = 0; c < extra_columns_; ++c) extra_names_.push_back("extra" + std::to_string(c));
  }
  if (extra_names_.size() != extra_columns_) throw ConfigError("extra column names do not match the column count");
}

void LogBuilder::add(RawInteraction row, std::size_t line) {
  if (row.extras.size() != extra_columns_) {
    throw DataError("line " + std::to_string(line) + ": expected " + std::to_string(extra_columns_) +
                        " behavior columns, got " + std::to_string(row.extras.size()),
                    line);
  }
  if (row.category && !is_unknown_category(*row.category)) categories_[row.item] = *row.category;
  rows_.push_back(std::move(row));
}

void LogBuilder::declare_item(const std::string& item, std::optional<std::string> category) {
  declared_items_.push_back(item);
  if (category && !is_unknown_category(*category)) categories_[item] = *category;
}

void LogBuilder::declare_user(const std::string& user) { declared_users_.push_back(user); }

void LogBuilder::set_category(const std::string& item, const std::string& category) {
  if (!is_unknown_category(category)) categories_[item] = category;
}

InteractionLog LogBuilder::build(std::size_t min_interactions) const {
  std::unordered_map<std::string, std::size_t> per_user;
  for (const auto& r : rows_) ++per_user[r.user];

  InteractionLog log;
  auto add_user = [&](const std::string& u) {
    if (!log.user_index_.count(u)) {
      log.user_index_.emplace(u, static_cast<UserId>(log.user_names_.size()));
      log.user_names_.push_back(u);
    }
  };
  auto add_item = [&](const std::string& i) {
    if (!log.item_index_.count(i)) {
      log.item_index_.emplace(i, static_cast<ItemId>(log.item_names_.size()));
      log.item_names_.push_back(i);
    }
  };
  for (const auto& u : declared_users_) add_user(u);
  for (const auto& i : declared_items_) add_item(i);

  std::size_t dropped_rows = 0;
  std::unordered_map<std::string, bool> dropped_users;
  for (const auto& r : rows_) {
    if (per_user[r.user] < min_interactions) {
      ++dropped_rows;
      dropped_users[r.user] = true;
      continue;
    }
    add_user(r.user);
    add_item(r.item);
  }

  std::unordered_map<std::string, std::int32_t> cat_index;
  log.item_category_.assign(log.item_names_.size(), -1);
  for (ItemId i = 0; i < log.item_names_.size(); ++i) {
    auto it = categories_.find(log.item_names_[i]);
    if (it == categories_.end()) continue;
    auto [ci, inserted] = cat_index.emplace(it->second, static_cast<std::int32_t>(log.category_names_.size()));
    if (inserted) log.category_names_.push_back(it->second);
    log.item_category_[i] = ci->second;
  }

  log.extra_columns_ = extra_columns_;
  log.extra_names_ = extra_names_;
  std::vector<std::vector<Interaction>> grouped(log.user_names_.size());
  for (const auto& r : rows_) {
    if (per_user[r.user] < min_interactions) continue;
    Interaction rec;
    rec.user = log.user_index_.at(r.user);
    rec.item = log.item_index_.at(r.item);
    rec.timestamp = r.timestamp;
    rec.extra_offset = static_cast<std::uint32_t>(log.extra_values_.size());
    log.extra_values_.insert(log.extra_values_.end(), r.extras.begin(), r.extras.end());
    grouped[rec.user].push_back(rec);
  }
  for (auto& g : grouped) {
    std::stable_sort(g.begin(), g.end(), [](const Interaction& a, const Interaction& b) { return a.timestamp < b.timestamp; });
    log.records_.insert(log.records_.end(), g.begin(), g.end());
  }
  if (log.records_.empty() && declared_users_.empty()) {
    throw DataError("empty dataset: no user has at least " + std::to_string(min_interactions) + " interactions");
  }
  log.finalize();
  log.stats_.dropped_users = dropped_users.size();
  log.stats_.dropped_interactions = dropped_rows;
  return log;
}

namespace {

InteractionLog load_tsv(const std::filesystem::path& path, const LoadOptions& options) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::string line;
  std::size_t lineno = 0;
  std::optional<LogBuilder> builder;
  std::vector<std::string> extra_names;
  bool header_seen = false;
  std::size_t columns = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto text = trim_cr(line);
    if (text.empty() || text.front() == '#') continue;
    auto cols = split(text, "\t");
    if (!header_seen && !builder && cols[0] == "user_id") {
      header_seen = true;
      for (std::size_t c = 4; c < cols.size(); ++c) extra_names.emplace_back(cols[c]);
      continue;
    }
    if (cols.size() < 3) throw DataError("line " + std::to_string(lineno) + ": expected at least 3 columns", lineno);
    if (!builder) {
      columns = cols.size();
      const std::size_t extras = columns > 4 ? columns - 4 : 0;
      if (extra_names.size() != extras) extra_names.clear();
      builder.emplace(extras, extra_names);
    }
    if (cols.size() != columns) {
      throw DataError("line " + std::to_string(lineno) + ": expected " + std::to_string(columns) + " columns, got " +
                          std::to_string(cols.size()),
                      lineno);
    }
    RawInteraction row;
    row.user = std::string(cols[0]);
    row.item = std::string(cols[1]);
    if (row.user.empty() || row.item.empty()) throw DataError("line " + std::to_string(lineno) + ": empty id", lineno);
    row.timestamp = parse_int(cols[2], lineno, "timestamp");
    if (cols.size() > 3) row.category = std::string(cols[3]);
    for (std::size_t c = 4; c < cols.size(); ++c) row.extras.push_back(parse_double(cols[c], lineno));
    builder->add(std::move(row), lineno);
  }
  if (!builder) throw DataError("empty dataset: '" + path.string() + "' has no rows");
  return builder->build(options.min_interactions);
}

InteractionLog load_movielens(const std::filesystem::path& path, const LoadOptions& options) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  LogBuilder builder(1, {"rating"});
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto text = trim_cr(line);
    if (text.empty()) continue;
    auto cols = split(text, "::");
    if (cols.size() != 4) throw DataError("line " + std::to_string(lineno) + ": expected u::i::rating::ts", lineno);
    RawInteraction row;
    row.user = std::string(cols[0]);
    row.item = std::string(cols[1]);
    row.extras.push_back(parse_double(cols[2], lineno));
    row.timestamp = parse_int(cols[3], lineno, "timestamp");
    builder.add(std::move(row), lineno);
  }
  if (lineno == 0) throw DataError("empty dataset: '" + path.string() + "' has no rows");

  const auto movies = path.parent_path() / "movies.dat";
  std::ifstream min(movies);
  if (min) {
    while (std::getline(min, line)) {
      const auto text = trim_cr(line);
      auto cols = split(text, "::");
      if (cols.size() < 3) continue;
      const auto genres = split(cols.back(), "|");
      builder.set_category(std::string(cols[0]), std::string(genres.front()));
    }
  }
  return builder.build(options.min_interactions);
}

}  // namespace

InteractionLog load_log(const std::filesystem::path& path, LogFormat format, const LoadOptions& options) {
  switch (format) {
    case LogFormat::tsv:
      return load_tsv(path, options);
    case LogFormat::movielens:
      return load_movielens(path, options);
  }
  throw ConfigError("unsupported log format");
}

Dataset split_leave_one_out(const InteractionLog& log) {
  if (log.empty()) throw DataError("cannot split an empty log");
  Dataset out;
  std::vector<std::vector<Interaction>> train(log.num_users());
  for (UserId u = 0; u < log.num_users(); ++u) {
    const auto h = log.history(u);
    if (h.empty()) continue;
    train[u].assign(h.begin(), h.end() - 1);
    out.test.push_back(TestCase{u, h.back().item, h.back().timestamp});
  }
  out.train = log.with_records(std::move(train));
  return out;
}

void save_dataset(const Dataset& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto& log = data.train;
  {
    std::ofstream out(dir / "users.tsv", std::ios::trunc);
    out << "user_id\n";
    for (UserId u = 0; u < log.num_users(); ++u) out << log.user_name(u) << '\n';
  }
  {
    std::ofstream out(dir / "items.tsv", std::ios::trunc);
    out << "item_id\tcategory_id\n";
    for (ItemId i = 0; i < log.num_items(); ++i) {
      const auto c = log.category(i);
      out << log.item_name(i) << '\t' << (c < 0 ? std::string("-") : log.category_name(static_cast<std::size_t>(c)))
          << '\n';
    }
  }
  {
    std::ofstream out(dir / "train.tsv", std::ios::trunc);
    out << "user_id\titem_id\ttimestamp\tcategory_id";
    for (const auto& n : log.extra_names()) out << '\t' << n;
    out << '\n';
    for (const auto& r : log.records()) {
      const auto c = log.category(r.item);
      out << log.user_name(r.user) << '\t' << log.item_name(r.item) << '\t' << r.timestamp << '\t'
          << (c < 0 ? std::string("-") : log.category_name(static_cast<std::size_t>(c)));
      for (double v : log.extras(r)) out << '\t' << format_double(v);
      out << '\n';
    }
  }
  {
    std::ofstream out(dir / "test.tsv", std::ios::trunc);
    out << "user_id\titem_id\ttimestamp\n";
    for (const auto& t : data.test) out << log.user_name(t.user) << '\t' << log.item_name(t.target) << '\t' << t.timestamp << '\n';
  }
}

Dataset load_dataset(const std::filesystem::path& dir) {
  auto read_lines = [](const std::filesystem::path& p) {
    std::ifstream in(p);
    if (!in) throw DataError("cannot open '" + p.string() + "'");
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
      auto t = trim_cr(line);
      if (!t.empty()) lines.emplace_back(t);
    }
    if (lines.empty()) throw DataError("'" + p.string() + "' is empty");
    return lines;
  };
  const auto users = read_lines(dir / "users.tsv");
  const auto items = read_lines(dir / "items.tsv");
  const auto train = read_lines(dir / "train.tsv");
  const auto test = read_lines(dir / "test.tsv");

  const auto header = split(train[0], "\t");
  std::vector<std::string> extra_names;
  for (std::size_t c = 4; c < header.size(); ++c) extra_names.emplace_back(header[c]);
  LogBuilder builder(extra_names.size(), extra_names);
  for (std::size_t k = 1; k < users.size(); ++k) builder.declare_user(users[k]);
  for (std::size_t k = 1; k < items.size(); ++k) {
    auto cols = split(items[k], "\t");
    builder.declare_item(std::string(cols[0]), cols.size() > 1 ? std::optional<std::string>(cols[1]) : std::nullopt);
  }
  for (std::size_t k = 1; k < train.size(); ++k) {
    auto cols = split(train[k], "\t");
    if (cols.size() != header.size()) throw DataError("train.tsv line " + std::to_string(k + 1) + ": column count", k + 1);
    RawInteraction row;
    row.user = std::string(cols[0]);
    row.item = std::string(cols[1]);
    row.timestamp = parse_int(cols[2], k + 1, "timestamp");
    for (std::size_t c = 4; c < cols.size(); ++c) row.extras.push_back(parse_double(cols[c], k + 1));
    builder.add(std::move(row), k + 1);
  }
  Dataset data;
  data.train = builder.build(0);
  for (std::size_t k = 1; k < test.size(); ++k) {
    auto cols = split(test[k], "\t");
    if (cols.size() < 3) throw DataError("test.tsv line " + std::to_string(k + 1) + ": column count", k + 1);
    auto u = data.train.find_user(std::string(cols[0]));
    auto i = data.train.find_item(std::string(cols[1]));
    if (!u || !i) throw DataError("test.tsv line " + std::to_string(k + 1) + ": unknown user or item", k + 1);
    data.test.push_back(TestCase{*u, *i, parse_int(cols[2], k + 1, "timestamp")});
  }
  return data;
}

}  // namespace pdn
