#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "pdn/common.h"

namespace pdn {

struct Interaction {
  UserId user = 0;
  ItemId item = 0;
  std::int64_t timestamp = 0;
  std::uint32_t extra_offset = 0;  // index into InteractionLog::extra_values()
};

/// One row as it appears in an input file, before id densification.
struct RawInteraction {
  std::string user;
  std::string item;
  std::int64_t timestamp = 0;
  std::optional<std::string> category;
  std::vector<double> extras;
};

enum class LogFormat {
  tsv,        // user_id \t item_id \t timestamp [\t category_id [\t extra...]]
  movielens,  // ratings.dat "u::i::rating::ts", categories from a sibling movies.dat
};

LogFormat parse_log_format(const std::string& name);

struct LogStats {
  std::size_t users = 0;
  std::size_t items = 0;
  std::size_t interactions = 0;
  std::size_t dropped_users = 0;
  std::size_t dropped_interactions = 0;
};

/// Interaction records grouped per user in chronological order (ties keep file order).
/// Users and items carry dense ids; the external ids are kept for export.
class InteractionLog {
 public:
  std::size_t num_users() const { return user_names_.size(); }
  std::size_t num_items() const { return item_names_.size(); }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }

  std::span<const Interaction> history(UserId u) const {
    return {records_.data() + offsets_.at(u), offsets_.at(u + 1) - offsets_.at(u)};
  }
  std::span<const Interaction> records() const { return records_; }
  std::span<const double> extras(const Interaction& r) const {
    return {extra_values_.data() + r.extra_offset, extra_columns_};
  }
  std::size_t extra_columns() const { return extra_columns_; }
  const std::vector<std::string>& extra_names() const { return extra_names_; }

  const std::string& user_name(UserId u) const { return user_names_.at(u); }
  const std::string& item_name(ItemId i) const { return item_names_.at(i); }
  std::optional<UserId> find_user(const std::string& name) const;
  std::optional<ItemId> find_item(const std::string& name) const;

  /// Dense category id per item, -1 when unknown.
  std::int32_t category(ItemId i) const { return item_category_.at(i); }
  std::size_t num_categories() const { return category_names_.size(); }
  const std::string& category_name(std::size_t c) const { return category_names_.at(c); }
  bool has_categories() const { return !category_names_.empty(); }

  /// Number of distinct users who interacted with each item.
  const std::vector<std::uint32_t>& item_user_counts() const { return item_user_counts_; }
  std::int64_t max_timestamp() const { return max_timestamp_; }

  const LogStats& stats() const { return stats_; }

  /// Returns a log with the same user/item universe and the given per-user record subsets.
  InteractionLog with_records(std::vector<std::vector<Interaction>> per_user) const;

  friend class LogBuilder;

 private:
  void finalize();

  std::vector<std::string> user_names_;
  std::vector<std::string> item_names_;
  std::unordered_map<std::string, UserId> user_index_;
  std::unordered_map<std::string, ItemId> item_index_;
  std::vector<std::int32_t> item_category_;
  std::vector<std::string> category_names_;
  std::vector<Interaction> records_;
  std::vector<std::size_t> offsets_;
  std::size_t extra_columns_ = 0;
  std::vector<std::string> extra_names_;
  std::vector<double> extra_values_;
  std::vector<std::uint32_t> item_user_counts_;
  std::int64_t max_timestamp_ = 0;
  LogStats stats_;
};

/// Builds an InteractionLog from raw rows, applying the minimum-interactions user filter.
class LogBuilder {
 public:
  explicit LogBuilder(std::size_t extra_columns = 0, std::vector<std::string> extra_names = {});

  void add(RawInteraction row, std::size_t line = 0);
  /// Declares an item (and its category) even if no retained user interacts with it.
  void declare_item(const std::string& item, std::optional<std::string> category);
  void declare_user(const std::string& user);
  void set_category(const std::string& item, const std::string& category);

  /// Users with fewer than `min_interactions` rows are dropped. Throws DataError if nothing remains.
  InteractionLog build(std::size_t min_interactions) const;

 private:
  std::size_t extra_columns_;
  std::vector<std::string> extra_names_;
  std::vector<RawInteraction> rows_;
  std::vector<std::string> declared_users_;
  std::vector<std::string> declared_items_;
  std::unordered_map<std::string, std::string> categories_;
};

struct LoadOptions {
  std::size_t min_interactions = 20;
};

InteractionLog load_log(const std::filesystem::path& path, LogFormat format, const LoadOptions& options = {});

struct TestCase {
  UserId user = 0;
  ItemId target = 0;
  std::int64_t timestamp = 0;
};

/// Training log plus one held-out case per user; both share one id universe.
struct Dataset {
  InteractionLog train;
  std::vector<TestCase> test;
};

/// Chronologically last interaction of every user becomes the test target.
Dataset split_leave_one_out(const InteractionLog& log);

/// Prepared-dataset directory: users.tsv, items.tsv, train.tsv, test.tsv.
void save_dataset(const Dataset& data, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace pdn
