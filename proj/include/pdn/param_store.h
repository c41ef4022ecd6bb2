#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "pdn/common.h"

namespace pdn {

/// One named dense parameter group (matrix or vector), row-major.
struct Parameter {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> value;
  std::vector<double> grad;
  // Adam state.
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  std::uint64_t step = 0;

  std::size_t size() const { return value.size(); }
  std::span<double> row(std::size_t r) { return {value.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {value.data() + r * cols, cols}; }
  std::span<double> grad_row(std::size_t r) { return {grad.data() + r * cols, cols}; }
};

using ParamId = std::size_t;

/// Owns every learnable parameter of a model. Single-writer: forward passes only read values,
/// backward passes accumulate into `grad`, and the optimizer is the only mutator of `value`.
class ParamStore {
 public:
  ParamId add(std::string name, std::size_t rows, std::size_t cols);

  Parameter& at(ParamId id) { return params_.at(id); }
  const Parameter& at(ParamId id) const { return params_.at(id); }
  ParamId id_of(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::size_t size() const { return params_.size(); }
  std::size_t total_values() const;
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  void zero_grad();

  /// Bumped whenever values change through the store's mutators; tapes record it.
  std::uint64_t version() const { return version_; }
  void touch() { ++version_; }

  /// Uniform in +-sqrt(6 / (fan_in + fan_out)).
  void init_glorot(ParamId id, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng);
  void fill(ParamId id, double v);

 private:
  std::vector<Parameter> params_;
  std::unordered_map<std::string, ParamId> index_;
  std::uint64_t version_ = 0;
};

}  // namespace pdn
