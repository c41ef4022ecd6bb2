#include "pdn/param_store.h"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace pdn {

std::string to_hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t from_hex(std::string_view s) {
  if (s.empty() || s.size() > 16) throw ConfigError("bad hex id '" + std::string(s) + "'");
  std::uint64_t v = 0;
  for (char c : s) {
    v <<= 4;
    if (c >= '0' && c <= '9') v |= static_cast<std::uint64_t>(c - '0');
    else if (c >= 'a' && c <= 'f') v |= static_cast<std::uint64_t>(c - 'a' + 10);
    else if (c >= 'A' && c <= 'F') v |= static_cast<std::uint64_t>(c - 'A' + 10);
    else throw ConfigError("bad hex id '" + std::string(s) + "'");
  }
  return v;
}

ParamId ParamStore::add(std::string name, std::size_t rows, std::size_t cols) {
  if (rows == 0 || cols == 0) throw DimensionError("parameter '" + name + "' has an empty shape");
  if (index_.count(name)) throw ConfigError("duplicate parameter '" + name + "'");
  Parameter p;
  p.name = std::move(name);
  p.rows = rows;
  p.cols = cols;
  p.value.assign(rows * cols, 0.0);
  p.grad.assign(rows * cols, 0.0);
  p.first_moment.assign(rows * cols, 0.0);
  p.second_moment.assign(rows * cols, 0.0);
  const ParamId id = params_.size();
  index_.emplace(p.name, id);
  params_.push_back(std::move(p));
  ++version_;
  return id;
}

ParamId ParamStore::id_of(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return it->second;
}

std::size_t ParamStore::total_values() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) std::fill(p.grad.begin(), p.grad.end(), 0.0);
}

void ParamStore::init_glorot(ParamId id, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  auto& p = at(id);
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (auto& v : p.value) v = dist(rng);
  ++version_;
}

void ParamStore::fill(ParamId id, double v) {
  auto& p = at(id);
  std::fill(p.value.begin(), p.value.end(), v);
  ++version_;
}

}  // namespace pdn
