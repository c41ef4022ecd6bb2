#include "pdn/mlp.h"

#include <algorithm>

namespace pdn {

void MlpSpec::validate() const {
  if (input_width == 0) throw DimensionError("mlp input width must be >= 1");
  if (layer_widths.empty()) throw DimensionError("mlp needs at least one layer");
  for (std::size_t l = 0; l < layer_widths.size(); ++l) {
    if (layer_widths[l] == 0) throw DimensionError("mlp layer " + std::to_string(l) + " has width 0");
  }
  if (!(leaky_slope >= 0.0)) throw ConfigError("leaky slope must be non-negative");
}

Mlp::Mlp(MlpSpec spec, ParamStore& store, const std::string& prefix) : spec_(std::move(spec)), prefix_(prefix) {
  spec_.validate();
  std::size_t in = spec_.input_width;
  for (std::size_t l = 0; l < spec_.layer_widths.size(); ++l) {
    const std::size_t out = spec_.layer_widths[l];
    weights_.push_back(store.add(prefix + ".w" + std::to_string(l), out, in));
    biases_.push_back(store.add(prefix + ".b" + std::to_string(l), 1, out));
    in = out;
  }
}

Mlp Mlp::bind(MlpSpec spec, const ParamStore& store, const std::string& prefix) {
  spec.validate();
  Mlp m;
  m.spec_ = std::move(spec);
  m.prefix_ = prefix;
  std::size_t in = m.spec_.input_width;
  for (std::size_t l = 0; l < m.spec_.layer_widths.size(); ++l) {
    const std::size_t out = m.spec_.layer_widths[l];
    const ParamId w = store.id_of(prefix + ".w" + std::to_string(l));
    const ParamId b = store.id_of(prefix + ".b" + std::to_string(l));
    if (store.at(w).rows != out || store.at(w).cols != in || store.at(b).cols != out) {
      throw DimensionError("parameter shapes of '" + prefix + "' layer " + std::to_string(l) +
                           " do not match the declared widths");
    }
    m.weights_.push_back(w);
    m.biases_.push_back(b);
    in = out;
  }
  return m;
}

void Mlp::init(ParamStore& store, std::mt19937_64& rng) const {
  for (std::size_t l = 0; l < layers(); ++l) {
    const auto& w = store.at(weights_[l]);
    store.init_glorot(weights_[l], w.cols, w.rows, rng);
    store.fill(biases_[l], 0.0);
  }
}

std::span<const double> Mlp::forward(const ParamStore& store, std::span<const double> input, MlpTape& tape) const {
  if (input.size() != spec_.input_width) {
    throw DimensionError(prefix_ + " layer 0: expected input width " + std::to_string(spec_.input_width) + ", got " +
                         std::to_string(input.size()));
  }
  const std::size_t n = layers();
  tape.owner = this;
  tape.store_version = store.version();
  tape.live = true;
  tape.activations.resize(n + 1);
  tape.pre_activations.resize(n);
  tape.activations[0].assign(input.begin(), input.end());

  for (std::size_t l = 0; l < n; ++l) {
    const Parameter& w = store.at(weights_[l]);
    const Parameter& b = store.at(biases_[l]);
    const auto& x = tape.activations[l];
    if (w.cols != x.size()) {
      throw DimensionError(prefix_ + " layer " + std::to_string(l) + ": weight expects " + std::to_string(w.cols) +
                           " inputs, got " + std::to_string(x.size()));
    }
    auto& z = tape.pre_activations[l];
    auto& a = tape.activations[l + 1];
    z.resize(w.rows);
    a.resize(w.rows);
    const bool last = l + 1 == n;
    const bool leaky = !last || spec_.output_activation == Activation::leaky_relu;
    for (std::size_t r = 0; r < w.rows; ++r) {
      const double* wr = w.value.data() + r * w.cols;
      double acc = b.value[r];
      for (std::size_t c = 0; c < w.cols; ++c) acc += wr[c] * x[c];
      z[r] = acc;
      a[r] = (leaky && acc < 0.0) ? spec_.leaky_slope * acc : acc;
    }
  }
  return tape.activations.back();
}

MlpForward Mlp::forward(const ParamStore& store, std::span<const double> input) const {
  MlpForward f;
  auto out = forward(store, input, f.tape);
  f.output.assign(out.begin(), out.end());
  return f;
}

std::vector<double> Mlp::infer(const ParamStore& store, std::span<const double> input) const {
  MlpTape tape;
  auto out = forward(store, input, tape);
  return {out.begin(), out.end()};
}

void Mlp::backward(ParamStore& store, MlpTape& tape, std::span<const double> upstream,
                   std::span<double> input_grad) const {
  if (!tape.live || tape.owner != this) throw StaleTapeError(prefix_ + ": tape was already consumed or belongs to another net");
  if (tape.store_version != store.version()) {
    throw StaleTapeError(prefix_ + ": parameters changed since the forward pass");
  }
  if (upstream.size() != spec_.output_width()) {
    throw DimensionError(prefix_ + ": upstream gradient has width " + std::to_string(upstream.size()) + ", expected " +
                         std::to_string(spec_.output_width()));
  }
  if (!input_grad.empty() && input_grad.size() != spec_.input_width) {
    throw DimensionError(prefix_ + ": input gradient buffer has the wrong width");
  }
  tape.live = false;

  const std::size_t n = layers();
  std::vector<double> delta(upstream.begin(), upstream.end());
  std::vector<double> next;
  for (std::size_t l = n; l-- > 0;) {
    Parameter& w = store.at(weights_[l]);
    Parameter& b = store.at(biases_[l]);
    const auto& z = tape.pre_activations[l];
    const auto& x = tape.activations[l];
    const bool last = l + 1 == n;
    const bool leaky = !last || spec_.output_activation == Activation::leaky_relu;
    if (leaky) {
      for (std::size_t r = 0; r < delta.size(); ++r) {
        if (z[r] < 0.0) delta[r] *= spec_.leaky_slope;
      }
    }
    const bool need_input = l > 0 || !input_grad.empty();
    if (need_input) next.assign(w.cols, 0.0);
    for (std::size_t r = 0; r < w.rows; ++r) {
      const double d = delta[r];
      if (d == 0.0) continue;
      b.grad[r] += d;
      double* gr = w.grad.data() + r * w.cols;
      const double* wr = w.value.data() + r * w.cols;
      for (std::size_t c = 0; c < w.cols; ++c) gr[c] += d * x[c];
      if (need_input) {
        for (std::size_t c = 0; c < w.cols; ++c) next[c] += wr[c] * d;
      }
    }
    if (l == 0) {
      if (!input_grad.empty()) std::copy(next.begin(), next.end(), input_grad.begin());
    } else {
      delta.swap(next);
    }
  }
}

std::vector<double> Mlp::backward(ParamStore& store, MlpTape& tape, std::span<const double> upstream) const {
  std::vector<double> g(spec_.input_width, 0.0);
  backward(store, tape, upstream, g);
  return g;
}

}  // namespace pdn
