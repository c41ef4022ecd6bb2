#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "pdn/param_store.h"

namespace pdn {

enum class Activation { identity, leaky_relu };

/// Fully connected stack. Hidden layers use a leaky rectifier; the last layer uses
/// `output_activation`.
struct MlpSpec {
  std::size_t input_width = 0;
  std::vector<std::size_t> layer_widths;
  double leaky_slope = 0.01;
  Activation output_activation = Activation::identity;

  std::size_t output_width() const { return layer_widths.empty() ? 0 : layer_widths.back(); }
  void validate() const;
};

class Mlp;

/// Activations cached by one forward call. A tape may be consumed by exactly one backward call
/// and is invalidated if the parameters change in between.
struct MlpTape {
  const Mlp* owner = nullptr;
  std::uint64_t store_version = 0;
  bool live = false;
  // activations[0] is the input, activations[l + 1] the output of layer l.
  std::vector<std::vector<double>> activations;
  std::vector<std::vector<double>> pre_activations;

  std::span<const double> output() const { return activations.back(); }
};

struct MlpForward {
  std::vector<double> output;
  MlpTape tape;
};

class Mlp {
 public:
  Mlp() = default;
  /// Registers `<prefix>.w<l>` (out x in) and `<prefix>.b<l>` (1 x out) in `store`.
  Mlp(MlpSpec spec, ParamStore& store, const std::string& prefix);
  /// Binds to parameters already present in `store` (checkpoint load path).
  static Mlp bind(MlpSpec spec, const ParamStore& store, const std::string& prefix);

  const MlpSpec& spec() const { return spec_; }
  std::size_t layers() const { return spec_.layer_widths.size(); }
  ParamId weight(std::size_t layer) const { return weights_.at(layer); }
  ParamId bias(std::size_t layer) const { return biases_.at(layer); }

  void init(ParamStore& store, std::mt19937_64& rng) const;

  /// Forward pass reusing `tape`'s buffers. Returns a view of the output owned by the tape.
  std::span<const double> forward(const ParamStore& store, std::span<const double> input, MlpTape& tape) const;
  MlpForward forward(const ParamStore& store, std::span<const double> input) const;
  /// Inference only; no tape retained.
  std::vector<double> infer(const ParamStore& store, std::span<const double> input) const;

  /// Accumulates parameter gradients into `store` and writes d(loss)/d(input) into `input_grad`
  /// when it is non-empty. Consumes the tape.
  void backward(ParamStore& store, MlpTape& tape, std::span<const double> upstream, std::span<double> input_grad) const;
  std::vector<double> backward(ParamStore& store, MlpTape& tape, std::span<const double> upstream) const;

 private:
  MlpSpec spec_;
  std::vector<ParamId> weights_;
  std::vector<ParamId> biases_;
  std::string prefix_;
};

}  // namespace pdn
