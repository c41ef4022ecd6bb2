#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "pdn/param_store.h"

namespace pdn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam over every parameter group, then zeroes gradients.
/// Throws NonFiniteError naming the group if any gradient is NaN or infinite; nothing is updated then.
void adam_step(ParamStore& params, const AdamConfig& cfg);

/// Loss closure for gradient checking. When `with_grad` is set the closure must zero the
/// store's gradients and leave d(loss)/d(theta) in them.
using LossClosure = std::function<double(ParamStore&, bool with_grad)>;

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;

  bool ok(double tolerance) const { return max_relative_error < tolerance; }
};

struct GradCheckOptions {
  double eps = 1e-5;
  /// Check every coordinate when the store holds at most this many values; otherwise sample.
  std::size_t max_coordinates = 4000;
  std::uint64_t seed = 7;
};

/// Compares analytic gradients against finite differences.
/// Relative error per coordinate is max(0, |a - n| - noise) / max(|a|, |n|, 1e-8), where noise bounds
/// the roundoff of the difference quotient and n is whichever of the central and two one-sided
/// differences fits best (one-sided ones only matter when eps straddles a leaky-ReLU kink).
GradCheckResult grad_check(const LossClosure& loss, ParamStore& params, const GradCheckOptions& options = {});

}  // namespace pdn
