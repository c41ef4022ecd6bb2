#pragma once

#include <algorithm>
#include <cmath>
#include <limits>

namespace pdn {

/// ln(1 + e^x) without overflow: max(x, 0) + log1p(e^{-|x|}).
/// Floored at the smallest subnormal so the result stays > 0 below x = -745; NaN passes through.
inline double softplus(double x) {
  const double y = std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
  return std::max(y, std::numeric_limits<double>::denorm_min());
}

/// Derivative of softplus.
inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// log(1 - e^{-x}) for x > 0, branching at ln 2 to keep full precision at both ends.
inline double log1mexp(double x) {
  constexpr double kLn2 = 0.693147180559945309417;
  return x <= kLn2 ? std::log(-std::expm1(-x)) : std::log1p(-std::exp(-x));
}

/// Weight of a two-hop path: ln(1 + e^t e^s), evaluated as softplus(t + s).
inline double merge_path(double trigger_score, double sim_score) { return softplus(trigger_score + sim_score); }

}  // namespace pdn
