#include "pdn/optim.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace pdn {

void adam_step(ParamStore& params, const AdamConfig& cfg) {
  for (const auto& p : params) {
    for (std::size_t k = 0; k < p.grad.size(); ++k) {
      if (!std::isfinite(p.grad[k])) {
        std::ostringstream msg;
        msg << "non-finite gradient in parameter group '" << p.name << "' at index " << k << " (value " << p.grad[k]
            << ")";
        throw NonFiniteError(msg.str());
      }
    }
  }
  for (auto& p : params) {
    ++p.step;
    const double t = static_cast<double>(p.step);
    const double c1 = 1.0 - std::pow(cfg.beta1, t);
    const double c2 = 1.0 - std::pow(cfg.beta2, t);
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const double g = p.grad[k];
      double& m = p.first_moment[k];
      double& v = p.second_moment[k];
      m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
      v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
      if (m == 0.0) continue;
      const double m_hat = m / c1;
      const double v_hat = v / c2;
      p.value[k] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
  }
  params.zero_grad();
  params.touch();
}

GradCheckResult grad_check(const LossClosure& loss, ParamStore& params, const GradCheckOptions& options) {
  loss(params, true);
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (const auto& p : params) analytic.push_back(p.grad);

  // (param, coordinate) pairs to probe.
  std::vector<std::pair<std::size_t, std::size_t>> coords;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    for (std::size_t k = 0; k < params.at(pi).size(); ++k) coords.emplace_back(pi, k);
  }
  if (coords.size() > options.max_coordinates) {
    std::mt19937_64 rng(options.seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(options.max_coordinates);
    std::sort(coords.begin(), coords.end());
  }

  const double base = loss(params, false);
  const double ulp = std::numeric_limits<double>::epsilon();
  GradCheckResult result;
  for (auto [pi, k] : coords) {
    double& theta = params.at(pi).value[k];
    const double saved = theta;
    theta = saved + options.eps;
    const double up = loss(params, false);
    theta = saved - options.eps;
    const double down = loss(params, false);
    theta = saved;
    const double h = options.eps;
    const double a = analytic[pi][k];
    // Roundoff bound on a difference quotient of the three loss values.
    const double noise = 4.0 * ulp * (std::abs(up) + std::abs(down) + std::abs(base)) / h;
    // Central difference, plus one-sided ones for parameters sitting within eps of an activation kink.
    const double candidates[3] = {(up - down) / (2.0 * h), (up - base) / h, (base - down) / h};
    double rel = std::numeric_limits<double>::infinity();
    double numeric = candidates[0];
    for (double n : candidates) {
      const double denom = std::max({std::abs(a), std::abs(n), 1e-8});
      const double r = std::max(0.0, std::abs(a - n) - noise) / denom;
      if (r < rel) {
        rel = r;
        numeric = n;
      }
    }
    ++result.checked;
    if (rel > result.max_relative_error || result.checked == 1) {
      result.max_relative_error = rel;
      result.worst_param = params.at(pi).name;
      result.worst_index = k;
      result.worst_analytic = a;
      result.worst_numeric = numeric;
    }
  }
  params.zero_grad();
  return result;
}

}  // namespace pdn
