#pragma once

#include <functional>

#include "lamina/common.hpp"

namespace lamina {

/// Central-difference gradient of a scalar function: (f(x+εeᵢ) − f(x−εeᵢ))/2ε.
inline VecX numeric_gradient(const std::function<double(const VecX&)>& f, VecX x,
                             double eps = 1e-5) {
  VecX g(x.size());
  for (int i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + eps;
    const double fp = f(x);
    x[i] = saved - eps;
    const double fm = f(x);
    x[i] = saved;
    require(std::isfinite(fp) && std::isfinite(fm),
            "numeric_gradient: non-finite function value");
    g[i] = (fp - fm) / (2.0 * eps);
  }
  return g;
}

/// Relative gradient error max_i |a_i − b_i| / max(1, ‖a‖_∞, ‖b‖_∞).
inline double gradient_rel_error(const VecX& a, const VecX& b) {
  const double scale = std::max({1.0, a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff()});
  return (a - b).cwiseAbs().maxCoeff() / scale;
}

}  // namespace lamina
