#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "lamina/common.hpp"

namespace lamina {

struct DescentOptions {
  int max_iterations = 500;
  double relative_tolerance = 1e-6;  // stop when accepted decrease falls below tol·(1+|f|)
  double gradient_tolerance = 1e-9;  // stop when ‖g‖∞ falls below tol·(1+|f|)
  double initial_step = 1.0;
  double shrink = 0.5;
  double grow = 1.5;
  int max_backtracks = 40;
  int max_failures = 10;  // consecutive failed line searches before giving up
  // applied to every trial point before evaluation (projected descent);
  // the line search then guarantees decrease on the projected iterates
  std::function<void(VecX&)> project;
};

struct DescentTrace {
  int iteration = 0;
  double value = 0.0;
  double step = 0.0;
};

class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& message, std::vector<DescentTrace> history)
      : Error(message), trace(std::move(history)) {}

  std::vector<DescentTrace> trace;
};

struct DescentResult {
  VecX x;
  double value = 0.0;
  VecX gradient;
  std::vector<DescentTrace> trace;  // initial value plus one entry per accepted step
  bool converged = false;           // tolerance reached, as opposed to the iteration cap
  int iterations = 0;
  double step = 0.0;  // last accepted step length, for warm starts
  int failures = 0;   // consecutive line-search failures at exit
};

/// f(x, g) returns the objective value and, when g is non-null, fills the
/// gradient. Gradients are only requested for accepted points.
using Objective = std::function<double(const VecX&, VecX*)>;

/// Gradient descent with a backtracking line search. The trial step length
/// uses the Barzilai–Borwein estimate s = ⟨Δx,Δx⟩/⟨Δx,Δg⟩ when the last two
/// gradients show positive curvature (plain step growth otherwise), which
/// keeps ill-conditioned problems from crawling while the monotone line
/// search preserves the never-increase contract. Throws DivergenceError
/// (carrying the trace so far) after max_failures consecutive iterations in
/// which no step length produced a decrease.
inline DescentResult descend(const Objective& f, VecX x0, const DescentOptions& options = {}) {
  require(x0.size() > 0, "descend: empty start point");
  DescentResult res;
  res.x = std::move(x0);
  if (options.project) options.project(res.x);
  res.value = f(res.x, &res.gradient);
  require(std::isfinite(res.value), "descend: objective not finite at start point");
  require(res.gradient.size() == res.x.size(), "descend: gradient size mismatch");
  res.trace.push_back({0, res.value, 0.0});
  res.step = options.initial_step;

  double step = options.initial_step;
  VecX prev_x, prev_gradient;
  bool have_history = false;
  for (int it = 1; it <= options.max_iterations; ++it) {
    res.iterations = it;
    const double gnorm = res.gradient.cwiseAbs().maxCoeff();
    if (gnorm <= options.gradient_tolerance * (1.0 + std::abs(res.value))) {
      res.converged = true;
      break;
    }
    if (options.project) {
      // constrained stationarity: the unit-step projected gradient mapping;
      // a large plain gradient may be entirely blocked by the constraints
      VecX probe = res.x - res.gradient;
      options.project(probe);
      if ((probe - res.x).cwiseAbs().maxCoeff() <=
          options.gradient_tolerance * (1.0 + std::abs(res.value))) {
        res.converged = true;
        break;
      }
    }

    double trial = step;
    if (have_history) {
      const VecX dx = res.x - prev_x;
      const VecX dg = res.gradient - prev_gradient;
      const double num = dx.squaredNorm();
      const double den = dx.dot(dg);
      if (den > 0.0 && num > 0.0 && std::isfinite(num / den)) trial = num / den;
    }

    bool accepted = false;
    double s = trial;
    for (int bt = 0; bt < options.max_backtracks; ++bt, s *= options.shrink) {
      VecX candidate = res.x - s * res.gradient;
      if (options.project) options.project(candidate);
      const double value = f(candidate, nullptr);
      if (!std::isfinite(value) || value >= res.value) continue;
      const double decrease = res.value - value;
      prev_x = std::move(res.x);
      prev_gradient = std::move(res.gradient);
      have_history = true;
      res.x = candidate;
      res.value = f(res.x, &res.gradient);
      res.trace.push_back({it, res.value, s});
      res.step = s;
      step = s * options.grow;
      res.failures = 0;
      accepted = true;
      if (decrease < options.relative_tolerance * (1.0 + std::abs(res.value))) res.converged = true;
      break;
    }
    if (res.converged) break;
    if (!accepted) {
      if (++res.failures >= options.max_failures) {
        throw DivergenceError("descend: no decrease after " + std::to_string(res.failures) +
                                  " consecutive line searches (value " + std::to_string(res.value) +
                                  ", |grad| " + std::to_string(gnorm) + ")",
                              res.trace);
      }
      step *= options.shrink;
      have_history = false;  // the stale curvature estimate kept failing
    }
  }
  return res;
}

}  // namespace lamina
