#pragma once

#include <map>
#include <string>
#include <vector>

#include "lamina/energy/terms.hpp"

namespace lamina {

/// A named, weighted energy contribution.
struct Term {
  std::string name;
  double weight = 1.0;
  TermResult result;
};

/// Weighted sum of terms with per-block gradient accumulation.
struct EnergyReport {
  double total = 0.0;
  std::vector<std::pair<std::string, double>> term_values;  // unweighted, in order
  std::map<std::string, VecX> block_gradients;

  double term(const std::string& name) const {
    for (const auto& [n, v] : term_values)
      if (n == name) return v;
    throw Error("EnergyReport: unknown term '" + name + "'");
  }

  const VecX& gradient(const std::string& block) const {
    const auto it = block_gradients.find(block);
    if (it == block_gradients.end())
      throw Error("EnergyReport: unknown gradient block '" + block + "'");
    return it->second;
  }
};

inline EnergyReport compose(const std::vector<Term>& terms) {
  EnergyReport report;
  for (const auto& t : terms) {
    require(std::isfinite(t.weight), "compose: non-finite weight for term '" + t.name + "'");
    report.total += t.weight * t.result.value;
    report.term_values.emplace_back(t.name, t.result.value);
    for (const auto& [block, grad] : t.result.grads) {
      auto [it, fresh] = report.block_gradients.try_emplace(block, VecX::Zero(grad.size()));
      require(it->second.size() == grad.size(),
              "compose: gradient size mismatch in block '" + block + "'");
      it->second += t.weight * grad;
    }
  }
  return report;
}

}  // namespace lamina
