#pragma once

#include <vector>

#include "lamina/common.hpp"
#include "lamina/energy/terms.hpp"

namespace lamina {

/// Linear operator producing per-vertex affine deformations from vertex
/// positions. D_i is the weighted least-squares affine map taking the
/// reference neighborhood of vertex i to its current positions; the
/// reference-dependent normal-equation factors are precomputed, so apply()
/// is linear in the positions and adjoint() pulls a gradient with respect to
/// the field back onto the positions exactly.
struct AffineFit {
  std::vector<std::vector<int>> neighbors;            // per vertex, self first
  std::vector<std::vector<double>> weights;           // matching fit weights
  std::vector<std::vector<Eigen::Vector4d>> factors;  // M_i^-1 · [v_j; 1] per neighbor

  int size() const { return static_cast<int>(neighbors.size()); }

  DeformationField apply(const std::vector<Vec3>& positions) const {
    require(static_cast<int>(positions.size()) == size(), "AffineFit: position count mismatch");
    DeformationField field;
    field.a.assign(size(), Mat3::Zero());
    field.t.assign(size(), Vec3::Zero());
    for (int i = 0; i < size(); ++i) {
      for (size_t k = 0; k < neighbors[i].size(); ++k) {
        const Vec3& x = positions[neighbors[i][k]];
        const double w = weights[i][k];
        const Eigen::Vector4d& q = factors[i][k];
        for (int r = 0; r < 3; ++r) {
          for (int c = 0; c < 3; ++c) field.a[i](r, c) += w * q[c] * x[r];
          field.t[i][r] += w * q[3] * x[r];
        }
      }
    }
    return field;
  }

  /// Transpose of apply() on a packed-field gradient (12 values per vertex,
  /// row-major A then t); returns a gradient over packed positions.
  VecX adjoint(const VecX& field_gradient) const {
    require(field_gradient.size() == 12 * size(), "AffineFit: field gradient size mismatch");
    VecX out = VecX::Zero(3 * size());
    for (int i = 0; i < size(); ++i) {
      for (size_t k = 0; k < neighbors[i].size(); ++k) {
        const int j = neighbors[i][k];
        const double w = weights[i][k];
        const Eigen::Vector4d& q = factors[i][k];
        for (int r = 0; r < 3; ++r) {
          double acc = field_gradient[12 * i + 9 + r] * q[3];
          for (int c = 0; c < 3; ++c) acc += field_gradient[12 * i + 3 * r + c] * q[c];
          out[3 * j + r] += w * acc;
        }
      }
    }
    return out;
  }
};

/// Builds the fit from reference positions and a rigidity graph. A small
/// trace-scaled Tikhonov term pins the null directions of degenerate
/// (coplanar or collinear) neighborhoods; those directions never touch the
/// fitted map's action on the reference points themselves.
inline AffineFit make_affine_fit(const std::vector<Vec3>& reference, const RigidityGraph& graph) {
  const int n = static_cast<int>(reference.size());
  require(static_cast<int>(graph.neighbors.size()) == n, "make_affine_fit: graph size mismatch");
  AffineFit fit;
  fit.neighbors.resize(n);
  fit.weights.resize(n);
  fit.factors.resize(n);
  for (int i = 0; i < n; ++i) {
    fit.neighbors[i].push_back(i);
    fit.weights[i].push_back(1.0);
    for (size_t k = 0; k < graph.neighbors[i].size(); ++k) {
      fit.neighbors[i].push_back(graph.neighbors[i][k]);
      fit.weights[i].push_back(graph.weights[i][k]);
    }
    Eigen::Matrix4d m = Eigen::Matrix4d::Zero();
    for (size_t k = 0; k < fit.neighbors[i].size(); ++k) {
      Eigen::Vector4d h;
      h << reference[fit.neighbors[i][k]], 1.0;
      m += fit.weights[i][k] * h * h.transpose();
    }
    m += 1e-12 * m.trace() * Eigen::Matrix4d::Identity();
    const Eigen::Matrix4d inverse = m.inverse();
    fit.factors[i].reserve(fit.neighbors[i].size());
    for (size_t k = 0; k < fit.neighbors[i].size(); ++k) {
      Eigen::Vector4d h;
      h << reference[fit.neighbors[i][k]], 1.0;
      fit.factors[i].push_back(inverse * h);
    }
  }
  return fit;
}

}  // namespace lamina
