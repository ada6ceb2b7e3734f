#pragma once

#include <algorithm>
#include <numeric>

#include "lamina/model/kinematics.hpp"

namespace lamina {

/// Orthonormal shape PCA over the stacked template vertices.
struct ShapeSpace {
  VecX mean;             // 3·vertex_count
  MatX components;       // rank × 3·vertex_count, rows orthonormal
  VecX singular_values;  // non-increasing

  int rank() const { return static_cast<int>(components.rows()); }

  void validate() const {
    require(components.cols() == mean.size(), "ShapeSpace: component width mismatch");
    require(singular_values.size() == components.rows(),
            "ShapeSpace: singular value count mismatch");
    if (rank() > 0) {
      const MatX gram = components * components.transpose();
      require((gram - MatX::Identity(rank(), rank())).cwiseAbs().maxCoeff() < 1e-6,
              "ShapeSpace: components not orthonormal");
    }
    for (int i = 1; i < singular_values.size(); ++i)
      require(singular_values[i] <= singular_values[i - 1] + 1e-12,
              "ShapeSpace: singular values must be non-increasing");
  }
};

/// B_S = βᵀ𝒮, reshaped per vertex.
inline VecX shape_blend(const VecX& beta, const ShapeSpace& space) {
  require(beta.size() <= space.components.rows(),
          "shape_blend: coefficient length exceeds shape-space rank");
  VecX offsets = VecX::Zero(space.mean.size());
  if (beta.size() > 0) offsets = space.components.topRows(beta.size()).transpose() * beta;
  return offsets;
}

/// Pose feature of Eq.-style blend correction: concatenated row-major
/// vec(R(θ_j) − I) over the non-root rotation joints, 9(K−1) values.
inline VecX pose_feature(const Pose& pose) {
  const int K = pose.joints();
  VecX f(9 * (K - 1));
  for (int j = 1; j < K; ++j) {
    const Mat3 d = rodrigues(pose.theta.row(j)) - Mat3::Identity();
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) f[9 * (j - 1) + 3 * r + c] = d(r, c);
  }
  return f;
}

/// d(pose_feature)/dθ: sparse — feature block j−1 depends only on θ row j.
/// Returned as per-joint 9×3 blocks for joints 1..K−1.
inline std::vector<MatX> pose_feature_jacobian(const Pose& pose) {
  const int K = pose.joints();
  std::vector<MatX> blocks;
  blocks.reserve(K - 1);
  for (int j = 1; j < K; ++j) {
    const auto dr = rodrigues_jacobian(pose.theta.row(j));
    MatX block(9, 3);
    for (int c = 0; c < 3; ++c)
      for (int r = 0; r < 3; ++r)
        for (int cc = 0; cc < 3; ++cc) block(3 * r + cc, c) = dr[c](r, cc);
    blocks.push_back(block);
  }
  return blocks;
}

/// Linear map from pose features to per-vertex offsets.
struct PoseBlendShapes {
  MatX matrix;  // 3·vertex_count × 9(K−1)

  void validate() const { require(matrix.allFinite(), "PoseBlendShapes: non-finite"); }
};

/// B_P = 𝒫 · pose_feature(θ); exactly zero at rest.
inline VecX pose_blend(const Pose& pose, const PoseBlendShapes& blends) {
  const VecX f = pose_feature(pose);
  require(blends.matrix.cols() == f.size(), "pose_blend: feature width mismatch");
  if (f.isZero(0.0)) return VecX::Zero(blends.matrix.rows());
  return blends.matrix * f;
}

/// Non-negative row-stochastic vertex→joint weights, at most `max_nonzero`
/// entries per row.
struct SkinningWeights {
  MatX w;  // vertex_count × K
  static constexpr int max_nonzero = 8;

  int vertices() const { return static_cast<int>(w.rows()); }
  int joints() const { return static_cast<int>(w.cols()); }

  void validate() const {
    require(w.minCoeff() >= 0.0, "SkinningWeights: negative entry");
    for (int i = 0; i < w.rows(); ++i) {
      require(std::abs(w.row(i).sum() - 1.0) < 1e-6,
              "SkinningWeights: row " + std::to_string(i) + " does not sum to 1");
      int nonzero = 0;
      for (int k = 0; k < w.cols(); ++k) nonzero += w(i, k) > 0.0 ? 1 : 0;
      require(nonzero <= max_nonzero,
              "SkinningWeights: row " + std::to_string(i) + " too dense");
    }
  }
};

/// Per-row Euclidean projection onto the sparse probability simplex: the
/// support is restricted to the `keep` largest entries (ties broken by lower
/// column index), which are then projected onto the simplex by the sort-based
/// thresholding algorithm. Euclidean (rather than a rescale) matters for
/// projected gradient descent: the projected step must never turn uphill.
inline MatX project_row_stochastic_sparse(MatX w, int keep) {
  std::vector<int> order(w.cols());
  std::vector<double> kept;
  for (int i = 0; i < w.rows(); ++i) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return w(i, a) > w(i, b); });
    const int n = std::min<int>(keep, static_cast<int>(w.cols()));
    kept.assign(n, 0.0);
    for (int k = 0; k < n; ++k) kept[k] = w(i, order[k]);  // already descending
    double css = 0.0;
    double theta = 0.0;
    for (int k = 0; k < n; ++k) {
      css += kept[k];
      const double t = (css - 1.0) / (k + 1);
      if (kept[k] - t > 0.0) theta = t;
    }
    for (int k = 0; k < static_cast<int>(w.cols()); ++k) {
      const double proj = k < n ? std::max(kept[k] - theta, 0.0) : 0.0;
      w(i, order[k]) = proj;
    }
  }
  return w;
}

/// Sparse non-negative row-stochastic map from bone vertices to joints.
struct JointRegressor {
  MatX j;  // total_joints × bone_vertex_count

  void validate() const {
    require(j.minCoeff() >= 0.0, "JointRegressor: negative entry");
    for (int r = 0; r < j.rows(); ++r)
      require(std::abs(j.row(r).sum() - 1.0) < 1e-6,
              "JointRegressor: row " + std::to_string(r) + " does not sum to 1");
  }
};

/// J_p = 𝒥 · bone vertices.
inline std::vector<Vec3> regress_joints(const std::vector<Vec3>& bone_vertices,
                                        const JointRegressor& reg) {
  require(reg.j.cols() == static_cast<int>(bone_vertices.size()),
          "regress_joints: bone vertex count mismatch");
  std::vector<Vec3> joints(reg.j.rows(), Vec3::Zero());
  for (int r = 0; r < reg.j.rows(); ++r) {
    Vec3 acc = Vec3::Zero();
    for (int c = 0; c < reg.j.cols(); ++c)
      if (reg.j(r, c) != 0.0) acc += reg.j(r, c) * bone_vertices[c];
    joints[r] = acc;
  }
  return joints;
}

}  // namespace lamina
