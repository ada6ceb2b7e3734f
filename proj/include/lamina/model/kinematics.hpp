#pragma once

#include "lamina/common.hpp"

namespace lamina {

/// Joint hierarchy: `total_joints` regressed joints of which the first
/// `rotation_joints` articulate (joint 0 is the wrist root); the rest are
/// non-rotating end sites whose parents must be rotation joints. Parents
/// precede children in the numbering.
struct KinematicTree {
  int total_joints = 25;
  int rotation_joints = 19;
  std::vector<int> parent;          // parent[0] == -1
  std::vector<char> metacarpal;     // mask over rotation joints

  void validate() const {
    require(total_joints > 0 && rotation_joints > 0 && rotation_joints <= total_joints,
            "KinematicTree: bad joint counts");
    require(static_cast<int>(parent.size()) == total_joints,
            "KinematicTree: parent array size mismatch");
    require(parent[0] == -1, "KinematicTree: root must have no parent");
    for (int j = 1; j < total_joints; ++j) {
      require(parent[j] >= 0 && parent[j] < j,
              "KinematicTree: parents must precede children");
      if (j >= rotation_joints)
        require(parent[j] < rotation_joints,
                "KinematicTree: end-site parent must be a rotation joint");
    }
    require(static_cast<int>(metacarpal.size()) == rotation_joints,
            "KinematicTree: metacarpal mask size mismatch");
    int masked = 0;
    for (char m : metacarpal) masked += m ? 1 : 0;
    require(masked > 0 && masked < rotation_joints,
            "KinematicTree: metacarpal mask must be a strict nonempty subset");
  }

  /// Rotation joint whose transform carries joint j (itself, or its parent
  /// for end sites).
  int carrier(int j) const { return j < rotation_joints ? j : parent[j]; }
};

/// Axis-angle pose: one row per rotation joint (row 0 = global rotation)
/// plus a root translation in mm.
struct Pose {
  MatX theta;        // rotation_joints × 3
  Vec3 translation = Vec3::Zero();

  static Pose rest(int rotation_joints) {
    Pose p;
    p.theta = MatX::Zero(rotation_joints, 3);
    return p;
  }

  int joints() const { return static_cast<int>(theta.rows()); }

  bool is_finite() const {
    return theta.allFinite() && translation.allFinite();
  }
};

/// Wraps every axis-angle row to magnitude ≤ π (flipping the axis as needed).
inline Pose canonicalize(Pose pose) {
  for (int j = 0; j < pose.theta.rows(); ++j) {
    Vec3 v = pose.theta.row(j);
    const double angle = v.norm();
    if (angle <= M_PI || angle == 0.0) continue;
    double wrapped = std::fmod(angle, 2.0 * M_PI);
    if (wrapped > M_PI) wrapped -= 2.0 * M_PI;  // in (−π, π]
    pose.theta.row(j) = v * (wrapped / angle);
  }
  return pose;
}

/// Axis-angle to rotation matrix. Exact identity at zero; second-order
/// Taylor series near zero.
inline Mat3 rodrigues(const Vec3& v) {
  const double t2 = v.squaredNorm();
  Mat3 k;
  k << 0, -v[2], v[1], v[2], 0, -v[0], -v[1], v[0], 0;
  if (t2 < 1e-16) return Mat3::Identity() + k + 0.5 * (k * k);
  const double t = std::sqrt(t2);
  return Mat3::Identity() + (std::sin(t) / t) * k + ((1.0 - std::cos(t)) / t2) * (k * k);
}

/// ∂R/∂v_c for each axis-angle component c (Gallego & Yezzi 2015, Eq. 9).
inline std::array<Mat3, 3> rodrigues_jacobian(const Vec3& v) {
  std::array<Mat3, 3> out;
  const double t2 = v.squaredNorm();
  const Mat3 r = rodrigues(v);
  for (int c = 0; c < 3; ++c) {
    Vec3 e = Vec3::Zero();
    e[c] = 1.0;
    if (t2 < 1e-16) {
      Mat3 k;
      k << 0, -e[2], e[1], e[2], 0, -e[0], -e[1], e[0], 0;
      out[c] = k;
      continue;
    }
    const Vec3 w = v[c] * v + v.cross((Mat3::Identity() - r) * e);
    Mat3 k;
    k << 0, -w[2], w[1], w[2], 0, -w[0], -w[1], w[0], 0;
    out[c] = (k / t2) * r;
  }
  return out;
}

/// Rigid transform as rotation + translation; composition and point action.
struct Rigid {
  Mat3 rot = Mat3::Identity();
  Vec3 trans = Vec3::Zero();

  Vec3 operator*(const Vec3& p) const { return rot * p + trans; }
  Rigid operator*(const Rigid& o) const { return {rot * o.rot, rot * o.trans + trans}; }

  Mat4 matrix() const {
    Mat4 m = Mat4::Identity();
    m.topLeftCorner<3, 3>() = rot;
    m.topRightCorner<3, 1>() = trans;
    return m;
  }
};

/// Rotation about a fixed center: Tr(c) · R · Tr(−c).
inline Rigid about(const Vec3& center, const Mat3& r) {
  return {r, r * (-center) + center};
}

struct FkResult {
  std::vector<Rigid> skinning;  // rest-relative transform per rotation joint
  std::vector<Vec3> joints;     // posed position per total joint
};

/// Forward kinematics over rest joints: composes per-joint rotations about
/// their rest centers down the tree, so the rest pose yields exact identity
/// transforms. Posed joint j is its carrier's transform applied to its rest
/// position.
inline FkResult forward_kinematics(const std::vector<Vec3>& rest_joints, const Pose& pose,
                                   const KinematicTree& tree) {
  tree.validate();
  require(static_cast<int>(rest_joints.size()) == tree.total_joints,
          "forward_kinematics: rest joint count mismatch");
  require(pose.joints() == tree.rotation_joints,
          "forward_kinematics: pose row count mismatch");
  require(pose.is_finite(), "forward_kinematics: pose contains NaN or infinity");

  FkResult out;
  out.skinning.resize(tree.rotation_joints);
  for (int j = 0; j < tree.rotation_joints; ++j) {
    const Rigid local = about(rest_joints[j], rodrigues(pose.theta.row(j)));
    if (j == 0) {
      out.skinning[j] = Rigid{Mat3::Identity(), pose.translation} * local;
    } else {
      out.skinning[j] = out.skinning[tree.parent[j]] * local;
    }
  }
  out.joints.resize(tree.total_joints);
  for (int j = 0; j < tree.total_joints; ++j)
    out.joints[j] = out.skinning[tree.carrier(j)] * rest_joints[j];
  return out;
}

/// Pose degrees of freedom are indexed row-major over θ (3 per rotation
/// joint) followed by the 3 root-translation components.
inline int pose_dof_count(const KinematicTree& tree) { return 3 * tree.rotation_joints + 3; }

inline VecX pack_pose(const Pose& pose) {
  const int k = pose.joints();
  VecX x(3 * k + 3);
  for (int j = 0; j < k; ++j) x.segment<3>(3 * j) = pose.theta.row(j).transpose();
  x.tail<3>() = pose.translation;
  return x;
}

inline Pose unpack_pose(const VecX& x, int rotation_joints) {
  require(x.size() == 3 * rotation_joints + 3, "unpack_pose: dof count mismatch");
  Pose pose = Pose::rest(rotation_joints);
  for (int j = 0; j < rotation_joints; ++j) pose.theta.row(j) = x.segment<3>(3 * j).transpose();
  pose.translation = x.tail<3>();
  return pose;
}

/// Analytic derivatives of the skinning transforms and posed joints with
/// respect to pose dofs and rest joint positions. Sparse: each rotation
/// joint only depends on its ancestor chain.
struct FkDerivatives {
  // d(skinning[j]) / d(pose dof): nonzero dofs with rotation+translation parts
  struct DRigid {
    int dof;
    Mat3 rot;
    Vec3 trans;
  };
  std::vector<std::vector<DRigid>> dA;  // per rotation joint

  // d(skinning[j].trans) / d(rest joint m): 3×3 per (j, m in chain(j));
  // rotation block is independent of rest joints
  struct DJointCoeff {
    int joint;
    Mat3 coeff;
  };
  std::vector<std::vector<DJointCoeff>> dA_dJ;  // per rotation joint
};

inline FkDerivatives forward_kinematics_derivatives(const std::vector<Vec3>& rest_joints,
                                                    const Pose& pose,
                                                    const KinematicTree& tree,
                                                    const FkResult& fk) {
  FkDerivatives out;
  const int K = tree.rotation_joints;
  out.dA.resize(K);
  out.dA_dJ.resize(K);

  std::vector<Mat3> local_rot(K);
  std::vector<std::array<Mat3, 3>> local_drot(K);
  for (int j = 0; j < K; ++j) {
    local_rot[j] = rodrigues(pose.theta.row(j));
    local_drot[j] = rodrigues_jacobian(pose.theta.row(j));
  }

  for (int j = 0; j < K; ++j) {
    // suffix product of locals strictly below each ancestor, walking up
    Rigid suffix;  // identity
    for (int a = j; a >= 0; a = tree.parent[a]) {
      const Rigid prefix = a == 0 ? Rigid{Mat3::Identity(), pose.translation}
                                  : fk.skinning[tree.parent[a]];
      for (int c = 0; c < 3; ++c) {
        // d[Tr(J) R Tr(−J)]/dθ_c = [dR | −dR·J]; its homogeneous form has a
        // zero bottom row, so compose blocks explicitly instead of via Rigid
        const Mat3& dr = local_drot[a][c];
        const Vec3 dt = -(dr * rest_joints[a]);
        out.dA[j].push_back({3 * a + c, prefix.rot * dr * suffix.rot,
                             prefix.rot * (dr * suffix.trans + dt)});
      }
      // rest-joint coefficient: moving center a shifts the subtree by
      // R_world(parent(a)) (I − R_a)
      out.dA_dJ[j].push_back({a, prefix.rot * (Mat3::Identity() - local_rot[a])});
      suffix = about(rest_joints[a], local_rot[a]) * suffix;
    }
    // root translation: pure left-translation of everything
    for (int c = 0; c < 3; ++c) {
      Vec3 e = Vec3::Zero();
      e[c] = 1.0;
      out.dA[j].push_back({3 * K + c, Mat3::Zero(), e});
    }
  }
  return out;
}

/// Accumulates d(posed joint p_j)/d(dof) and /d(rest joint) from FkDerivatives.
/// p_j = A_{carrier(j)} · rest_joints[j].
struct PosedJointJacobian {
  // dense per joint: 3 × pose_dof_count
  std::vector<MatX> dpose;
  // per joint: list of (rest joint m, 3×3 coefficient)
  std::vector<std::vector<FkDerivatives::DJointCoeff>> drest;
};

inline PosedJointJacobian posed_joint_jacobian(const std::vector<Vec3>& rest_joints,
                                               const KinematicTree& tree,
                                               const FkResult& fk,
                                               const FkDerivatives& deriv) {
  PosedJointJacobian out;
  const int dofs = pose_dof_count(tree);
  out.dpose.resize(tree.total_joints);
  out.drest.resize(tree.total_joints);
  for (int j = 0; j < tree.total_joints; ++j) {
    const int r = tree.carrier(j);
    MatX d = MatX::Zero(3, dofs);
    for (const auto& e : deriv.dA[r]) d.col(e.dof) = e.rot * rest_joints[j] + e.trans;
    out.dpose[j] = d;
    out.drest[j] = deriv.dA_dJ[r];
    // moving rest joint j itself also moves p_j through A's point action
    bool merged = false;
    for (auto& e : out.drest[j])
      if (e.joint == j) {
        e.coeff += fk.skinning[r].rot;
        merged = true;
      }
    if (!merged) out.drest[j].push_back({j, fk.skinning[r].rot});
  }
  return out;
}

}  // namespace lamina
