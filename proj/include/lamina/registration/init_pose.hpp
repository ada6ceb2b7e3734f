#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "lamina/common.hpp"
#include "lamina/model/kinematics.hpp"
#include "lamina/opt/descent.hpp"

namespace lamina {

struct InitPoseResult {
  Pose pose;
  double residual = 0.0;  // final sum of squared joint distances, mm^2
  double rms = 0.0;       // root-mean-square joint distance, mm
  int iterations = 0;
  std::vector<DescentTrace> trace;
};

/// Pose initialization by gradient descent from the rest pose against
/// annotated joint positions. Runs a rigid stage first (root rotation and
/// translation only) so global alignment does not have to be found through
/// the articulated joints, then releases all degrees of freedom.
inline InitPoseResult init_pose(const KinematicTree& tree, const std::vector<Vec3>& rest_joints,
                                const std::vector<Vec3>& target_joints, int max_iterations = 4000) {
  require(!target_joints.empty(), "init_pose: target has no joint annotations");
  require(static_cast<int>(target_joints.size()) == tree.total_joints,
          "init_pose: expected " + std::to_string(tree.total_joints) + " joint annotations, got " +
              std::to_string(target_joints.size()));
  require(max_iterations > 0, "init_pose: iteration budget must be positive");
  const int k = tree.rotation_joints;
  const int dofs = pose_dof_count(tree);

  const auto unpack = [&](const VecX& x) {
    Pose pose = Pose::rest(k);
    for (int j = 0; j < k; ++j) pose.theta.row(j) = x.segment<3>(3 * j).transpose();
    pose.translation = x.tail<3>();
    return pose;
  };

  const auto make_objective = [&, dofs](std::vector<char> active) {
    return [&, active](const VecX& x, VecX* gradient) -> double {
      const Pose pose = unpack(x);
      const FkResult fk = forward_kinematics(rest_joints, pose, tree);
      double value = 0.0;
      if (!gradient) {
        for (int j = 0; j < tree.total_joints; ++j)
          value += (fk.joints[j] - target_joints[j]).squaredNorm();
        return value;
      }
      const FkDerivatives deriv = forward_kinematics_derivatives(rest_joints, pose, tree, fk);
      const PosedJointJacobian jac = posed_joint_jacobian(rest_joints, tree, fk, deriv);
      VecX g = VecX::Zero(dofs);
      for (int j = 0; j < tree.total_joints; ++j) {
        const Vec3 d = fk.joints[j] - target_joints[j];
        value += d.squaredNorm();
        g += jac.dpose[j].transpose() * (2.0 * d);
      }
      for (int i = 0; i < dofs; ++i)
        if (!active[i]) g[i] = 0.0;
      *gradient = std::move(g);
      return value;
    };
  };

  std::vector<char> rigid(dofs, 0);
  rigid[0] = rigid[1] = rigid[2] = 1;
  rigid[dofs - 3] = rigid[dofs - 2] = rigid[dofs - 1] = 1;

  DescentOptions options;
  options.max_iterations = std::max(1, max_iterations / 2);
  options.relative_tolerance = 1e-12;
  options.gradient_tolerance = 1e-12;

  InitPoseResult out;
  VecX x = VecX::Zero(dofs);
  double final_value = 0.0;
  for (const auto& active : {rigid, std::vector<char>(dofs, 1)}) {
    const DescentResult stage = descend(make_objective(active), x, options);
    x = stage.x;
    final_value = stage.value;
    for (const auto& t : stage.trace) out.trace.push_back({out.iterations + t.iteration, t.value, t.step});
    out.iterations += stage.iterations;
  }
  out.pose = canonicalize(unpack(x));
  out.residual = final_value;
  out.rms = std::sqrt(final_value / tree.total_joints);
  return out;
}

}  // namespace lamina
