#pragma once

#include "lamina/model/components.hpp"
#include "lamina/model/hand_template.hpp"

namespace lamina {

/// T_p = T̄ + B_S + B_P over the stacked vertex vector.
inline VecX personalize(const VecX& mean, const VecX& shape_offsets,
                        const VecX& pose_offsets) {
  require(mean.size() == shape_offsets.size() && mean.size() == pose_offsets.size(),
          "personalize: offset size mismatch");
  if (shape_offsets.isZero(0.0) && pose_offsets.isZero(0.0)) return mean;
  // group the offsets so swapping B_S and B_P is bitwise neutral
  return mean + (shape_offsets + pose_offsets);
}

/// Linear blend skinning in delta form: v' = ṽ + Σ_k W[v,k]·(A_k ṽ − ṽ).
/// Equals Σ_k W·(A_k ṽ) for row-stochastic W, and reproduces the template
/// bit-for-bit when every transform is the identity.
inline std::vector<Vec3> skin(const std::vector<Vec3>& vertices,
                              const std::vector<Rigid>& transforms,
                              const SkinningWeights& weights) {
  require(weights.vertices() == static_cast<int>(vertices.size()),
          "skin: weight row count mismatch");
  require(weights.joints() == static_cast<int>(transforms.size()),
          "skin: weight column count mismatch");
  std::vector<Vec3> out(vertices.size());
  for (size_t i = 0; i < vertices.size(); ++i) {
    const Vec3& v = vertices[i];
    Vec3 acc = v;
    for (int k = 0; k < weights.joints(); ++k) {
      const double w = weights.w(static_cast<int>(i), k);
      if (w == 0.0) continue;
      acc += w * (transforms[k] * v - v);
    }
    out[i] = acc;
  }
  return out;
}

struct PosedHand {
  TriMesh bones;                // merged bone surface
  TetMesh muscles;              // merged muscle tets
  TetMesh skin;
  std::vector<Vec3> joints;     // posed joint positions
  std::vector<Vec3> vertices;   // full stacked posed vertex array
};

/// The full parametric hand: {W, 𝒥, T̄, 𝒫, 𝒮} plus the kinematic tree.
/// β and θ arrive per call.
struct ParametricModel {
  HandTemplate rest;            // topology + T̄ vertex positions
  KinematicTree tree;
  ShapeSpace shape;             // mean equals flatten(rest.stacked_vertices())
  PoseBlendShapes pose_blends;
  SkinningWeights weights;
  JointRegressor regressor;

  void validate() const {
    rest.validate();
    tree.validate();
    shape.validate();
    pose_blends.validate();
    weights.validate();
    regressor.validate();
    const int v = rest.vertex_count_total();
    require(shape.mean.size() == 3 * v, "ParametricModel: shape mean size mismatch");
    require((shape.mean - flatten(rest.stacked_vertices())).cwiseAbs().maxCoeff() == 0.0,
            "ParametricModel: shape mean disagrees with template vertices");
    require(pose_blends.matrix.rows() == 3 * v,
            "ParametricModel: pose blend row count mismatch");
    require(pose_blends.matrix.cols() == 9 * (tree.rotation_joints - 1),
            "ParametricModel: pose blend feature width mismatch");
    require(weights.vertices() == v, "ParametricModel: weight row count mismatch");
    require(weights.joints() == tree.rotation_joints,
            "ParametricModel: weight column count mismatch");
    require(regressor.j.rows() == tree.total_joints,
            "ParametricModel: regressor row count mismatch");
    require(regressor.j.cols() == rest.bone_vertex_count(),
            "ParametricModel: regressor column count mismatch");
  }

  /// Personalized stacked template for given coefficients and pose.
  VecX personalized(const VecX& beta, const Pose& pose) const {
    return personalize(shape.mean, shape_blend(beta, shape),
                       pose_blend(pose, pose_blends));
  }

  /// Rest joints regressed from the bone block of a stacked template.
  std::vector<Vec3> joints_of(const VecX& stacked_template) const {
    const int nb = rest.bone_vertex_count();
    std::vector<Vec3> bone_verts(nb);
    for (int i = 0; i < nb; ++i) bone_verts[i] = stacked_template.segment<3>(3 * i);
    return regress_joints(bone_verts, regressor);
  }
};

/// 𝒢(θ, β): shape blend → pose blend → personalize → joint regression →
/// forward kinematics → linear blend skinning.
inline PosedHand pose_model(const ParametricModel& model, const Pose& pose,
                            const VecX& beta) {
  const VecX t_p = model.personalized(beta, pose);
  const std::vector<Vec3> rest_joints = model.joints_of(t_p);
  const FkResult fk = forward_kinematics(rest_joints, pose, model.tree);
  const std::vector<Vec3> posed = skin(unflatten(t_p), fk.skinning, model.weights);

  PosedHand out;
  out.vertices = posed;
  const HandTemplate shaped = model.rest.with_vertices(posed);
  out.bones = merged_bones(shaped);
  out.muscles = merged_muscles(shaped);
  out.skin = shaped.skin;
  out.joints = fk.joints;
  return out;
}

/// Radial-basis initial skinning weights W̃: Gaussian kernels centered at the
/// rotation joints, per-joint width equal to the distance to the nearest
/// other joint, projected per vertex onto the simplex over the top 4 joints.
inline MatX rbf_init_weights(const std::vector<Vec3>& vertices,
                             const std::vector<Vec3>& rotation_joints,
                             int truncate = 4) {
  const int K = static_cast<int>(rotation_joints.size());
  require(K >= 2, "rbf_init_weights: need at least two joints");
  VecX sigma(K);
  for (int k = 0; k < K; ++k) {
    double nearest = std::numeric_limits<double>::infinity();
    for (int m = 0; m < K; ++m)
      if (m != k) nearest = std::min(nearest, (rotation_joints[k] - rotation_joints[m]).norm());
    require(nearest > 0.0, "rbf_init_weights: coincident joints");
    sigma[k] = nearest;
  }
  MatX w(static_cast<int>(vertices.size()), K);
  for (size_t i = 0; i < vertices.size(); ++i)
    for (int k = 0; k < K; ++k) {
      const double d2 = (vertices[i] - rotation_joints[k]).squaredNorm();
      w(static_cast<int>(i), k) = std::exp(-d2 / (2.0 * sigma[k] * sigma[k]));
    }
  return project_row_stochastic_sparse(std::move(w), truncate);
}

}  // namespace lamina
