#pragma once

#include "helpers.hpp"
#include "lamina/model/model.hpp"

namespace lamina::testing {

/// Tiny two-bone "finger" with every model ingredient populated exactly:
/// one-hot joint regressor rows sit on bone vertices placed at the joint
/// centers (0,0,0), (10,0,0) and the end site (20,0,0).
inline ParametricModel make_micro_model() {
  ParametricModel m;

  m.tree.total_joints = 3;
  m.tree.rotation_joints = 2;
  m.tree.parent = {-1, 0, 1};
  m.tree.metacarpal = {1, 0};

  m.rest.bones = {
      make_tetra_surface({Vec3(0, 0, 0), Vec3(4, 0, 0), Vec3(0, 3, 0), Vec3(0, 0, 3)}),
      make_tetra_surface({Vec3(10, 0, 0), Vec3(20, 0, 0), Vec3(10, 3, 0), Vec3(10, 0, 3)})};
  m.rest.bone_names = {"prox", "dist"};

  m.rest.muscles = {make_tet_mesh(
      {Vec3(2, 1, 0), Vec3(5, 1, 0), Vec3(2, 4, 0), Vec3(2, 1, 3)}, {Tet{0, 1, 2, 3}})};
  m.rest.muscle_names = {"flexor"};
  m.rest.attachments = {{0, {{0, 1}}}};

  m.rest.skin = make_tet_mesh(
      {Vec3(-1, -1, -1), Vec3(18, -1, -1), Vec3(-1, 6, -1), Vec3(-1, -1, 6)},
      {Tet{0, 1, 2, 3}});

  const int v = m.rest.vertex_count_total();  // 16

  m.regressor.j = MatX::Zero(3, m.rest.bone_vertex_count());
  m.regressor.j(0, 0) = 1.0;  // joint 0 at bone vertex (0,0,0)
  m.regressor.j(1, 4) = 1.0;  // joint 1 at bone vertex (10,0,0)
  m.regressor.j(2, 5) = 1.0;  // end site at bone vertex (20,0,0)

  m.weights.w = MatX::Zero(v, 2);
  for (int i = 0; i < 4; ++i) m.weights.w(i, 0) = 1.0;             // bone 0
  for (int i = 4; i < 8; ++i) m.weights.w(i, 1) = 1.0;             // bone 1
  for (int i = 8; i < 12; ++i) m.weights.w.row(i) << 0.5, 0.5;     // muscle
  for (int i = 12; i < 16; ++i) m.weights.w.row(i) << 0.7, 0.3;    // skin

  m.shape.mean = flatten(m.rest.stacked_vertices());
  m.shape.components = MatX::Zero(2, 3 * v);
  m.shape.components.row(0).setConstant(1.0 / std::sqrt(3.0 * v));
  for (int i = 0; i < 3 * v; ++i)
    m.shape.components(1, i) = (i % 2 == 0 ? 1.0 : -1.0) / std::sqrt(3.0 * v);
  m.shape.singular_values = VecX(2);
  m.shape.singular_values << 5.0, 2.0;

  m.pose_blends.matrix = MatX(3 * v, 9);
  for (int i = 0; i < m.pose_blends.matrix.rows(); ++i)
    for (int j = 0; j < 9; ++j)
      m.pose_blends.matrix(i, j) = 0.01 * std::sin(0.7 * i + 1.3 * j);

  m.validate();
  return m;
}

/// Variant of the micro model whose tissue layers are spatially disjoint at
/// rest (no resting penetrations, so the coupling energy starts at zero) and
/// whose pose blends are zero. The kinematic chain, regressor, weights and
/// shape space follow make_micro_model.
inline ParametricModel make_learning_model() {
  ParametricModel m = make_micro_model();

  m.rest.muscles = {make_tet_mesh(
      {Vec3(2, 8, 0), Vec3(5, 8, 0), Vec3(2, 11, 0), Vec3(2, 8, 3)}, {Tet{0, 1, 2, 3}})};
  m.rest.skin = make_tet_mesh(
      {Vec3(-1, -6, -1), Vec3(18, -6, -1), Vec3(-1, -3.5, -1), Vec3(-1, -6, 5)},
      {Tet{0, 1, 2, 3}});

  m.shape.mean = flatten(m.rest.stacked_vertices());
  m.pose_blends.matrix.setZero();
  m.validate();
  return m;
}

/// Uniform random pose with angles in ±range radians and a small translation.
inline Pose random_pose(Rng& rng, int rotation_joints, double range = 0.6,
                        double translation = 2.0) {
  Pose p = Pose::rest(rotation_joints);
  for (int j = 0; j < rotation_joints; ++j)
    for (int c = 0; c < 3; ++c) p.theta(j, c) = range * (2.0 * rng.uniform() - 1.0);
  p.translation = translation * rng.normal3();
  return p;
}

}  // namespace lamina::testing
