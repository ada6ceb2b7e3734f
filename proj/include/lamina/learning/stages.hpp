#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "lamina/energy/terms.hpp"
#include "lamina/geometry/queries.hpp"
#include "lamina/geometry/spatial_index.hpp"
#include "lamina/learning/dataset.hpp"
#include "lamina/model/model.hpp"
#include "lamina/opt/descent.hpp"

namespace lamina {

/// Everything the alternating stages read and write: the model under
/// training plus the latent variables attached to the dataset. Subject slots
/// start unset (empty vectors) and are filled by the shape stage.
struct TrainState {
  ParametricModel model;
  MatX w_ref;                    // anchor skinning weights for E_wreg
  std::vector<Pose> poses;       // one per scan
  std::vector<VecX> subject_templates;           // T_pⁱ; empty until solved
  std::vector<std::vector<Vec3>> subject_joints; // J_pⁱ; empty until solved
  std::vector<VecX> subject_beta;                // shape coefficients per subject
  VecX regressor_residuals;      // rms regression error per joint, mm
  std::vector<std::string> warnings;
};

inline TrainState make_state(ParametricModel model, const Dataset& data) {
  model.validate();
  data.validate(model);
  TrainState st;
  st.w_ref = model.weights.w;
  st.poses.assign(data.scans.size(), Pose::rest(model.tree.rotation_joints));
  const int subjects = data.subject_count();
  st.subject_templates.assign(subjects, VecX());
  st.subject_joints.assign(subjects, {});
  st.subject_beta.assign(subjects, VecX());
  st.model = std::move(model);
  return st;
}

/// Template used for a subject: the personalized solve when available,
/// otherwise the general mean template.
inline const VecX& subject_template(const TrainState& st, int subject) {
  if (subject < static_cast<int>(st.subject_templates.size()) &&
      st.subject_templates[subject].size() > 0)
    return st.subject_templates[subject];
  return st.model.shape.mean;
}

inline std::vector<Vec3> subject_rest_joints(const TrainState& st, int subject) {
  if (subject < static_cast<int>(st.subject_joints.size()) &&
      !st.subject_joints[subject].empty())
    return st.subject_joints[subject];
  return st.model.joints_of(subject_template(st, subject));
}

/// Data term for scans in template topology: weighted mean squared vertex
/// distance over the observed blocks. Gradient block: "vertices".
inline TermResult e_fit(const std::vector<Vec3>& posed, const std::vector<Vec3>& target,
                        const VecX& weights) {
  require(posed.size() == target.size(), "e_fit: vertex count mismatch");
  require(weights.size() == static_cast<int>(posed.size()),
          "e_fit: weight count mismatch");
  const double wsum = weights.sum();
  require(wsum > 0.0, "e_fit: no observed vertices");
  TermResult out;
  VecX grad = VecX::Zero(3 * static_cast<int>(posed.size()));
  const double inv = 1.0 / wsum;
  for (size_t v = 0; v < posed.size(); ++v) {
    if (weights[static_cast<int>(v)] == 0.0) continue;
    const double w = weights[static_cast<int>(v)] * inv;
    const Vec3 d = posed[v] - target[v];
    out.value += w * d.squaredNorm();
    grad.segment<3>(3 * static_cast<int>(v)) = 2.0 * w * d;
  }
  out.grads["vertices"] = std::move(grad);
  return out;
}

/// Inter-tissue penetration contacts of a posed template: every ordered pair
/// of tissue layers, each layer's surface vertices probed against the other
/// layer's closed surface. Contact vertex ids are in the stacked numbering.
/// Interior tet vertices carry zero normals and never pass the facing filter.
inline std::vector<PenetrationContact> coupling_contacts(const HandTemplate& shaped,
                                                         const EnergyConfig& config) {
  struct Layer {
    TriMesh surface;
    int offset = 0;
  };
  std::vector<Layer> layers;
  layers.push_back({merged_bones(shaped), 0});
  if (!shaped.muscles.empty())
    layers.push_back({merged_muscles(shaped).surface_mesh(), shaped.muscle_offset()});
  layers.push_back({shaped.skin.surface_mesh(), shaped.skin_offset()});

  std::vector<std::vector<Vec3>> normals(layers.size());
  for (size_t i = 0; i < layers.size(); ++i) normals[i] = vertex_normals(layers[i].surface);

  std::vector<PenetrationContact> out;
  for (size_t j = 0; j < layers.size(); ++j) {
    const SpatialIndex index(layers[j].surface);
    for (size_t i = 0; i < layers.size(); ++i) {
      if (i == j) continue;
      auto contacts = detect_penetrations(layers[i].surface.vertices, normals[i],
                                          layers[j].surface, index, config.max_angle,
                                          config.max_depth);
      for (auto& c : contacts) {
        c.v_in += layers[i].offset;
        out.push_back(c);
      }
    }
  }
  return out;
}

namespace detail {

// interior muscle vertices get a reduced data weight: the inter-muscle
// boundary is poorly observed and should be governed by the regularizers
constexpr double kInteriorFitWeight = 0.1;

inline std::vector<std::pair<int, int>> edges_of(const std::vector<Face>& faces,
                                                 int offset) {
  std::vector<std::pair<int, int>> edges;
  edges.reserve(faces.size() * 3);
  for (const Face& f : faces)
    for (int k = 0; k < 3; ++k) {
      const int a = f[k] + offset;
      const int b = f[(k + 1) % 3] + offset;
      edges.emplace_back(std::min(a, b), std::max(a, b));
    }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  return edges;
}

/// Per-template constants shared by the stages: tissue-wise surface edge
/// sets, the muscle surface faces, and the interior-boundary down-weighting
/// mask, all in stacked ids.
struct TemplateInfo {
  std::vector<std::pair<int, int>> edges[3];
  std::vector<Face> muscle_faces;
  std::vector<char> interior;
};

inline TemplateInfo template_info(const HandTemplate& rest) {
  TemplateInfo info;
  for (size_t p = 0; p < rest.bones.size(); ++p) {
    const auto part = edges_of(rest.bones[p].faces, rest.bone_part_offset(static_cast<int>(p)));
    info.edges[0].insert(info.edges[0].end(), part.begin(), part.end());
  }
  for (size_t p = 0; p < rest.muscles.size(); ++p) {
    const int off = rest.muscle_part_offset(static_cast<int>(p));
    const auto part = edges_of(rest.muscles[p].surface_faces, off);
    info.edges[1].insert(info.edges[1].end(), part.begin(), part.end());
    for (const Face& f : rest.muscles[p].surface_faces)
      info.muscle_faces.push_back({f[0] + off, f[1] + off, f[2] + off});
  }
  info.edges[2] = edges_of(rest.skin.surface_faces, rest.skin_offset());
  info.interior = interior_boundary_mask(rest);
  return info;
}

/// Frozen per-scan data: the edge-preservation set with reference lengths
/// measured on the scan, and the per-vertex fit weights realizing the
/// observed-tissue restriction.
struct ScanSupport {
  std::vector<std::pair<int, int>> edges;
  std::vector<double> ref_lengths;
  VecX fit_weights;
};

inline ScanSupport scan_support(const HandTemplate& rest, const TemplateInfo& info,
                                const Scan& scan) {
  ScanSupport s;
  for (int t = 0; t < 3; ++t) {
    if (!scan.tissues[static_cast<size_t>(t)]) continue;
    s.edges.insert(s.edges.end(), info.edges[t].begin(), info.edges[t].end());
  }
  s.ref_lengths.reserve(s.edges.size());
  for (const auto& [a, b] : s.edges)
    s.ref_lengths.push_back((scan.vertices[a] - scan.vertices[b]).norm());
  s.fit_weights = VecX::Zero(rest.vertex_count_total());
  for (int t = 0; t < 3; ++t) {
    if (!scan.tissues[static_cast<size_t>(t)]) continue;
    const auto [first, last] = tissue_range(rest, static_cast<Tissue>(t));
    for (int v = first; v < last; ++v)
      s.fit_weights[v] = info.interior[v] ? kInteriorFitWeight : 1.0;
  }
  return s;
}

/// Pullback of a stacked vertex gradient through linear blend skinning onto
/// the per-joint transforms: b[k] = Σ_v w_vk g_v and outer[k] = Σ_v w_vk g_v ṽᵀ,
/// so that dE/dA_k = ⟨dRot, outer[k]⟩ + dTrans·b[k].
struct SkinPullback {
  std::vector<Vec3> b;
  std::vector<Mat3> outer;
};

inline SkinPullback skin_pullback(const MatX& w, const std::vector<Vec3>& rest_positions,
                                  const VecX& g) {
  const int k_count = static_cast<int>(w.cols());
  SkinPullback out;
  out.b.assign(k_count, Vec3::Zero());
  out.outer.assign(k_count, Mat3::Zero());
  for (int v = 0; v < w.rows(); ++v) {
    const Vec3 gv = g.segment<3>(3 * v);
    for (int k = 0; k < k_count; ++k) {
      const double wv = w(v, k);
      if (wv == 0.0) continue;
      out.b[k] += wv * gv;
      out.outer[k] += wv * (gv * rest_positions[static_cast<size_t>(v)].transpose());
    }
  }
  return out;
}

inline VecX to_pose_dofs(const FkDerivatives& deriv, const SkinPullback& pb,
                         int dof_count) {
  VecX g = VecX::Zero(dof_count);
  for (size_t k = 0; k < deriv.dA.size(); ++k)
    for (const auto& d : deriv.dA[k])
      g[d.dof] += d.rot.cwiseProduct(pb.outer[k]).sum() + d.trans.dot(pb.b[k]);
  return g;
}

inline VecX to_rest_joints(const FkDerivatives& deriv, const SkinPullback& pb,
                           int total_joints) {
  VecX g = VecX::Zero(3 * total_joints);
  for (size_t k = 0; k < deriv.dA_dJ.size(); ++k)
    for (const auto& c : deriv.dA_dJ[k])
      g.segment<3>(3 * c.joint) += c.coeff.transpose() * pb.b[k];
  return g;
}

/// dE/dṽ through v' = ṽ + Σ_k w_vk (A_k ṽ − ṽ).
inline VecX to_template(const FkResult& fk, const MatX& w, const VecX& g) {
  VecX out(g.size());
  for (int v = 0; v < w.rows(); ++v) {
    const Vec3 gv = g.segment<3>(3 * v);
    Vec3 acc = gv;
    for (int k = 0; k < w.cols(); ++k) {
      const double wv = w(v, k);
      if (wv == 0.0) continue;
      acc += wv * (fk.skinning[static_cast<size_t>(k)].rot.transpose() * gv - gv);
    }
    out.segment<3>(3 * v) = acc;
  }
  return out;
}

/// dE/dW(v,k) = g_v · (A_k ṽ − ṽ).
inline MatX to_weights(const FkResult& fk, const std::vector<Vec3>& rest_positions,
                       const VecX& g) {
  MatX out = MatX::Zero(static_cast<int>(rest_positions.size()),
                        static_cast<int>(fk.skinning.size()));
  for (int v = 0; v < out.rows(); ++v) {
    const Vec3 gv = g.segment<3>(3 * v);
    const Vec3& rv = rest_positions[static_cast<size_t>(v)];
    for (int k = 0; k < out.cols(); ++k)
      out(v, k) = gv.dot(fk.skinning[static_cast<size_t>(k)] * rv - rv);
  }
  return out;
}

/// Euclidean projection onto the probability simplex (Duchi et al. style
/// sort-based algorithm).
inline void project_to_simplex(VecX& v) {
  const int n = static_cast<int>(v.size());
  std::vector<double> u(v.data(), v.data() + n);
  std::sort(u.begin(), u.end(), std::greater<double>());
  double css = 0.0;
  double theta = 0.0;
  for (int i = 0; i < n; ++i) {
    css += u[i];
    const double t = (css - 1.0) / (i + 1);
    if (u[i] - t > 0.0) theta = t;
  }
  for (int i = 0; i < n; ++i) v[i] = std::max(v[i] - theta, 0.0);
}

inline std::vector<double> edge_lengths(const std::vector<Vec3>& positions,
                                        const std::vector<std::pair<int, int>>& edges) {
  std::vector<double> out;
  out.reserve(edges.size());
  for (const auto& [a, b] : edges) out.push_back((positions[a] - positions[b]).norm());
  return out;
}

}  // namespace detail

struct StageOptions {
  int outer_iterations = 3;   // contact refresh cycles
  int max_iterations = 200;   // descent budget per cycle
  double relative_tolerance = 1e-8;
};

struct ScanIssue {
  int scan = -1;  // scan index, or -1 for a subject/stage level issue
  std::string message;
};

struct StageResult {
  double objective = 0.0;  // stage objective at exit, summed over solves
  std::vector<ScanIssue> issues;
};

/// Pose stage: per-scan pose solve at fixed shape and parameters, minimizing
/// w_jt·E_jt + E_edge + w_preg·E_preg + w_cp·E_cp over the pose dofs.
/// Contacts are frozen per outer cycle. A scan whose descent diverges keeps
/// its previous pose and is reported in issues.
inline StageResult pose_stage(TrainState& state, const Dataset& data,
                              const EnergyConfig& config,
                              const StageOptions& options = {}) {
  data.validate(state.model);
  require(state.poses.size() == data.scans.size(), "pose_stage: one pose per scan required");
  const KinematicTree& tree = state.model.tree;
  const MatX& w = state.model.weights.w;
  const int dofs = pose_dof_count(tree);
  const detail::TemplateInfo info = detail::template_info(state.model.rest);
  StageResult out;

  for (size_t s = 0; s < data.scans.size(); ++s) {
    const Scan& scan = data.scans[s];
    const std::vector<Vec3> rest_positions = unflatten(subject_template(state, scan.subject));
    const std::vector<Vec3> rest_joints = subject_rest_joints(state, scan.subject);
    const detail::ScanSupport support = detail::scan_support(state.model.rest, info, scan);
    const bool use_jt = !scan.joints.empty() && config.w_jt > 0.0;

    VecX x = pack_pose(state.poses[s]);
    double value = 0.0;
    double previous = 0.0;
    try {
      for (int outer = 0; outer < options.outer_iterations; ++outer) {
        const std::vector<PenetrationContact> contacts = [&] {
          if (config.w_cp <= 0.0) return std::vector<PenetrationContact>();
          const Pose pose = unpack_pose(x, tree.rotation_joints);
          const FkResult fk = forward_kinematics(rest_joints, pose, tree);
          const std::vector<Vec3> posed = skin(rest_positions, fk.skinning, state.model.weights);
          return coupling_contacts(state.model.rest.with_vertices(posed), config);
        }();

        const Objective f = [&](const VecX& xx, VecX* g) {
          const Pose pose = unpack_pose(xx, tree.rotation_joints);
          const FkResult fk = forward_kinematics(rest_joints, pose, tree);
          const std::vector<Vec3> posed = skin(rest_positions, fk.skinning, state.model.weights);
          const TermResult edge = e_edge_diff(posed, support.edges, support.ref_lengths);
          const TermResult preg = e_preg(pose.theta, tree.metacarpal);
          double total = edge.value + config.w_preg * preg.value;
          TermResult jt, cp;
          if (use_jt) {
            jt = e_jt(fk.joints, scan.joints);
            total += config.w_jt * jt.value;
          }
          if (!contacts.empty()) {
            cp = e_icol(posed, contacts, 1.0);
            total += config.w_cp * cp.value;
          }
          if (g) {
            VecX gverts = edge.grads.at("vertices");
            if (!contacts.empty()) gverts += config.w_cp * cp.grads.at("vertices");
            const FkDerivatives deriv = forward_kinematics_derivatives(rest_joints, pose, tree, fk);
            const detail::SkinPullback pb = detail::skin_pullback(w, rest_positions, gverts);
            VecX gx = detail::to_pose_dofs(deriv, pb, dofs);
            if (use_jt) {
              const PosedJointJacobian jjac = posed_joint_jacobian(rest_joints, tree, fk, deriv);
              const VecX& gj = jt.grads.at("joints");
              for (int j = 0; j < tree.total_joints; ++j)
                gx += config.w_jt * (jjac.dpose[static_cast<size_t>(j)].transpose() *
                                     gj.segment<3>(3 * j));
            }
            gx.head(3 * tree.rotation_joints) += config.w_preg * preg.grads.at("theta");
            *g = std::move(gx);
          }
          return total;
        };

        DescentOptions dopt;
        dopt.max_iterations = options.max_iterations;
        dopt.relative_tolerance = options.relative_tolerance;
        const DescentResult res = descend(f, x, dopt);
        x = res.x;
        value = res.value;
        if (outer > 0 &&
            std::abs(previous - value) <= options.relative_tolerance * (1.0 + std::abs(previous)))
          break;
        previous = value;
      }
      state.poses[s] = canonicalize(unpack_pose(x, tree.rotation_joints));
      out.objective += value;
    } catch (const DivergenceError& e) {
      out.issues.push_back({static_cast<int>(s), e.what()});
    }
  }
  return out;
}

/// Shape stage: per-subject personalized template and rest-joint solve, then
/// (unless an `sreg_space` is supplied for weakly supervised augmentation)
/// the joint-regressor refit and the shape PCA. With `sreg_space` set the
/// off-space penalty w_sreg anchors each solve to the frozen shape space and
/// the global refits are skipped.
inline StageResult shape_stage(TrainState& state, const Dataset& data,
                               const EnergyConfig& config,
                               const StageOptions& options = {},
                               const ShapeSpace* sreg_space = nullptr) {
  data.validate(state.model);
  require(state.poses.size() == data.scans.size(), "shape_stage: run pose_stage first");
  const KinematicTree& tree = state.model.tree;
  const MatX& w = state.model.weights.w;
  const int v_total = state.model.rest.vertex_count_total();
  const int nb = state.model.rest.bone_vertex_count();
  const int joints = tree.total_joints;
  const detail::TemplateInfo info = detail::template_info(state.model.rest);
  const int subjects = data.subject_count();

  // muscle regularizer references live on the current general template
  const std::vector<Vec3> mean_positions = unflatten(state.model.shape.mean);
  const std::vector<double> muscle_ref = detail::edge_lengths(mean_positions, info.edges[1]);

  StageResult out;
  for (int i = 0; i < subjects; ++i) {
    const std::vector<int> subject_scans = data.scans_of(i);
    std::vector<detail::ScanSupport> supports;
    supports.reserve(subject_scans.size());
    for (int s : subject_scans)
      supports.push_back(detail::scan_support(state.model.rest, info, data.scans[static_cast<size_t>(s)]));

    VecX x(3 * v_total + 3 * joints);
    x.head(3 * v_total) = subject_template(state, i);
    {
      const std::vector<Vec3> j0 = subject_rest_joints(state, i);
      for (int j = 0; j < joints; ++j) x.segment<3>(3 * v_total + 3 * j) = j0[static_cast<size_t>(j)];
    }

    try {
      double value = 0.0;
      double previous = 0.0;
      for (int outer = 0; outer < options.outer_iterations; ++outer) {
        std::vector<std::vector<PenetrationContact>> contacts(subject_scans.size());
        if (config.w_cp > 0.0) {
          const std::vector<Vec3> positions = unflatten(x.head(3 * v_total));
          std::vector<Vec3> j_p(static_cast<size_t>(joints));
          for (int j = 0; j < joints; ++j) j_p[static_cast<size_t>(j)] = x.segment<3>(3 * v_total + 3 * j);
          for (size_t k = 0; k < subject_scans.size(); ++k) {
            const FkResult fk =
                forward_kinematics(j_p, state.poses[static_cast<size_t>(subject_scans[k])], tree);
            const std::vector<Vec3> posed = skin(positions, fk.skinning, state.model.weights);
            contacts[k] = coupling_contacts(state.model.rest.with_vertices(posed), config);
          }
        }

        const Objective f = [&](const VecX& xx, VecX* g) {
          const VecX t_p = xx.head(3 * v_total);
          const std::vector<Vec3> positions = unflatten(t_p);
          std::vector<Vec3> j_p(static_cast<size_t>(joints));
          for (int j = 0; j < joints; ++j) j_p[static_cast<size_t>(j)] = xx.segment<3>(3 * v_total + 3 * j);
          std::vector<Vec3> bone_positions(positions.begin(), positions.begin() + nb);

          double total = 0.0;
          VecX g_t, g_j;
          if (g) {
            g_t = VecX::Zero(3 * v_total);
            g_j = VecX::Zero(3 * joints);
          }

          for (size_t k = 0; k < subject_scans.size(); ++k) {
            const Scan& scan = data.scans[static_cast<size_t>(subject_scans[k])];
            const Pose& pose = state.poses[static_cast<size_t>(subject_scans[k])];
            const FkResult fk = forward_kinematics(j_p, pose, tree);
            const std::vector<Vec3> posed = skin(positions, fk.skinning, state.model.weights);
            const TermResult fit = e_fit(posed, scan.vertices, supports[k].fit_weights);
            total += fit.value;
            TermResult jt, cp;
            const bool use_jt = !scan.joints.empty() && config.w_jt > 0.0;
            if (use_jt) {
              jt = e_jt(fk.joints, scan.joints);
              total += config.w_jt * jt.value;
            }
            if (!contacts[k].empty()) {
              cp = e_icol(posed, contacts[k], 1.0);
              total += config.w_cp * cp.value;
            }
            if (g) {
              VecX gverts = fit.grads.at("vertices");
              if (!contacts[k].empty()) gverts += config.w_cp * cp.grads.at("vertices");
              const FkDerivatives deriv = forward_kinematics_derivatives(j_p, pose, tree, fk);
              const detail::SkinPullback pb = detail::skin_pullback(w, positions, gverts);
              g_t += detail::to_template(fk, w, gverts);
              g_j += detail::to_rest_joints(deriv, pb, joints);
              if (use_jt) {
                const PosedJointJacobian jjac = posed_joint_jacobian(j_p, tree, fk, deriv);
                const VecX& gj = jt.grads.at("joints");
                for (int j = 0; j < joints; ++j) {
                  const Vec3 d = config.w_jt * gj.segment<3>(3 * j);
                  for (const auto& c : jjac.drest[static_cast<size_t>(j)])
                    g_j.segment<3>(3 * c.joint) += c.coeff.transpose() * d;
                }
              }
            }
          }

          if (!info.edges[1].empty()) {
            const TermResult redge = e_edge_diff(positions, info.edges[1], muscle_ref);
            total += config.lambda_e * redge.value;
            if (g) g_t += config.lambda_e * redge.grads.at("vertices");
          }
          if (!info.muscle_faces.empty()) {
            const TermResult rfn = e_fn(positions, info.muscle_faces);
            total += config.lambda_fn * rfn.value;
            if (g) g_t += config.lambda_fn * rfn.grads.at("vertices");
          }
          if (config.w_jreg > 0.0) {
            const TermResult jreg = e_jreg(state.model.regressor.j, bone_positions, j_p);
            total += config.w_jreg * jreg.value;
            if (g) {
              g_t.head(3 * nb) += config.w_jreg * jreg.grads.at("bone_vertices");
              g_j += config.w_jreg * jreg.grads.at("rest_joints");
            }
          }
          if (sreg_space && config.w_sreg > 0.0) {
            const TermResult sreg = e_sreg(t_p, sreg_space->components, sreg_space->mean);
            total += config.w_sreg * sreg.value;
            if (g) g_t += config.w_sreg * sreg.grads.at("template");
          }

          if (g) {
            VecX gx(3 * v_total + 3 * joints);
            gx.head(3 * v_total) = g_t;
            gx.tail(3 * joints) = g_j;
            *g = std::move(gx);
          }
          return total;
        };

        DescentOptions dopt;
        dopt.max_iterations = options.max_iterations;
        dopt.relative_tolerance = options.relative_tolerance;
        const DescentResult res = descend(f, x, dopt);
        x = res.x;
        value = res.value;
        if (outer > 0 &&
            std::abs(previous - value) <= options.relative_tolerance * (1.0 + std::abs(previous)))
          break;
        previous = value;
      }

      state.subject_templates[static_cast<size_t>(i)] = x.head(3 * v_total);
      std::vector<Vec3> j_p(static_cast<size_t>(joints));
      for (int j = 0; j < joints; ++j) j_p[static_cast<size_t>(j)] = x.segment<3>(3 * v_total + 3 * j);
      state.subject_joints[static_cast<size_t>(i)] = std::move(j_p);
      out.objective += value;
    } catch (const DivergenceError& e) {
      out.issues.push_back({-1, "subject " + std::to_string(i) + ": " + e.what()});
    }
  }

  if (sreg_space) {
    // weakly supervised mode: coefficients are projections onto the frozen
    // space; the regressor and the space itself stay fixed
    for (int i = 0; i < subjects; ++i)
      state.subject_beta[static_cast<size_t>(i)] =
          sreg_space->components *
          (state.subject_templates[static_cast<size_t>(i)] - sreg_space->mean);
    return out;
  }

  // joint regressor refit: per joint, non-negative convex combination of the
  // bone vertices within 30 mm of the joint (on the mean of the solves),
  // least squares over the subject solves
  VecX mean_t = VecX::Zero(3 * v_total);
  for (int i = 0; i < subjects; ++i) mean_t += state.subject_templates[static_cast<size_t>(i)];
  mean_t /= subjects;
  std::vector<Vec3> mean_joints(static_cast<size_t>(joints), Vec3::Zero());
  for (int i = 0; i < subjects; ++i)
    for (int j = 0; j < joints; ++j)
      mean_joints[static_cast<size_t>(j)] +=
          state.subject_joints[static_cast<size_t>(i)][static_cast<size_t>(j)] / subjects;

  MatX reg = MatX::Zero(joints, nb);
  state.regressor_residuals = VecX::Zero(joints);
  for (int r = 0; r < joints; ++r) {
    std::vector<int> support;
    for (int c = 0; c < nb; ++c)
      if ((Vec3(mean_t.segment<3>(3 * c)) - mean_joints[static_cast<size_t>(r)]).norm() <= 30.0)
        support.push_back(c);
    if (support.empty()) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int c = 0; c < nb; ++c) {
        const double d = (Vec3(mean_t.segment<3>(3 * c)) - mean_joints[static_cast<size_t>(r)]).norm();
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      support.push_back(best);
      state.warnings.push_back("joint regressor: no bone vertex within 30 mm of joint " +
                               std::to_string(r) + "; using the nearest vertex");
    }
    const int n = static_cast<int>(support.size());
    MatX a(3 * subjects, n);
    VecX b(3 * subjects);
    for (int i = 0; i < subjects; ++i) {
      b.segment<3>(3 * i) = state.subject_joints[static_cast<size_t>(i)][static_cast<size_t>(r)];
      for (int c = 0; c < n; ++c)
        a.block<3, 1>(3 * i, c) =
            state.subject_templates[static_cast<size_t>(i)].segment<3>(3 * support[static_cast<size_t>(c)]);
    }
    const Objective lsq = [&](const VecX& ww, VecX* gg) {
      const VecX resid = a * ww - b;
      if (gg) *gg = 2.0 * (a.transpose() * resid);
      return resid.squaredNorm();
    };
    DescentOptions lopt;
    lopt.max_iterations = 2000;
    lopt.relative_tolerance = 1e-14;
    lopt.gradient_tolerance = 1e-12;
    lopt.project = [](VecX& vv) { detail::project_to_simplex(vv); };
    const DescentResult sol = descend(lsq, VecX::Constant(n, 1.0 / n), lopt);
    for (int c = 0; c < n; ++c) reg(r, support[static_cast<size_t>(c)]) = sol.x[c];
    state.regressor_residuals[r] = std::sqrt(sol.value / subjects);
  }
  state.model.regressor.j = std::move(reg);
  state.model.regressor.validate();

  // shape PCA over the subject templates
  MatX centered(subjects, 3 * v_total);
  for (int i = 0; i < subjects; ++i)
    centered.row(i) = (state.subject_templates[static_cast<size_t>(i)] - mean_t).transpose();
  Eigen::JacobiSVD<MatX> svd(centered, Eigen::ComputeThinV);
  const VecX sv = svd.singularValues();
  const double tol = sv.size() > 0 ? std::max(1e-9 * sv[0], 1e-12) : 0.0;
  int rank = 0;
  while (rank < sv.size() && sv[rank] > tol) ++rank;
  if (rank < subjects - 1)
    state.warnings.push_back("shape space: rank " + std::to_string(rank) + " from " +
                             std::to_string(subjects) + " subjects (degenerate directions dropped)");
  state.model.shape.mean = mean_t;
  state.model.shape.components = svd.matrixV().leftCols(rank).transpose();
  state.model.shape.singular_values =
      subjects > 1 ? VecX(sv.head(rank) / std::sqrt(static_cast<double>(subjects - 1)))
                   : VecX::Zero(rank);
  state.model.rest = state.model.rest.with_vertices(unflatten(mean_t));
  for (int i = 0; i < subjects; ++i)
    state.subject_beta[static_cast<size_t>(i)] =
        state.model.shape.components * (state.subject_templates[static_cast<size_t>(i)] - mean_t);
  state.model.validate();
  return out;
}

/// Parameter stage: skinning weights and pose blend shapes over all scans.
/// W is projected to the non-negative row-stochastic sparse set after every
/// trial step; the personalized template is T̄ + 𝒮ᵀβᵢ + 𝒫 f(θ) with rest
/// joints regressed from its bone block, so 𝒫 also acts through the
/// kinematics.
inline StageResult parameter_stage(TrainState& state, const Dataset& data,
                                   const EnergyConfig& config,
                                   const StageOptions& options = {}) {
  data.validate(state.model);
  require(state.poses.size() == data.scans.size(), "parameter_stage: run pose_stage first");
  const KinematicTree& tree = state.model.tree;
  const int v_total = state.model.rest.vertex_count_total();
  const int nb = state.model.rest.bone_vertex_count();
  const int joints = tree.total_joints;
  const int k_rot = tree.rotation_joints;
  const int feat = 9 * (k_rot - 1);
  const detail::TemplateInfo info = detail::template_info(state.model.rest);
  const int subjects = data.subject_count();

  const std::vector<Vec3> mean_positions = unflatten(state.model.shape.mean);
  const std::vector<double> muscle_ref = detail::edge_lengths(mean_positions, info.edges[1]);

  std::vector<detail::ScanSupport> supports;
  std::vector<VecX> features;
  supports.reserve(data.scans.size());
  features.reserve(data.scans.size());
  for (size_t s = 0; s < data.scans.size(); ++s) {
    supports.push_back(detail::scan_support(state.model.rest, info, data.scans[s]));
    features.push_back(pose_feature(state.poses[s]));
  }
  std::vector<VecX> shape_parts(static_cast<size_t>(subjects));
  std::vector<std::vector<Vec3>> anchor_joints(static_cast<size_t>(subjects));
  for (int i = 0; i < subjects; ++i) {
    shape_parts[static_cast<size_t>(i)] =
        state.model.shape.mean + shape_blend(state.subject_beta[static_cast<size_t>(i)], state.model.shape);
    anchor_joints[static_cast<size_t>(i)] = subject_rest_joints(state, i);
  }

  const int nw = v_total * k_rot;
  VecX x(nw + 3 * v_total * feat);
  for (int v = 0; v < v_total; ++v)
    for (int k = 0; k < k_rot; ++k) x[v * k_rot + k] = state.model.weights.w(v, k);
  for (int r = 0; r < 3 * v_total; ++r)
    for (int c = 0; c < feat; ++c) x[nw + r * feat + c] = state.model.pose_blends.matrix(r, c);

  const auto unpack_w = [&](const VecX& xx) {
    MatX wm(v_total, k_rot);
    for (int v = 0; v < v_total; ++v)
      for (int k = 0; k < k_rot; ++k) wm(v, k) = xx[v * k_rot + k];
    return wm;
  };
  const auto unpack_p = [&](const VecX& xx) {
    MatX pm(3 * v_total, feat);
    for (int r = 0; r < 3 * v_total; ++r)
      for (int c = 0; c < feat; ++c) pm(r, c) = xx[nw + r * feat + c];
    return pm;
  };

  StageResult out;
  double value = 0.0;
  double previous = 0.0;
  for (int outer = 0; outer < options.outer_iterations; ++outer) {
    std::vector<std::vector<PenetrationContact>> contacts(data.scans.size());
    if (config.w_cp > 0.0) {
      const MatX wm = unpack_w(x);
      const MatX pm = unpack_p(x);
      SkinningWeights sw;
      sw.w = wm;
      for (size_t s = 0; s < data.scans.size(); ++s) {
        const VecX t_p = shape_parts[static_cast<size_t>(data.scans[s].subject)] + pm * features[s];
        const std::vector<Vec3> positions = unflatten(t_p);
        const std::vector<Vec3> rest_joints = state.model.joints_of(t_p);
        const FkResult fk = forward_kinematics(rest_joints, state.poses[s], tree);
        const std::vector<Vec3> posed = skin(positions, fk.skinning, sw);
        contacts[s] = coupling_contacts(state.model.rest.with_vertices(posed), config);
      }
    }

    const Objective f = [&](const VecX& xx, VecX* g) {
      const MatX wm = unpack_w(xx);
      const MatX pm = unpack_p(xx);
      SkinningWeights sw;
      sw.w = wm;

      const TermResult wreg = e_wreg(wm, state.w_ref);
      const TermResult pbreg = e_pbreg(pm);
      double total = config.w_wreg * wreg.value + config.w_pbreg * pbreg.value;

      MatX g_w, g_p;
      if (g) {
        g_w = MatX::Zero(v_total, k_rot);
        g_p = MatX::Zero(3 * v_total, feat);
      }

      for (size_t s = 0; s < data.scans.size(); ++s) {
        const Scan& scan = data.scans[s];
        const int subj = scan.subject;
        const VecX t_p = shape_parts[static_cast<size_t>(subj)] + pm * features[s];
        const std::vector<Vec3> positions = unflatten(t_p);
        std::vector<Vec3> bone_positions(positions.begin(), positions.begin() + nb);
        const std::vector<Vec3> rest_joints = regress_joints(bone_positions, state.model.regressor);
        const FkResult fk = forward_kinematics(rest_joints, state.poses[s], tree);
        const std::vector<Vec3> posed = skin(positions, fk.skinning, sw);

        const TermResult fit = e_fit(posed, scan.vertices, supports[s].fit_weights);
        total += fit.value;
        TermResult cp;
        if (!contacts[s].empty()) {
          cp = e_icol(posed, contacts[s], 1.0);
          total += config.w_cp * cp.value;
        }
        TermResult redge, rfn, jreg;
        if (!info.edges[1].empty()) {
          redge = e_edge_diff(positions, info.edges[1], muscle_ref);
          total += config.lambda_e * redge.value;
        }
        if (!info.muscle_faces.empty()) {
          rfn = e_fn(positions, info.muscle_faces);
          total += config.lambda_fn * rfn.value;
        }
        if (config.w_jreg > 0.0) {
          jreg = e_jreg(state.model.regressor.j, bone_positions,
                        anchor_joints[static_cast<size_t>(subj)]);
          total += config.w_jreg * jreg.value;
        }

        if (g) {
          VecX gverts = fit.grads.at("vertices");
          if (!contacts[s].empty()) gverts += config.w_cp * cp.grads.at("vertices");
          const FkDerivatives deriv =
              forward_kinematics_derivatives(rest_joints, state.poses[s], tree, fk);
          const detail::SkinPullback pb = detail::skin_pullback(wm, positions, gverts);
          g_w += detail::to_weights(fk, positions, gverts);
          VecX g_t = detail::to_template(fk, wm, gverts);
          if (!info.edges[1].empty()) g_t += config.lambda_e * redge.grads.at("vertices");
          if (!info.muscle_faces.empty()) g_t += config.lambda_fn * rfn.grads.at("vertices");
          if (config.w_jreg > 0.0)
            g_t.head(3 * nb) += config.w_jreg * jreg.grads.at("bone_vertices");
          // rest joints are regressed from the bone block: pull their
          // gradient back through 𝒥
          const VecX g_j = detail::to_rest_joints(deriv, pb, joints);
          for (int r = 0; r < joints; ++r) {
            const Vec3 gr = g_j.segment<3>(3 * r);
            if (gr.isZero(0.0)) continue;
            for (int c = 0; c < nb; ++c) {
              const double coeff = state.model.regressor.j(r, c);
              if (coeff != 0.0) g_t.segment<3>(3 * c) += coeff * gr;
            }
          }
          g_p += g_t * features[s].transpose();
        }
      }

      if (g) {
        VecX gx(nw + 3 * v_total * feat);
        gx.head(nw) = config.w_wreg * wreg.grads.at("weights");
        gx.tail(3 * v_total * feat) = config.w_pbreg * pbreg.grads.at("poseblend");
        for (int v = 0; v < v_total; ++v)
          for (int k = 0; k < k_rot; ++k) gx[v * k_rot + k] += g_w(v, k);
        for (int r = 0; r < 3 * v_total; ++r)
          for (int c = 0; c < feat; ++c) gx[nw + r * feat + c] += g_p(r, c);
        *g = std::move(gx);
      }
      return total;
    };

    DescentOptions dopt;
    dopt.max_iterations = options.max_iterations;
    dopt.relative_tolerance = options.relative_tolerance;
    dopt.project = [&](VecX& xx) {
      MatX wm = unpack_w(xx);
      wm = project_row_stochastic_sparse(std::move(wm), SkinningWeights::max_nonzero);
      for (int v = 0; v < v_total; ++v)
        for (int k = 0; k < k_rot; ++k) xx[v * k_rot + k] = wm(v, k);
    };
    try {
      const DescentResult res = descend(f, x, dopt);
      x = res.x;
      value = res.value;
    } catch (const DivergenceError& e) {
      out.issues.push_back({-1, e.what()});
      break;
    }
    if (outer > 0 &&
        std::abs(previous - value) <= options.relative_tolerance * (1.0 + std::abs(previous)))
      break;
    previous = value;
  }

  state.model.weights.w = unpack_w(x);
  state.model.pose_blends.matrix = unpack_p(x);
  state.model.validate();
  out.objective = value;
  return out;
}

}  // namespace lamina
