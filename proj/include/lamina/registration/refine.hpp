#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "lamina/common.hpp"
#include "lamina/energy/compose.hpp"
#include "lamina/energy/config.hpp"
#include "lamina/energy/terms.hpp"
#include "lamina/geometry/queries.hpp"
#include "lamina/geometry/spatial_index.hpp"
#include "lamina/geometry/tetmesh.hpp"
#include "lamina/geometry/trimesh.hpp"
#include "lamina/model/kinematics.hpp"
#include "lamina/opt/descent.hpp"
#include "lamina/registration/collision.hpp"
#include "lamina/registration/deformation_fit.hpp"

namespace lamina {

struct TargetScan {
  TriMesh mesh;
  std::vector<Vec3> joints;  // annotated joint positions; empty when absent
  std::string provenance;
};

struct RegistrationResult {
  std::vector<Vec3> vertices;
  Pose pose;  // filled by callers that solved for pose
  EnergyReport report;
  std::vector<int> surface_vertices;
  std::vector<double> distances;  // nearest-target distance per surface vertex, mm
  std::vector<DescentTrace> trace;  // iteration = outer iteration index
  int iterations = 0;
  bool converged = false;
};

struct RefineInputs {
  std::vector<Vec3> rest_vertices;     // template rest: length scales, self-contact exclusion
  std::vector<Vec3> initial_vertices;  // start point; also deformation/elasticity reference
  std::vector<Face> surface_faces;
  const TetMesh* tets = nullptr;  // tet topology enabling the elastic term
  std::vector<std::pair<int, int>> attachments;  // (tissue vertex, anchor index)
  std::vector<Vec3> attachment_anchors;
  std::vector<TriMesh> obstacles;  // fixed neighboring tissues, watertight
};

struct RefineOptions {
  int max_outer_iterations = 500;
  int inner_iterations = 10;  // descent steps between correspondence updates
  double relative_tolerance = 1e-6;
  int max_failures = 10;  // consecutive failed line searches before giving up
};

/// Non-rigid registration of one tissue onto a target scan. Free variables
/// are the vertex positions. Correspondences and contact sets are frozen,
/// a few descent steps run against the frozen energy, and the sets are
/// refreshed; this repeats until the per-round energy stalls. The active
/// term set follows the inputs: the elastic term needs tets and a positive
/// weight, attachment needs anchor pairs, inter-tissue contact needs
/// obstacles.
inline RegistrationResult refine(const RefineInputs& in, const TargetScan& target,
                                 const EnergyConfig& config, const RefineOptions& options = {}) {
  config.validate();
  const int n = static_cast<int>(in.rest_vertices.size());
  require(n >= 2, "refine: need at least two vertices");
  require(static_cast<int>(in.initial_vertices.size()) == n,
          "refine: rest/initial vertex count mismatch");
  require(!in.surface_faces.empty(), "refine: tissue has no surface faces");
  require(!target.mesh.vertices.empty() && !target.mesh.faces.empty(),
          "refine: target scan is empty");
  require(options.max_outer_iterations > 0 && options.inner_iterations > 0 &&
              options.max_failures > 0,
          "refine: iteration limits must be positive");
  if (in.tets)
    require(static_cast<int>(in.tets->vertices.size()) == n, "refine: tet vertex count mismatch");
  require(in.attachments.empty() || !in.attachment_anchors.empty(),
          "refine: attachments given without anchors");
  for (const auto& [v, a] : in.attachments) {
    require(v >= 0 && v < n, "refine: attachment vertex out of range");
    require(a >= 0 && a < static_cast<int>(in.attachment_anchors.size()),
            "refine: attachment anchor out of range");
  }

  // surface subset in compact numbering (interior tet vertices carry no
  // correspondence or contact terms)
  std::vector<int> local_id(n, -1);
  std::vector<int> surface_ids;
  for (const auto& f : in.surface_faces)
    for (int k = 0; k < 3; ++k) {
      require(f[k] >= 0 && f[k] < n, "refine: surface face index out of range");
      if (local_id[f[k]] < 0) {
        local_id[f[k]] = static_cast<int>(surface_ids.size());
        surface_ids.push_back(f[k]);
      }
    }
  std::vector<Face> local_faces(in.surface_faces.size());
  for (size_t f = 0; f < in.surface_faces.size(); ++f)
    for (int k = 0; k < 3; ++k) local_faces[f][k] = local_id[in.surface_faces[f][k]];
  std::vector<Vec3> rest_local(surface_ids.size());
  for (size_t i = 0; i < surface_ids.size(); ++i) rest_local[i] = in.rest_vertices[surface_ids[i]];

  TriMesh rest_surface;
  rest_surface.vertices = in.rest_vertices;
  rest_surface.faces = in.surface_faces;
  const double edge_scale = mean_edge_length(rest_surface);
  const double sigma = config.sigma > 0.0 ? config.sigma : 2.0 * edge_scale;
  const double exclusion = 3.0 * edge_scale;
  const RigidityGraph graph = rigidity_graph(in.rest_vertices, sigma);
  const AffineFit fit = make_affine_fit(in.initial_vertices, graph);
  const std::vector<std::pair<int, int>> edges = edge_list(rest_surface);

  const bool use_ne = in.tets != nullptr && config.lambda_ne > 0.0;
  TetMesh reference_tets;
  if (use_ne) reference_tets = make_tet_mesh(in.initial_vertices, in.tets->tets);

  const SpatialIndex target_index(target.mesh);
  const std::vector<Vec3> target_normals = vertex_normals(target.mesh);
  std::vector<SpatialIndex> obstacle_index;
  obstacle_index.reserve(in.obstacles.size());
  for (const auto& o : in.obstacles) obstacle_index.emplace_back(o);

  struct Frozen {
    std::vector<ForwardCorr> forward;
    std::vector<BackwardCorr> backward;
    std::vector<PenetrationContact> self_contacts;
    std::vector<PenetrationContact> contacts;
    std::vector<AttractionPair> attractions;
  };

  const auto freeze = [&](const std::vector<Vec3>& x) {
    Frozen fr;
    fr.forward.reserve(surface_ids.size());
    for (int i : surface_ids) {
      const SurfaceHit hit = target_index.nearest(x[i]);
      const Face& tf = target.mesh.faces[hit.face];
      const Vec3 bc =
          barycentric_coordinates(target.mesh.vertices[tf[0]], target.mesh.vertices[tf[1]],
                                  target.mesh.vertices[tf[2]], hit.point);
      const Vec3 blended = bc[0] * target_normals[tf[0]] + bc[1] * target_normals[tf[1]] +
                           bc[2] * target_normals[tf[2]];
      const double len = blended.norm();
      fr.forward.push_back({i, hit.point, len > 1e-12 ? Vec3(blended / len) : hit.normal});
    }
    TriMesh current;
    current.vertices = x;
    current.faces = in.surface_faces;
    const SpatialIndex self_index(current);
    fr.backward.reserve(target.mesh.vertices.size());
    for (const Vec3& t : target.mesh.vertices) {
      const SurfaceHit hit = self_index.nearest(t);
      const Face& f = in.surface_faces[hit.face];
      fr.backward.push_back(
          {hit.face, barycentric_coordinates(x[f[0]], x[f[1]], x[f[2]], hit.point), t});
    }
    std::vector<Vec3> xs(surface_ids.size());
    for (size_t i = 0; i < surface_ids.size(); ++i) xs[i] = x[surface_ids[i]];
    for (auto c : detect_self_penetrations(xs, local_faces, rest_local, exclusion, config.max_angle,
                                           config.max_depth)) {
      c.v_in = surface_ids[c.v_in];
      fr.self_contacts.push_back(c);
    }
    if (!in.obstacles.empty()) {
      const std::vector<Vec3> full_normals = vertex_normals(current);
      std::vector<Vec3> ns(surface_ids.size());
      for (size_t i = 0; i < surface_ids.size(); ++i) ns[i] = full_normals[surface_ids[i]];
      for (size_t o = 0; o < in.obstacles.size(); ++o) {
        for (auto c : detect_penetrations(xs, ns, in.obstacles[o], obstacle_index[o],
                                          config.max_angle, config.max_depth)) {
          c.v_in = surface_ids[c.v_in];
          fr.contacts.push_back(c);
        }
        for (auto a : attraction_pairs(xs, obstacle_index[o], config.r_attr)) {
          a.vertex = surface_ids[a.vertex];
          fr.attractions.push_back(a);
        }
      }
    }
    return fr;
  };

  const auto evaluate = [&](const Frozen& fr, const std::vector<Vec3>& pts) {
    std::vector<Term> terms;
    terms.push_back({"geo", 1.0,
                     e_geo(pts, in.surface_faces, fr.forward, fr.backward, config.lambda_d,
                           config.lambda_dn)});
    {
      TermResult rig = e_rig(fit.apply(pts), in.initial_vertices, graph);
      TermResult wrapped;
      wrapped.value = rig.value;
      wrapped.grads["vertices"] = fit.adjoint(rig.grads.at("field"));
      terms.push_back({"rig", config.lambda_a, std::move(wrapped)});
    }
    terms.push_back({"fn", config.lambda_fn, e_fn(pts, in.surface_faces)});
    terms.push_back({"edge", config.lambda_e, e_edge_mean(pts, edges)});
    if (use_ne)
      terms.push_back({"ne", config.lambda_ne, e_ne(reference_tets, pts, config.mu, config.lambda_mat)});
    if (!in.attachments.empty()) {
      TermResult att = e_att(pts, in.attachment_anchors, in.attachments, config.lambda_att);
      TermResult wrapped;
      wrapped.value = att.value;
      wrapped.grads["vertices"] = std::move(att.grads.at("muscle"));
      terms.push_back({"att", 1.0, std::move(wrapped)});
    }
    terms.push_back({"icol", 1.0, e_icol(pts, fr.self_contacts, config.lambda_col)});
    if (!in.obstacles.empty())
      terms.push_back(
          {"ecol", config.lambda_col, e_ecol(pts, fr.contacts, fr.attractions, config.lambda_rep)});
    return compose(terms);
  };

  RegistrationResult res;
  std::vector<Vec3> x = in.initial_vertices;
  Frozen current;
  double prev_value = 0.0;
  double warm_step = 0.0;
  bool have_step = false;
  int consecutive_failures = 0;
  for (int outer = 0; outer < options.max_outer_iterations; ++outer) {
    res.iterations = outer + 1;
    current = freeze(x);
    const auto objective = [&](const VecX& xv, VecX* grad) -> double {
      const EnergyReport rep = evaluate(current, unflatten(xv));
      if (grad) *grad = rep.gradient("vertices");
      return rep.total;
    };
    DescentOptions inner;
    inner.max_iterations = options.inner_iterations;
    inner.relative_tolerance = 1e-8;
    inner.max_failures = options.max_failures;
    if (have_step) {
      inner.initial_step = warm_step;
    } else {
      VecX g0;
      objective(flatten(x), &g0);
      const double gmax = g0.cwiseAbs().maxCoeff();
      inner.initial_step = gmax > 0.0 ? 0.5 * edge_scale / gmax : 1.0;
    }
    DescentResult run;
    try {
      run = descend(objective, flatten(x), inner);
    } catch (const DivergenceError& e) {
      for (const auto& t : e.trace) res.trace.push_back({outer, t.value, t.step});
      throw DivergenceError(
          "refine: diverged at outer iteration " + std::to_string(outer) + ": " + e.what(),
          res.trace);
    }
    x = unflatten(run.x);
    for (const auto& t : run.trace) res.trace.push_back({outer, t.value, t.step});
    if (run.trace.size() > 1) {
      warm_step = run.step;
      have_step = true;
      consecutive_failures = 0;
    } else {
      consecutive_failures += std::max(run.failures, 1);
      if (consecutive_failures >= options.max_failures)
        throw DivergenceError("refine: no progress over " + std::to_string(consecutive_failures) +
                                  " consecutive line searches at outer iteration " +
                                  std::to_string(outer),
                              res.trace);
    }
    if (outer > 0 &&
        std::abs(prev_value - run.value) <
            options.relative_tolerance * (1.0 + std::abs(prev_value))) {
      res.converged = true;
      prev_value = run.value;
      break;
    }
    prev_value = run.value;
  }

  res.vertices = std::move(x);
  res.report = evaluate(current, res.vertices);
  res.surface_vertices = surface_ids;
  res.distances.reserve(surface_ids.size());
  for (int i : surface_ids) res.distances.push_back(target_index.nearest(res.vertices[i]).distance);
  return res;
}

struct DenseCorrespondence {
  int scan_vertex = -1;  // vertex of the external scan
  int face = -1;         // template surface face it lies on
  Vec3 bary;             // barycentric coordinates within that face
};

/// Re-topologizes an external scan onto the template skin: template vertices
/// move so that the corresponded template surface points reach their scan
/// vertices, with the elastic term keeping the interior well shaped. The
/// correspondences are fixed inputs, so this is a single descent on a frozen
/// energy. Requires the correspondences to touch at least half of the
/// template surface vertices.
inline RegistrationResult topology_transfer(const TetMesh& skin, const TriMesh& scan,
                                            const std::vector<DenseCorrespondence>& correspondences,
                                            const EnergyConfig& config,
                                            const RefineOptions& options = {}) {
  config.validate();
  const int n = static_cast<int>(skin.vertices.size());
  require(n >= 2, "topology_transfer: need at least two vertices");
  require(!skin.surface_faces.empty(), "topology_transfer: skin has no surface faces");
  require(!scan.vertices.empty(), "topology_transfer: scan is empty");
  require(!correspondences.empty(), "topology_transfer: no correspondences given");

  std::vector<char> on_surface(n, 0);
  for (const auto& f : skin.surface_faces)
    for (int k = 0; k < 3; ++k) on_surface[f[k]] = 1;
  std::vector<char> covered(n, 0);
  std::vector<BackwardCorr> pins;
  pins.reserve(correspondences.size());
  for (const auto& c : correspondences) {
    require(c.scan_vertex >= 0 && c.scan_vertex < static_cast<int>(scan.vertices.size()),
            "topology_transfer: scan vertex out of range");
    require(c.face >= 0 && c.face < static_cast<int>(skin.surface_faces.size()),
            "topology_transfer: template face out of range");
    require(c.bary.allFinite() && std::abs(c.bary.sum() - 1.0) < 1e-6,
            "topology_transfer: barycentric coordinates must sum to one");
    for (int k = 0; k < 3; ++k) covered[skin.surface_faces[c.face][k]] = 1;
    pins.push_back({c.face, c.bary, scan.vertices[c.scan_vertex]});
  }
  int surface_count = 0, covered_count = 0;
  for (int v = 0; v < n; ++v) {
    surface_count += on_surface[v];
    covered_count += covered[v];
  }
  const double coverage = static_cast<double>(covered_count) / surface_count;
  require(coverage >= 0.5,
          "topology_transfer: correspondences cover " +
              std::to_string(static_cast<int>(std::round(100.0 * coverage))) +
              "% of the template surface; need at least 50%");

  static const std::vector<ForwardCorr> kNoForward;
  const auto evaluate = [&](const std::vector<Vec3>& pts) {
    std::vector<Term> terms;
    terms.push_back({"geo", 1.0,
                     e_geo(pts, skin.surface_faces, kNoForward, pins, config.lambda_d,
                           config.lambda_dn)});
    terms.push_back({"ne", config.lambda_ne, e_ne(skin, pts, config.mu, config.lambda_mat)});
    return compose(terms);
  };
  const auto objective = [&](const VecX& xv, VecX* grad) -> double {
    const EnergyReport rep = evaluate(unflatten(xv));
    if (grad) *grad = rep.gradient("vertices");
    return rep.total;
  };

  TriMesh rest_surface;
  rest_surface.vertices = skin.vertices;
  rest_surface.faces = skin.surface_faces;
  const double edge_scale = mean_edge_length(rest_surface);
  DescentOptions opt;
  opt.max_iterations = options.max_outer_iterations;
  opt.relative_tolerance = options.relative_tolerance;
  opt.max_failures = options.max_failures;
  {
    VecX g0;
    objective(flatten(skin.vertices), &g0);
    const double gmax = g0.cwiseAbs().maxCoeff();
    opt.initial_step = gmax > 0.0 ? 0.5 * edge_scale / gmax : 1.0;
  }
  const DescentResult run = descend(objective, flatten(skin.vertices), opt);

  RegistrationResult res;
  res.vertices = unflatten(run.x);
  res.report = evaluate(res.vertices);
  res.trace = run.trace;
  res.iterations = run.iterations;
  res.converged = run.converged;
  const SpatialIndex scan_index(scan);
  for (int v = 0; v < n; ++v)
    if (on_surface[v]) {
      res.surface_vertices.push_back(v);
      res.distances.push_back(scan_index.nearest(res.vertices[v]).distance);
    }
  return res;
}

}  // namespace lamina
