#pragma once

#include <map>

#include "lamina/energy/config.hpp"
#include "lamina/geometry/kdtree.hpp"
#include "lamina/geometry/queries.hpp"

namespace lamina {

/// Value plus analytic gradients keyed by free-variable block name.
struct TermResult {
  double value = 0.0;
  std::map<std::string, VecX> grads;
};

// ---------------------------------------------------------------------------
// geometric data term

/// Frozen forward correspondence: deformed vertex → target surface sample.
struct ForwardCorr {
  int vertex;
  Vec3 point;   // nearest point on the target
  Vec3 normal;  // unit target normal there
};

/// Frozen backward correspondence: target sample → point on the deformed
/// surface, tracked barycentrically so it moves with the vertices.
struct BackwardCorr {
  int face;
  Vec3 bary;
  Vec3 point;  // target sample position
};

namespace detail {

/// ∂(area vector of face (a,b,c))/∂a = skew(c−b), cyclically.
inline Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0, -v[2], v[1], v[2], 0, -v[0], -v[1], v[0], 0;
  return m;
}

}  // namespace detail

/// E_geo: symmetric squared surface chamfer plus mean normal deviation over
/// the forward correspondences, λ_d·chamfer + λ_dn·(1/|F|)Σ(1 − n̂·n_target).
/// Correspondences are frozen; the value is a pure function of the deformed
/// vertex positions. Gradient block: "vertices".
inline TermResult e_geo(const std::vector<Vec3>& vertices, const std::vector<Face>& faces,
                        const std::vector<ForwardCorr>& forward,
                        const std::vector<BackwardCorr>& backward, double lambda_d,
                        double lambda_dn) {
  require(!vertices.empty(), "e_geo: empty mesh");
  require(!forward.empty() || !backward.empty(), "e_geo: no correspondences");
  TermResult out;
  VecX grad = VecX::Zero(3 * vertices.size());
  auto add = [&](int v, const Vec3& g) { grad.segment<3>(3 * v) += g; };

  if (!forward.empty()) {
    const double inv = 1.0 / static_cast<double>(forward.size());
    for (const auto& c : forward) {
      const Vec3 d = vertices[c.vertex] - c.point;
      out.value += lambda_d * inv * d.squaredNorm();
      add(c.vertex, 2.0 * lambda_d * inv * d);
    }
  }
  if (!backward.empty()) {
    const double inv = 1.0 / static_cast<double>(backward.size());
    for (const auto& c : backward) {
      const Face& f = faces[c.face];
      const Vec3 p = c.bary[0] * vertices[f[0]] + c.bary[1] * vertices[f[1]] +
                     c.bary[2] * vertices[f[2]];
      const Vec3 d = p - c.point;
      out.value += lambda_d * inv * d.squaredNorm();
      for (int k = 0; k < 3; ++k) add(f[k], 2.0 * lambda_d * inv * c.bary[k] * d);
    }
  }

  if (lambda_dn > 0.0 && !forward.empty()) {
    // star lists for the vertices that carry a normal term
    std::vector<std::vector<int>> star(vertices.size());
    for (size_t fi = 0; fi < faces.size(); ++fi)
      for (int k = 0; k < 3; ++k) star[faces[fi][k]].push_back(static_cast<int>(fi));
    const double inv = 1.0 / static_cast<double>(forward.size());
    for (const auto& c : forward) {
      Vec3 u = Vec3::Zero();  // unnormalized area-weighted vertex normal
      for (int fi : star[c.vertex]) {
        const Face& f = faces[fi];
        u += (vertices[f[1]] - vertices[f[0]]).cross(vertices[f[2]] - vertices[f[0]]);
      }
      const double r = u.norm();
      if (r < 1e-14) continue;  // degenerate star: skipped in value and gradient
      const double cosang = u.dot(c.normal) / r;
      out.value += lambda_dn * inv * std::clamp(1.0 - cosang, 0.0, 2.0);
      // d(u·n/‖u‖)/du, then chain through each face's area vector
      const Vec3 gu = (c.normal - (cosang / r) * u) / r;
      for (int fi : star[c.vertex]) {
        const Face& f = faces[fi];
        const Vec3 &a = vertices[f[0]], &b = vertices[f[1]], &cc = vertices[f[2]];
        add(f[0], -lambda_dn * inv * detail::skew(cc - b).transpose() * gu);
        add(f[1], -lambda_dn * inv * detail::skew(a - cc).transpose() * gu);
        add(f[2], -lambda_dn * inv * detail::skew(b - a).transpose() * gu);
      }
    }
  }
  out.grads["vertices"] = std::move(grad);
  return out;
}

// ---------------------------------------------------------------------------
// rigidity of a per-vertex deformation field

/// Per-vertex affine deformations D_i(x) = A_i x + t_i, identity-initialized.
struct DeformationField {
  std::vector<Mat3> a;
  std::vector<Vec3> t;

  static DeformationField identity(int n) {
    DeformationField f;
    f.a.assign(n, Mat3::Identity());
    f.t.assign(n, Vec3::Zero());
    return f;
  }

  int size() const { return static_cast<int>(a.size()); }
  Vec3 apply(int i, const Vec3& x) const { return a[i] * x + t[i]; }

  /// 12 numbers per vertex: row-major A, then t.
  VecX pack() const {
    VecX x(12 * size());
    for (int i = 0; i < size(); ++i) {
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) x[12 * i + 3 * r + c] = a[i](r, c);
      x.segment<3>(12 * i + 9) = t[i];
    }
    return x;
  }

  static DeformationField unpack(const VecX& x) {
    require(x.size() % 12 == 0, "DeformationField: packed size not divisible by 12");
    DeformationField f;
    const int n = static_cast<int>(x.size()) / 12;
    f.a.resize(n);
    f.t.resize(n);
    for (int i = 0; i < n; ++i) {
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) f.a[i](r, c) = x[12 * i + 3 * r + c];
      f.t[i] = x.segment<3>(12 * i + 9);
    }
    return f;
  }
};

/// k-nearest-neighbor graph over rest vertices with Gaussian falloff weights
/// w_ij = exp(−‖v_i−v_j‖²/2σ²).
struct RigidityGraph {
  std::vector<std::vector<int>> neighbors;
  std::vector<std::vector<double>> weights;
  double sigma = 0.0;
};

inline RigidityGraph rigidity_graph(const std::vector<Vec3>& rest, double sigma, int k = 8) {
  require(sigma > 0.0, "rigidity_graph: sigma must be positive");
  require(rest.size() >= 2, "rigidity_graph: need at least two vertices");
  RigidityGraph g;
  g.sigma = sigma;
  g.neighbors.resize(rest.size());
  g.weights.resize(rest.size());
  const KdTree tree(rest);
  const int kk = std::min<int>(k, static_cast<int>(rest.size()) - 1);
  for (size_t i = 0; i < rest.size(); ++i) {
    g.neighbors[i] = tree.knn(rest[i], kk, static_cast<int>(i));
    for (int j : g.neighbors[i])
      g.weights[i].push_back(
          std::exp(-(rest[i] - rest[j]).squaredNorm() / (2.0 * sigma * sigma)));
  }
  return g;
}

/// E_rig: Σ_i Σ_{j∈N(i)} w_ij ‖D_i v_j − D_j v_j‖² over rest positions.
/// Gradient block: "field" (packed DeformationField layout).
inline TermResult e_rig(const DeformationField& field, const std::vector<Vec3>& rest,
                        const RigidityGraph& graph) {
  require(field.size() == static_cast<int>(rest.size()), "e_rig: field size mismatch");
  TermResult out;
  VecX grad = VecX::Zero(12 * field.size());
  auto add = [&](int i, const Mat3& da, const Vec3& dt) {
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) grad[12 * i + 3 * r + c] += da(r, c);
    grad.segment<3>(12 * i + 9) += dt;
  };
  for (size_t i = 0; i < rest.size(); ++i)
    for (size_t n = 0; n < graph.neighbors[i].size(); ++n) {
      const int j = graph.neighbors[i][n];
      const double w = graph.weights[i][n];
      const Vec3& vj = rest[j];
      const Vec3 r = field.apply(static_cast<int>(i), vj) - field.apply(j, vj);
      out.value += w * r.squaredNorm();
      const Vec3 g = 2.0 * w * r;
      add(static_cast<int>(i), g * vj.transpose(), g);
      add(j, -g * vj.transpose(), -g);
    }
  out.grads["field"] = std::move(grad);
  return out;
}

// ---------------------------------------------------------------------------
// face-normal consistency and edge-length regularizers

/// E_fn: mean (1 − cos dihedral normal angle) over adjacent face pairs.
/// Gradient block: "vertices".
inline TermResult e_fn(const std::vector<Vec3>& vertices, const std::vector<Face>& faces) {
  TermResult out;
  VecX grad = VecX::Zero(3 * vertices.size());
  // adjacent face pairs via shared undirected edges
  std::map<std::pair<int, int>, std::vector<int>> edge_faces;
  for (size_t fi = 0; fi < faces.size(); ++fi)
    for (int k = 0; k < 3; ++k) {
      const int a = faces[fi][k], b = faces[fi][(k + 1) % 3];
      edge_faces[std::minmax(a, b)].push_back(static_cast<int>(fi));
    }
  std::vector<std::pair<int, int>> pairs;
  for (const auto& [edge, fs] : edge_faces)
    if (fs.size() == 2) pairs.emplace_back(fs[0], fs[1]);
  if (pairs.empty()) return out;

  auto area_vec = [&](int fi) {
    const Face& f = faces[fi];
    return Vec3((vertices[f[1]] - vertices[f[0]]).cross(vertices[f[2]] - vertices[f[0]]));
  };
  const double inv = 1.0 / static_cast<double>(pairs.size());
  for (const auto& [fa, fb] : pairs) {
    const Vec3 na = area_vec(fa), nb = area_vec(fb);
    const double ra = na.norm(), rb = nb.norm();
    if (ra < 1e-14 || rb < 1e-14) continue;
    const Vec3 ua = na / ra, ub = nb / rb;
    out.value += inv * (1.0 - ua.dot(ub));
    // d(−ua·ub) through each unnormalized area vector
    const Vec3 ga = -(ub - ua.dot(ub) * ua) / ra;  // d value / d na
    const Vec3 gb = -(ua - ua.dot(ub) * ub) / rb;
    for (const auto& [fi, g] : {std::pair<int, Vec3>{fa, ga}, {fb, gb}}) {
      const Face& f = faces[fi];
      const Vec3 &a = vertices[f[0]], &b = vertices[f[1]], &c = vertices[f[2]];
      grad.segment<3>(3 * f[0]) += inv * detail::skew(c - b).transpose() * g;
      grad.segment<3>(3 * f[1]) += inv * detail::skew(a - c).transpose() * g;
      grad.segment<3>(3 * f[2]) += inv * detail::skew(b - a).transpose() * g;
    }
  }
  out.grads["vertices"] = std::move(grad);
  return out;
}

/// E_edge, registration form: mean edge length. Gradient block: "vertices".
inline TermResult e_edge_mean(const std::vector<Vec3>& vertices,
                              const std::vector<std::pair<int, int>>& edges) {
  require(!edges.empty(), "e_edge_mean: no edges");
  TermResult out;
  VecX grad = VecX::Zero(3 * vertices.size());
  const double inv = 1.0 / static_cast<double>(edges.size());
  for (const auto& [a, b] : edges) {
    const Vec3 d = vertices[a] - vertices[b];
    const double len = d.norm();
    out.value += inv * len;
    if (len < 1e-14) continue;
    grad.segment<3>(3 * a) += inv * d / len;
    grad.segment<3>(3 * b) -= inv * d / len;
  }
  out.grads["vertices"] = std::move(grad);
  return out;
}

/// E_edge, learning form: mean squared edge-length difference against
/// reference lengths. Gradient block: "vertices".
inline TermResult e_edge_diff(const std::vector<Vec3>& vertices,
                              const std::vector<std::pair<int, int>>& edges,
                              const std::vector<double>& reference_lengths) {
  require(!edges.empty(), "e_edge_diff: no edges");
  require(edges.size() == reference_lengths.size(), "e_edge_diff: reference size mismatch");
  TermResult out;
  VecX grad = VecX::Zero(3 * vertices.size());
  const double inv = 1.0 / static_cast<double>(edges.size());
  for (size_t e = 0; e < edges.size(); ++e) {
    const auto& [a, b] = edges[e];
    const Vec3 d = vertices[a] - vertices[b];
    const double len = d.norm();
    const double diff = len - reference_lengths[e];
    out.value += inv * diff * diff;
    if (len < 1e-14) continue;
    const Vec3 g = 2.0 * inv * diff * d / len;
    grad.segment<3>(3 * a) += g;
    grad.segment<3>(3 * b) -= g;
  }
  out.grads["vertices"] = std::move(grad);
  return out;
}

// ---------------------------------------------------------------------------
// Neo-Hookean elasticity

/// Stable Neo-Hookean density ψ(F) = (μ/2)(tr(FᵀF)−3) − μ(detF−1)
/// + (λ/2)(detF−1)²; zero at the identity, rotation-invariant, finite for
/// inverted elements.
inline double neo_hookean_density(const Mat3& f, double mu, double lambda) {
  const double j = f.determinant();
  return 0.5 * mu * (f.squaredNorm() - 3.0) - mu * (j - 1.0) +
         0.5 * lambda * (j - 1.0) * (j - 1.0);
}

/// E_ne (unscaled by λ_ne): Σ_t V_t ψ(F_t) over a tet mesh's deformed
/// vertices. Gradient block: "vertices". Inverted tets (det F ≤ 0) are
/// reported, not fatal.
inline TermResult e_ne(const TetMesh& mesh, const std::vector<Vec3>& deformed, double mu,
                       double lambda, std::vector<int>* inverted = nullptr) {
  require(deformed.size() == mesh.vertices.size(), "e_ne: vertex count mismatch");
  TermResult out;
  VecX grad = VecX::Zero(3 * deformed.size());
  if (inverted) inverted->clear();
  for (size_t t = 0; t < mesh.tets.size(); ++t) {
    const Mat3 f = deformation_gradient(mesh, static_cast<int>(t), deformed);
    const double j = f.determinant();
    if (j <= 0.0 && inverted) inverted->push_back(static_cast<int>(t));
    const double v = mesh.rest_volumes[t];
    out.value += v * neo_hookean_density(f, mu, lambda);
    // ∂ψ/∂F = μF + (λ(J−1) − μ)·cof(F)
    Mat3 cof;
    cof.col(0) = f.col(1).cross(f.col(2));
    cof.col(1) = f.col(2).cross(f.col(0));
    cof.col(2) = f.col(0).cross(f.col(1));
    const Mat3 p = mu * f + (lambda * (j - 1.0) - mu) * cof;
    const Mat3 de = v * p * mesh.rest_shape_inverse[t].transpose();  // ∂/∂ edge matrix
    const Tet& tet = mesh.tets[t];
    Vec3 d0 = Vec3::Zero();
    for (int c = 0; c < 3; ++c) {
      grad.segment<3>(3 * tet[c + 1]) += de.col(c);
      d0 -= de.col(c);
    }
    grad.segment<3>(3 * tet[0]) += d0;
  }
  out.grads["vertices"] = std::move(grad);
  return out;
}

// ---------------------------------------------------------------------------
// attachments and collisions

/// E_att: λ_att Σ ‖A_m − A_b‖² over attachment pairs. Gradient blocks:
/// "muscle" and "bone".
inline TermResult e_att(const std::vector<Vec3>& muscle_vertices,
                        const std::vector<Vec3>& bone_vertices,
                        const std::vector<std::pair<int, int>>& pairs, double lambda_att) {
  TermResult out;
  VecX gm = VecX::Zero(3 * muscle_vertices.size());
  VecX gb = VecX::Zero(3 * bone_vertices.size());
  for (const auto& [m, b] : pairs) {
    const Vec3 d = muscle_vertices.at(m) - bone_vertices.at(b);
    out.value += lambda_att * d.squaredNorm();
    gm.segment<3>(3 * m) += 2.0 * lambda_att * d;
    gb.segment<3>(3 * b) -= 2.0 * lambda_att * d;
  }
  out.grads["muscle"] = std::move(gm);
  out.grads["bone"] = std::move(gb);
  return out;
}

/// E_icol: λ_col Σ ‖n_tarᵀ(v_in − v_tar)‖² over frozen contacts, evaluated
/// at the current probe vertex positions. Gradient block: "vertices".
inline TermResult e_icol(const std::vector<Vec3>& vertices,
                         const std::vector<PenetrationContact>& contacts,
                         double lambda_col) {
  TermResult out;
  VecX grad = VecX::Zero(3 * vertices.size());
  for (const auto& c : contacts) {
    const double depth = c.n_tar.dot(vertices[c.v_in] - c.v_tar);
    out.value += lambda_col * depth * depth;
    grad.segment<3>(3 * c.v_in) += 2.0 * lambda_col * depth * c.n_tar;
  }
  out.grads["vertices"] = std::move(grad);
  return out;
}

/// Frozen attraction pair: probe vertex pulled toward a nearby target point.
struct AttractionPair {
  int vertex;
  Vec3 target;
};

/// Probe vertices whose nearest target surface point lies within r_attr.
inline std::vector<AttractionPair> attraction_pairs(const std::vector<Vec3>& vertices,
                                                    const SpatialIndex& target,
                                                    double r_attr) {
  std::vector<AttractionPair> out;
  for (size_t i = 0; i < vertices.size(); ++i) {
    const SurfaceHit hit = target.nearest(vertices[i]);
    if (hit.distance <= r_attr) out.push_back({static_cast<int>(i), hit.point});
  }
  return out;
}

/// E_ecol: λ_rep·E_rep + (1−λ_rep)·E_attr with frozen contacts and
/// attraction pairs; E_rep is the squared point-to-plane depth, E_attr the
/// squared point-to-point distance. Gradient block: "vertices".
inline TermResult e_ecol(const std::vector<Vec3>& vertices,
                         const std::vector<PenetrationContact>& contacts,
                         const std::vector<AttractionPair>& attractions, double lambda_rep) {
  require(lambda_rep >= 0.0 && lambda_rep <= 1.0, "e_ecol: lambda_rep must be in [0,1]");
  TermResult out;
  VecX grad = VecX::Zero(3 * vertices.size());
  for (const auto& c : contacts) {
    const double depth = c.n_tar.dot(vertices[c.v_in] - c.v_tar);
    out.value += lambda_rep * depth * depth;
    grad.segment<3>(3 * c.v_in) += 2.0 * lambda_rep * depth * c.n_tar;
  }
  const double wa = 1.0 - lambda_rep;
  if (wa > 0.0)
    for (const auto& p : attractions) {
      const Vec3 d = vertices[p.vertex] - p.target;
      out.value += wa * d.squaredNorm();
      grad.segment<3>(3 * p.vertex) += 2.0 * wa * d;
    }
  out.grads["vertices"] = std::move(grad);
  return out;
}

// ---------------------------------------------------------------------------
// learning-stage penalties

/// E_jt: Σ ‖posed joint − target joint‖². Gradient block: "joints".
inline TermResult e_jt(const std::vector<Vec3>& posed_joints,
                       const std::vector<Vec3>& target_joints) {
  require(posed_joints.size() == target_joints.size(), "e_jt: joint count mismatch");
  TermResult out;
  VecX grad = VecX::Zero(3 * posed_joints.size());
  for (size_t j = 0; j < posed_joints.size(); ++j) {
    const Vec3 d = posed_joints[j] - target_joints[j];
    out.value += d.squaredNorm();
    grad.segment<3>(3 * j) = 2.0 * d;
  }
  out.grads["joints"] = std::move(grad);
  return out;
}

/// E_preg: Σ ‖θ_j‖₂ over masked joints (unsquared, so large rotations pay
/// linearly). Gradient block: "theta" (row-major K×3).
inline TermResult e_preg(const MatX& theta, const std::vector<char>& mask) {
  require(static_cast<int>(mask.size()) == theta.rows(), "e_preg: mask size mismatch");
  TermResult out;
  VecX grad = VecX::Zero(theta.size());
  for (int j = 0; j < theta.rows(); ++j) {
    if (!mask[j]) continue;
    const double norm = theta.row(j).norm();
    out.value += norm;
    if (norm > 1e-14) grad.segment<3>(3 * j) = theta.row(j).transpose() / norm;
  }
  out.grads["theta"] = std::move(grad);
  return out;
}

/// E_jreg: ‖𝒥̃·T_p − J_p‖²_F tying the regressor candidate to per-subject
/// joints. Gradient blocks: "regressor" (row-major), "bone_vertices",
/// "rest_joints".
inline TermResult e_jreg(const MatX& regressor, const std::vector<Vec3>& bone_vertices,
                         const std::vector<Vec3>& joints) {
  require(regressor.cols() == static_cast<int>(bone_vertices.size()),
          "e_jreg: regressor width mismatch");
  require(regressor.rows() == static_cast<int>(joints.size()),
          "e_jreg: regressor height mismatch");
  TermResult out;
  MatX x(bone_vertices.size(), 3);
  for (size_t i = 0; i < bone_vertices.size(); ++i) x.row(i) = bone_vertices[i];
  MatX jp(joints.size(), 3);
  for (size_t i = 0; i < joints.size(); ++i) jp.row(i) = joints[i];
  const MatX r = regressor * x - jp;
  out.value = r.squaredNorm();
  const MatX dreg = 2.0 * r * x.transpose();
  VecX greg(regressor.size());
  for (int i = 0; i < regressor.rows(); ++i)
    for (int c = 0; c < regressor.cols(); ++c) greg[i * regressor.cols() + c] = dreg(i, c);
  const MatX dx = 2.0 * regressor.transpose() * r;
  VecX gx(3 * bone_vertices.size());
  for (int i = 0; i < dx.rows(); ++i) gx.segment<3>(3 * i) = dx.row(i);
  VecX gj(3 * joints.size());
  for (int i = 0; i < r.rows(); ++i) gj.segment<3>(3 * i) = -2.0 * r.row(i);
  out.grads["regressor"] = std::move(greg);
  out.grads["bone_vertices"] = std::move(gx);
  out.grads["rest_joints"] = std::move(gj);
  return out;
}

/// E_wreg: ‖W − W̃‖²_F. Gradient block: "weights" (row-major).
inline TermResult e_wreg(const MatX& w, const MatX& w_ref) {
  require(w.rows() == w_ref.rows() && w.cols() == w_ref.cols(), "e_wreg: shape mismatch");
  TermResult out;
  const MatX d = w - w_ref;
  out.value = d.squaredNorm();
  VecX grad(w.size());
  for (int i = 0; i < w.rows(); ++i)
    for (int c = 0; c < w.cols(); ++c) grad[i * w.cols() + c] = 2.0 * d(i, c);
  out.grads["weights"] = std::move(grad);
  return out;
}

/// E_pbreg: ‖𝒫‖²_F. Gradient block: "poseblend" (row-major).
inline TermResult e_pbreg(const MatX& p) {
  TermResult out;
  out.value = p.squaredNorm();
  VecX grad(p.size());
  for (int i = 0; i < p.rows(); ++i)
    for (int c = 0; c < p.cols(); ++c) grad[i * p.cols() + c] = 2.0 * p(i, c);
  out.grads["poseblend"] = std::move(grad);
  return out;
}

/// E_sreg: squared residual of T_p off the shape space, ‖(I − 𝒮ᵀ𝒮)(T_p − T̄)‖².
/// Zero exactly when the personalized template is representable by the
/// basis. Gradient block: "template".
inline TermResult e_sreg(const VecX& t_p, const MatX& components, const VecX& mean) {
  require(t_p.size() == mean.size(), "e_sreg: template size mismatch");
  require(components.cols() == t_p.size(), "e_sreg: component width mismatch");
  TermResult out;
  const VecX r = t_p - mean;
  const VecX off = r - components.transpose() * (components * r);
  out.value = off.squaredNorm();
  // the projector is symmetric, so the gradient applies it once more
  out.grads["template"] = 2.0 * (off - components.transpose() * (components * off));
  return out;
}

}  // namespace lamina
