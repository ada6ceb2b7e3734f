#pragma once

#include <map>

#include "lamina/common.hpp"
#include "lamina/geometry/tetmesh.hpp"
#include "lamina/geometry/trimesh.hpp"

namespace lamina::testing {

/// Axis-aligned cube surface: 8 vertices, 12 outward-wound triangles.
inline TriMesh make_cube(const Vec3& center = Vec3::Zero(), double half = 1.0) {
  TriMesh m;
  for (int i = 0; i < 8; ++i)
    m.vertices.push_back(center + half * Vec3(i & 1 ? 1 : -1, i & 2 ? 1 : -1,
                                              i & 4 ? 1 : -1));
  const int quads[6][4] = {
      {0, 2, 3, 1},  // z = -1, seen from below
      {4, 5, 7, 6},  // z = +1
      {0, 1, 5, 4},  // y = -1
      {2, 6, 7, 3},  // y = +1
      {0, 4, 6, 2},  // x = -1
      {1, 3, 7, 5},  // x = +1
  };
  for (const auto& q : quads) {
    m.faces.push_back({q[0], q[1], q[2]});
    m.faces.push_back({q[0], q[2], q[3]});
  }
  return m;
}

/// Cube whose quads are split through face-center vertices, so every corner
/// sees each adjacent face with equal total area.
inline TriMesh make_cube_centered(const Vec3& center = Vec3::Zero(), double half = 1.0) {
  TriMesh m = make_cube(center, half);
  m.faces.clear();
  const int quads[6][4] = {{0, 2, 3, 1}, {4, 5, 7, 6}, {0, 1, 5, 4},
                           {2, 6, 7, 3}, {0, 4, 6, 2}, {1, 3, 7, 5}};
  for (const auto& q : quads) {
    const int c = static_cast<int>(m.vertices.size());
    m.vertices.push_back((m.vertices[q[0]] + m.vertices[q[1]] + m.vertices[q[2]] +
                          m.vertices[q[3]]) / 4.0);
    for (int k = 0; k < 4; ++k) m.faces.push_back({q[k], q[(k + 1) % 4], c});
  }
  return m;
}

/// Icosahedron subdivided `subdiv` times, vertices projected to radius r.
inline TriMesh make_icosphere(double r = 1.0, int subdiv = 2,
                              const Vec3& center = Vec3::Zero()) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  TriMesh m;
  const double raw[12][3] = {{-1, t, 0}, {1, t, 0},  {-1, -t, 0}, {1, -t, 0},
                             {0, -1, t}, {0, 1, t},  {0, -1, -t}, {0, 1, -t},
                             {t, 0, -1}, {t, 0, 1},  {-t, 0, -1}, {-t, 0, 1}};
  for (const auto& v : raw) m.vertices.push_back(Vec3(v[0], v[1], v[2]).normalized());
  const int tri[20][3] = {{0, 11, 5}, {0, 5, 1},   {0, 1, 7},   {0, 7, 10},
                          {0, 10, 11}, {1, 5, 9},  {5, 11, 4},  {11, 10, 2},
                          {10, 7, 6},  {7, 1, 8},  {3, 9, 4},   {3, 4, 2},
                          {3, 2, 6},   {3, 6, 8},  {3, 8, 9},   {4, 9, 5},
                          {2, 4, 11},  {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
  for (const auto& f : tri) m.faces.push_back({f[0], f[1], f[2]});

  for (int s = 0; s < subdiv; ++s) {
    std::map<std::pair<int, int>, int> midpoint;
    auto mid = [&](int a, int b) {
      const auto key = std::minmax(a, b);
      auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      const int id = static_cast<int>(m.vertices.size());
      m.vertices.push_back((m.vertices[a] + m.vertices[b]).normalized());
      midpoint.emplace(key, id);
      return id;
    };
    std::vector<Face> next;
    for (const auto& f : m.faces) {
      const int ab = mid(f[0], f[1]), bc = mid(f[1], f[2]), ca = mid(f[2], f[0]);
      next.push_back({f[0], ab, ca});
      next.push_back({f[1], bc, ab});
      next.push_back({f[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    m.faces = std::move(next);
  }
  for (auto& v : m.vertices) v = center + r * v;
  return m;
}

/// Cube split into 6 positively oriented tets along the main diagonal.
inline TetMesh make_box_tets(const Vec3& center = Vec3::Zero(), double half = 1.0) {
  std::vector<Vec3> verts;
  for (int i = 0; i < 8; ++i)
    verts.push_back(center + half * Vec3(i & 1 ? 1 : -1, i & 2 ? 1 : -1,
                                         i & 4 ? 1 : -1));
  // the six monotone lattice paths 0 → 7
  const int raw[6][4] = {{0, 1, 3, 7}, {0, 1, 5, 7}, {0, 2, 3, 7},
                         {0, 2, 6, 7}, {0, 4, 5, 7}, {0, 4, 6, 7}};
  std::vector<Tet> tets;
  for (const auto& t : raw) {
    Tet tet = {t[0], t[1], t[2], t[3]};
    if (tet_signed_volume(verts, tet) < 0) std::swap(tet[2], tet[3]);
    tets.push_back(tet);
  }
  return make_tet_mesh(verts, tets);
}

/// Closed surface of one tetrahedron, faces wound outward.
inline TriMesh make_tetra_surface(const std::array<Vec3, 4>& p) {
  TriMesh m;
  m.vertices.assign(p.begin(), p.end());
  const Vec3 centroid = (p[0] + p[1] + p[2] + p[3]) / 4.0;
  const int raw[4][3] = {{0, 1, 2}, {0, 1, 3}, {0, 2, 3}, {1, 2, 3}};
  for (const auto& f : raw) {
    Face face = {f[0], f[1], f[2]};
    const Vec3 n = (p[face[1]] - p[face[0]]).cross(p[face[2]] - p[face[0]]);
    const Vec3 fc = (p[face[0]] + p[face[1]] + p[face[2]]) / 3.0;
    if (n.dot(fc - centroid) < 0) std::swap(face[1], face[2]);
    m.faces.push_back(face);
  }
  return m;
}

inline Mat3 random_rotation(Rng& rng) {
  Eigen::Quaterniond q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
  return q.normalized().toRotationMatrix();
}

inline std::vector<Vec3> random_points(Rng& rng, int n, double scale = 1.0) {
  std::vector<Vec3> pts;
  pts.reserve(n);
  for (int i = 0; i < n; ++i) pts.push_back(scale * rng.normal3());
  return pts;
}

}  // namespace lamina::testing
