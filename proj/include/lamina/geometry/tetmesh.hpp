#pragma once

#include <map>

#include "lamina/geometry/trimesh.hpp"

namespace lamina {

/// Rest-pose edge matrix of a tet: columns are the three edges from vertex 0.
inline Mat3 tet_edge_matrix(const std::vector<Vec3>& verts, const Tet& t) {
  Mat3 d;
  d.col(0) = verts[t[1]] - verts[t[0]];
  d.col(1) = verts[t[2]] - verts[t[0]];
  d.col(2) = verts[t[3]] - verts[t[0]];
  return d;
}

/// Tetrahedral mesh. Surface faces index the same vertex array as the tets;
/// interior vertices are simply never referenced by a surface face.
struct TetMesh {
  std::vector<Vec3> vertices;
  std::vector<Tet> tets;
  std::vector<Face> surface_faces;      // outward-oriented boundary triangles
  std::vector<double> rest_volumes;     // mm^3, one per tet, all > 0
  std::vector<Mat3> rest_shape_inverse; // inverse rest edge matrix per tet

  int vertex_count() const { return static_cast<int>(vertices.size()); }
  int tet_count() const { return static_cast<int>(tets.size()); }

  /// Boundary surface sharing this mesh's vertex numbering.
  TriMesh surface_mesh() const { return TriMesh{vertices, surface_faces, {}}; }

  /// Sorted ids of vertices lying on the boundary surface.
  std::vector<int> surface_vertex_ids() const {
    std::vector<int> ids;
    ids.reserve(surface_faces.size() * 3);
    for (const auto& f : surface_faces) ids.insert(ids.end(), f.begin(), f.end());
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    return ids;
  }
};

/// Boundary faces = tet faces used exactly once, oriented outward (the standard
/// opposite-vertex convention keeps the normal pointing away from the solid).
inline std::vector<Face> boundary_faces(const std::vector<Tet>& tets) {
  // The four faces of (a,b,c,d), wound so normals point away from the 4th vertex.
  static constexpr int kFace[4][3] = {{1, 2, 3}, {0, 3, 2}, {0, 1, 3}, {0, 2, 1}};
  std::map<std::array<int, 3>, std::pair<int, Face>> seen;  // sorted key -> (count, oriented)
  for (const auto& t : tets)
    for (const auto& fi : kFace) {
      Face f = {t[fi[0]], t[fi[1]], t[fi[2]]};
      std::array<int, 3> key = {f[0], f[1], f[2]};
      std::sort(key.begin(), key.end());
      auto [it, fresh] = seen.emplace(key, std::make_pair(0, f));
      it->second.first++;
    }
  std::vector<Face> out;
  for (const auto& [key, cf] : seen)
    if (cf.first == 1) out.push_back(cf.second);
  return out;
}

inline double tet_signed_volume(const std::vector<Vec3>& verts, const Tet& t) {
  return tet_edge_matrix(verts, t).determinant() / 6.0;
}

/// Builds a TetMesh from vertices and tets: derives the boundary surface,
/// rest volumes, and inverse rest edge matrices. Rejects inverted or
/// degenerate rest tets.
inline TetMesh make_tet_mesh(std::vector<Vec3> vertices, std::vector<Tet> tets) {
  TetMesh m;
  const int n = static_cast<int>(vertices.size());
  for (size_t i = 0; i < tets.size(); ++i) {
    for (int v : tets[i])
      require(v >= 0 && v < n, "TetMesh: tet " + std::to_string(i) + " has out-of-range vertex");
    const Mat3 d = tet_edge_matrix(vertices, tets[i]);
    const double vol = d.determinant() / 6.0;
    require(vol > 0.0, "TetMesh: tet " + std::to_string(i) +
                           " has non-positive rest volume (" + std::to_string(vol) + ")");
    m.rest_volumes.push_back(vol);
    m.rest_shape_inverse.push_back(d.inverse());
  }
  m.surface_faces = boundary_faces(tets);
  m.vertices = std::move(vertices);
  m.tets = std::move(tets);
  return m;
}

/// F = (deformed edge matrix) * rest_shape_inverse.
inline Mat3 deformation_gradient(const TetMesh& m, int tet_id,
                                 const std::vector<Vec3>& deformed) {
  return tet_edge_matrix(deformed, m.tets[tet_id]) * m.rest_shape_inverse[tet_id];
}

inline double total_rest_volume(const TetMesh& m) {
  double v = 0.0;
  for (double x : m.rest_volumes) v += x;
  return v;
}

}  // namespace lamina
