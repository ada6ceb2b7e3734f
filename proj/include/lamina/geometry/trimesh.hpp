#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <optional>
#include <utility>

#include "lamina/common.hpp"

namespace lamina {

/// Triangle mesh. Vertices in millimeters, faces as CCW vertex-index triples.
struct TriMesh {
  std::vector<Vec3> vertices;
  std::vector<Face> faces;
  std::vector<Vec2> uv;  // optional, per-vertex, empty when absent

  int vertex_count() const { return static_cast<int>(vertices.size()); }
  int face_count() const { return static_cast<int>(faces.size()); }

  void validate() const {
    const int n = vertex_count();
    for (size_t f = 0; f < faces.size(); ++f) {
      const auto& [a, b, c] = faces[f];
      require(a >= 0 && a < n && b >= 0 && b < n && c >= 0 && c < n,
              "TriMesh: face " + std::to_string(f) + " has out-of-range vertex index");
      require(a != b && b != c && a != c,
              "TriMesh: face " + std::to_string(f) + " repeats a vertex index");
    }
    if (!uv.empty())
      require(uv.size() == vertices.size(), "TriMesh: uv count does not match vertex count");
  }
};

inline Vec3 face_normal(const TriMesh& m, int f) {
  const auto& [a, b, c] = m.faces[f];
  return (m.vertices[b] - m.vertices[a]).cross(m.vertices[c] - m.vertices[a]).normalized();
}

/// Cross product of two face edges; norm is twice the face area.
inline Vec3 face_area_vector(const TriMesh& m, int f) {
  const auto& [a, b, c] = m.faces[f];
  return (m.vertices[b] - m.vertices[a]).cross(m.vertices[c] - m.vertices[a]);
}

inline double face_area(const TriMesh& m, int f) { return 0.5 * face_area_vector(m, f).norm(); }

/// Area-weighted vertex normals. A vertex whose incident faces all have zero
/// area gets the zero vector and its index is appended to `degenerate`.
inline std::vector<Vec3> vertex_normals(const TriMesh& m,
                                        std::vector<int>* degenerate = nullptr) {
  std::vector<Vec3> acc(m.vertices.size(), Vec3::Zero());
  for (int f = 0; f < m.face_count(); ++f) {
    const Vec3 av = face_area_vector(m, f);
    for (int k = 0; k < 3; ++k) acc[m.faces[f][k]] += av;
  }
  for (size_t v = 0; v < acc.size(); ++v) {
    const double len = acc[v].norm();
    if (len < 1e-14) {
      acc[v].setZero();
      if (degenerate) degenerate->push_back(static_cast<int>(v));
    } else {
      acc[v] /= len;
    }
  }
  return acc;
}

/// Unique undirected edges, each as an ordered (lo, hi) pair.
inline std::vector<std::pair<int, int>> edge_list(const TriMesh& m) {
  std::vector<std::pair<int, int>> edges;
  edges.reserve(m.faces.size() * 3);
  for (const auto& f : m.faces)
    for (int k = 0; k < 3; ++k) {
      int a = f[k], b = f[(k + 1) % 3];
      edges.emplace_back(std::min(a, b), std::max(a, b));
    }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  return edges;
}

/// For each undirected edge, the (one or two) incident face ids.
inline std::map<std::pair<int, int>, std::vector<int>> edge_faces(const TriMesh& m) {
  std::map<std::pair<int, int>, std::vector<int>> out;
  for (int f = 0; f < m.face_count(); ++f)
    for (int k = 0; k < 3; ++k) {
      int a = m.faces[f][k], b = m.faces[f][(k + 1) % 3];
      out[{std::min(a, b), std::max(a, b)}].push_back(f);
    }
  return out;
}

/// A closed orientable surface: every undirected edge is shared by exactly two
/// faces with opposite winding. Returns an offending edge otherwise.
inline std::optional<std::pair<int, int>> find_open_edge(const TriMesh& m) {
  // signed count: +1 for (a,b) traversal, -1 for (b,a)
  std::map<std::pair<int, int>, std::pair<int, int>> count;  // edge -> (total, signed)
  for (const auto& f : m.faces)
    for (int k = 0; k < 3; ++k) {
      int a = f[k], b = f[(k + 1) % 3];
      auto key = std::make_pair(std::min(a, b), std::max(a, b));
      auto& [total, sgn] = count[key];
      ++total;
      sgn += (a < b) ? 1 : -1;
    }
  for (const auto& [edge, cs] : count)
    if (cs.first != 2 || cs.second != 0) return edge;
  return std::nullopt;
}

inline bool is_watertight(const TriMesh& m) { return !find_open_edge(m).has_value(); }

inline void require_watertight(const TriMesh& m, const std::string& what) {
  if (auto edge = find_open_edge(m))
    throw Error(what + ": surface is not watertight (open or non-manifold edge " +
                std::to_string(edge->first) + "-" + std::to_string(edge->second) + ")");
}

/// Connected components over shared vertices; returns per-vertex component id
/// and the component count.
inline std::pair<std::vector<int>, int> vertex_components(const TriMesh& m) {
  std::vector<int> parent(m.vertices.size());
  for (size_t i = 0; i < parent.size(); ++i) parent[i] = static_cast<int>(i);
  std::function<int(int)> find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const auto& f : m.faces) {
    int a = find(f[0]);
    parent[find(f[1])] = a;
    parent[find(f[2])] = a;
  }
  std::map<int, int> remap;
  std::vector<int> comp(m.vertices.size());
  for (size_t i = 0; i < comp.size(); ++i) {
    int root = find(static_cast<int>(i));
    auto [it, fresh] = remap.emplace(root, static_cast<int>(remap.size()));
    comp[i] = it->second;
  }
  return {comp, static_cast<int>(remap.size())};
}

inline double mean_edge_length(const TriMesh& m) {
  auto edges = edge_list(m);
  if (edges.empty()) return 0.0;
  double total = 0.0;
  for (const auto& [a, b] : edges) total += (m.vertices[a] - m.vertices[b]).norm();
  return total / static_cast<double>(edges.size());
}

}  // namespace lamina
