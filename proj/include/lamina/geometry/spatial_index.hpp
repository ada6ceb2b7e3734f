#pragma once

#include <limits>
#include <numeric>

#include "lamina/geometry/trimesh.hpp"

namespace lamina {

/// Closest point on triangle (a,b,c) to p. Ericson, Real-Time Collision
/// Detection, 5.1.5.
inline Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b,
                                      const Vec3& c) {
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return a;

  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return b;

  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) return a + (d1 / (d1 - d3)) * ab;

  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return c;

  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) return a + (d2 / (d2 - d6)) * ac;

  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0)
    return b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b);

  const double denom = 1.0 / (va + vb + vc);
  return a + ab * (vb * denom) + ac * (vc * denom);
}

/// Barycentric coordinates of p with respect to triangle (a,b,c), computed in
/// the triangle's plane. p is expected to lie on (or near) the triangle.
inline Vec3 barycentric_coordinates(const Vec3& a, const Vec3& b, const Vec3& c,
                                    const Vec3& p) {
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d00 = ab.dot(ab), d01 = ab.dot(ac), d11 = ac.dot(ac);
  const double d20 = ap.dot(ab), d21 = ap.dot(ac);
  const double denom = d00 * d11 - d01 * d01;
  require(denom > 1e-20, "barycentric_coordinates: degenerate triangle");
  const double v = (d11 * d20 - d01 * d21) / denom;
  const double w = (d00 * d21 - d01 * d20) / denom;
  return {1.0 - v - w, v, w};
}

struct SurfaceHit {
  Vec3 point;    // closest point on the surface
  Vec3 normal;   // unit normal of the hit face
  int face = -1;
  double distance = std::numeric_limits<double>::infinity();
};

/// Axis-aligned bounding-box tree over the triangles of one mesh. Exact
/// nearest-point queries plus winding-number inside/outside tests. Immutable
/// after construction; queries are const and thread-safe.
class SpatialIndex {
 public:
  SpatialIndex() = default;

  explicit SpatialIndex(const TriMesh& mesh)
      : vertices_(mesh.vertices), faces_(mesh.faces) {
    require(!faces_.empty(), "SpatialIndex: mesh has no faces");
    order_.resize(faces_.size());
    std::iota(order_.begin(), order_.end(), 0);
    centroids_.reserve(faces_.size());
    for (const auto& f : faces_)
      centroids_.push_back((vertices_[f[0]] + vertices_[f[1]] + vertices_[f[2]]) / 3.0);
    nodes_.reserve(2 * faces_.size());
    build(0, static_cast<int>(faces_.size()));
  }

  const std::vector<Vec3>& vertices() const { return vertices_; }
  const std::vector<Face>& faces() const { return faces_; }

  SurfaceHit nearest(const Vec3& q) const {
    return nearest_if(q, [](int) { return true; });
  }

  /// Nearest point over faces for which keep(face) is true. Returns a hit
  /// with face -1 when every face is filtered out.
  template <class FaceFilter>
  SurfaceHit nearest_if(const Vec3& q, FaceFilter&& keep) const {
    SurfaceHit best;
    nearest_rec(0, q, best, keep);
    if (best.face < 0) return best;
    const auto& f = faces_[best.face];
    best.normal = (vertices_[f[1]] - vertices_[f[0]])
                      .cross(vertices_[f[2]] - vertices_[f[0]])
                      .normalized();
    return best;
  }

  /// Generalized winding number of the mesh around q (1 inside a closed
  /// surface, 0 outside). Exact up to floating point; O(faces).
  double winding_number(const Vec3& q) const {
    double omega = 0.0;
    for (const auto& f : faces_) {
      const Vec3 a = vertices_[f[0]] - q;
      const Vec3 b = vertices_[f[1]] - q;
      const Vec3 c = vertices_[f[2]] - q;
      const double la = a.norm(), lb = b.norm(), lc = c.norm();
      const double num = a.dot(b.cross(c));
      const double den = la * lb * lc + a.dot(b) * lc + b.dot(c) * la + c.dot(a) * lb;
      omega += 2.0 * std::atan2(num, den);
    }
    return omega / (4.0 * M_PI);
  }

  bool contains(const Vec3& q) const { return winding_number(q) > 0.5; }

 private:
  struct Node {
    Vec3 lo, hi;
    int left = -1, right = -1;  // children, or -1 for leaves
    int begin = 0, end = 0;     // face range in order_ (leaves only)
  };

  static constexpr int kLeafSize = 4;

  int build(int begin, int end) {
    Node node;
    node.lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    node.hi = -node.lo;
    for (int i = begin; i < end; ++i)
      for (int k = 0; k < 3; ++k) {
        const Vec3& v = vertices_[faces_[order_[i]][k]];
        node.lo = node.lo.cwiseMin(v);
        node.hi = node.hi.cwiseMax(v);
      }
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back(node);
    if (end - begin <= kLeafSize) {
      nodes_[id].begin = begin;
      nodes_[id].end = end;
      return id;
    }
    int axis;
    (node.hi - node.lo).maxCoeff(&axis);
    const int mid = (begin + end) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](int a, int b) { return centroids_[a][axis] < centroids_[b][axis]; });
    const int l = build(begin, mid);
    const int r = build(mid, end);
    nodes_[id].left = l;
    nodes_[id].right = r;
    return id;
  }

  double box_distance2(const Node& n, const Vec3& q) const {
    const Vec3 d = (n.lo - q).cwiseMax(q - n.hi).cwiseMax(0.0);
    return d.squaredNorm();
  }

  template <class FaceFilter>
  void nearest_rec(int id, const Vec3& q, SurfaceHit& best, FaceFilter&& keep) const {
    const Node& n = nodes_[id];
    if (box_distance2(n, q) >= best.distance * best.distance) return;
    if (n.left < 0) {
      for (int i = n.begin; i < n.end; ++i) {
        const int f = order_[i];
        if (!keep(f)) continue;
        const Vec3 p = closest_point_on_triangle(q, vertices_[faces_[f][0]],
                                                 vertices_[faces_[f][1]],
                                                 vertices_[faces_[f][2]]);
        const double d = (p - q).norm();
        if (d < best.distance) {
          best.distance = d;
          best.point = p;
          best.face = f;
        }
      }
      return;
    }
    const double dl = box_distance2(nodes_[n.left], q);
    const double dr = box_distance2(nodes_[n.right], q);
    if (dl < dr) {
      nearest_rec(n.left, q, best, keep);
      nearest_rec(n.right, q, best, keep);
    } else {
      nearest_rec(n.right, q, best, keep);
      nearest_rec(n.left, q, best, keep);
    }
  }

  std::vector<Vec3> vertices_;
  std::vector<Face> faces_;
  std::vector<Vec3> centroids_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
};

/// Closest point on any triangle of the indexed mesh, with the hit face's
/// normal.
inline SurfaceHit nearest_surface_point(const Vec3& q, const SpatialIndex& idx) {
  return idx.nearest(q);
}

}  // namespace lamina
