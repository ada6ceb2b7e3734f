#pragma once

#include "lamina/geometry/kdtree.hpp"
#include "lamina/geometry/spatial_index.hpp"
#include "lamina/geometry/tetmesh.hpp"

namespace lamina {

struct ChamferResult {
  double value = 0.0;            // symmetric mean of squared NN distances
  std::vector<int> a_to_b;       // nearest index in B for each point of A
  std::vector<int> b_to_a;       // nearest index in A for each point of B
};

/// Symmetric chamfer distance between two point sets:
/// (1/|A|) Σ min_b ‖a−b‖² + (1/|B|) Σ min_a ‖b−a‖², with both nearest-index
/// maps recorded.
inline ChamferResult chamfer(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
  require(!a.empty() && !b.empty(), "chamfer: empty point set");
  ChamferResult out;
  out.a_to_b.resize(a.size());
  out.b_to_a.resize(b.size());
  const KdTree tree_a(a), tree_b(b);
  double sum_ab = 0.0, sum_ba = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const int j = tree_b.nearest(a[i]);
    out.a_to_b[i] = j;
    sum_ab += (a[i] - b[j]).squaredNorm();
  }
  for (size_t j = 0; j < b.size(); ++j) {
    const int i = tree_a.nearest(b[j]);
    out.b_to_a[j] = i;
    sum_ba += (b[j] - a[i]).squaredNorm();
  }
  out.value = sum_ab / static_cast<double>(a.size()) +
              sum_ba / static_cast<double>(b.size());
  return out;
}

struct PenetrationContact {
  int v_in = -1;       // penetrating vertex index in the probe set
  Vec3 v_in_position;  // its position
  Vec3 v_tar;          // nearest point on the target surface
  Vec3 n_tar;          // unit normal of the target surface at v_tar
  double depth = 0.0;  // penetration depth along n_tar, mm
};

/// Probe vertices strictly inside the closed target surface, filtered to
/// shallow frontal contacts: the probe normal must face the local target
/// normal within max_angle degrees and the depth must not exceed max_depth
/// mm. Vertices whose normal aligns with the target normal have passed
/// through (or belong to the same surface fold) and are discarded — those
/// large collisions cannot be resolved by a contact energy. The target must
/// be watertight; candidate vertices are prefiltered by surface distance
/// before the winding-number inside test.
inline std::vector<PenetrationContact> detect_penetrations(
    const std::vector<Vec3>& probe_vertices, const std::vector<Vec3>& probe_normals,
    const TriMesh& target, const SpatialIndex& target_index,
    double max_angle_deg = 90.0, double max_depth = 10.0) {
  require(probe_vertices.size() == probe_normals.size(),
          "detect_penetrations: vertex/normal count mismatch");
  require_watertight(target, "detect_penetrations target");
  const double cos_max = std::cos(max_angle_deg * M_PI / 180.0);
  std::vector<PenetrationContact> contacts;
  for (size_t i = 0; i < probe_vertices.size(); ++i) {
    const Vec3& p = probe_vertices[i];
    const SurfaceHit hit = target_index.nearest(p);
    if (hit.distance > max_depth) continue;  // too far to be a shallow contact
    if (!target_index.contains(p)) continue;
    const double depth = std::abs(hit.normal.dot(hit.point - p));
    if (depth > max_depth) continue;
    if (-probe_normals[i].dot(hit.normal) < cos_max) continue;  // facing angle beyond max
    PenetrationContact c;
    c.v_in = static_cast<int>(i);
    c.v_in_position = p;
    c.v_tar = hit.point;
    c.n_tar = hit.normal;
    c.depth = depth;
    contacts.push_back(c);
  }
  return contacts;
}

}  // namespace lamina
