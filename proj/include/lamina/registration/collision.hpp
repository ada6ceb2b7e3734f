#pragma once

#include <cmath>
#include <vector>

#include "lamina/geometry/queries.hpp"
#include "lamina/geometry/spatial_index.hpp"
#include "lamina/geometry/trimesh.hpp"

namespace lamina {

/// Self-penetration contacts of one deformed surface. For each vertex the
/// nearest surface patch outside its exclusion ball is found; a contact is
/// recorded when the vertex lies behind that patch (the patch normal points
/// away from it) within the depth cap, and only when the vertex normal
/// faces the patch normal within max_angle degrees. The facing requirement
/// keeps shallow frontal contacts, drops geometry that has passed beyond
/// the far side, and ignores same-oriented patches of the same fold (for a
/// convex region every vertex sits marginally behind its neighbors' planes).
/// The exclusion ball is measured in the rest configuration, where separate
/// parts are separated by construction, so the test works both across parts
/// and for a surface folding onto itself.
inline std::vector<PenetrationContact> detect_self_penetrations(
    const std::vector<Vec3>& vertices, const std::vector<Face>& faces,
    const std::vector<Vec3>& rest_vertices, double exclusion_radius, double max_angle_deg = 90.0,
    double max_depth = 10.0) {
  require(vertices.size() == rest_vertices.size(),
          "detect_self_penetrations: rest/deformed vertex count mismatch");
  require(!faces.empty(), "detect_self_penetrations: mesh has no faces");
  require(exclusion_radius > 0.0, "detect_self_penetrations: exclusion radius must be positive");
  require(max_depth > 0.0, "detect_self_penetrations: max depth must be positive");

  TriMesh mesh;
  mesh.vertices = vertices;
  mesh.faces = faces;
  const std::vector<Vec3> normals = vertex_normals(mesh);
  const SpatialIndex index(mesh);
  const double cos_max = std::cos(max_angle_deg * M_PI / 180.0);
  const double r2 = exclusion_radius * exclusion_radius;

  std::vector<PenetrationContact> contacts;
  for (int i = 0; i < static_cast<int>(vertices.size()); ++i) {
    const Vec3& rest = rest_vertices[i];
    const auto outside_ball = [&](int f) {
      for (int k = 0; k < 3; ++k)
        if ((rest_vertices[faces[f][k]] - rest).squaredNorm() < r2) return false;
      return true;
    };
    const SurfaceHit hit = index.nearest_if(vertices[i], outside_ball);
    if (hit.face < 0 || hit.distance > max_depth) continue;
    const double side = hit.normal.dot(vertices[i] - hit.point);
    if (side >= 0.0) continue;  // in front of the patch
    if (-normals[i].dot(hit.normal) < cos_max) continue;  // facing angle beyond max
    contacts.push_back({i, vertices[i], hit.point, hit.normal, -side});
  }
  return contacts;
}

}  // namespace lamina
