#include <catch2/catch_amalgamated.hpp>
#include <filesystem>

#include "helpers.hpp"
#include "lamina/geometry/queries.hpp"
#include "lamina/io/obj.hpp"
#include "lamina/io/tetgen.hpp"

using namespace lamina;
using namespace lamina::testing;

namespace {

// exhaustive closest-point scan over every triangle
SurfaceHit brute_nearest(const Vec3& q, const TriMesh& m) {
  SurfaceHit best;
  for (size_t f = 0; f < m.faces.size(); ++f) {
    const Vec3 p = closest_point_on_triangle(q, m.vertices[m.faces[f][0]],
                                             m.vertices[m.faces[f][1]],
                                             m.vertices[m.faces[f][2]]);
    const double d = (p - q).norm();
    if (d < best.distance) {
      best.distance = d;
      best.point = p;
      best.face = static_cast<int>(f);
    }
  }
  return best;
}

double brute_chamfer(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
  auto one_sided = [](const std::vector<Vec3>& x, const std::vector<Vec3>& y) {
    double sum = 0.0;
    for (const auto& p : x) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& q : y) best = std::min(best, (p - q).squaredNorm());
      sum += best;
    }
    return sum / static_cast<double>(x.size());
  };
  return one_sided(a, b) + one_sided(b, a);
}

std::filesystem::path temp_dir() {
  const auto dir = std::filesystem::temp_directory_path() / "lamina_test_io";
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("vertex normals: cube corner is the diagonal direction", "[geometry]") {
  // symmetric triangulation: every corner meets its three faces with equal area
  const TriMesh cube = make_cube_centered();
  const auto normals = vertex_normals(cube);
  for (int i = 0; i < 8; ++i) {
    const Vec3 expected = cube.vertices[i].normalized();  // (±1,±1,±1)/√3
    CHECK_THAT(normals[i].dot(expected), Catch::Matchers::WithinAbs(1.0, 1e-12));
    CHECK_THAT(normals[i].norm(), Catch::Matchers::WithinAbs(1.0, 1e-12));
  }
}

TEST_CASE("vertex normals: single triangle matches face normal", "[geometry]") {
  TriMesh m;
  m.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0)};
  m.faces = {{0, 1, 2}};
  const auto normals = vertex_normals(m);
  for (int i = 0; i < 3; ++i) CHECK((normals[i] - Vec3(0, 0, 1)).norm() < 1e-14);
}

TEST_CASE("vertex normals: icosphere normals within 2 degrees of radial", "[geometry]") {
  const TriMesh sphere = make_icosphere(3.0, 3);
  const auto normals = vertex_normals(sphere);
  const double cos_tol = std::cos(2.0 * M_PI / 180.0);
  for (size_t i = 0; i < sphere.vertices.size(); ++i)
    CHECK(normals[i].dot(sphere.vertices[i].normalized()) > cos_tol);
}

TEST_CASE("vertex normals: zero-area star flagged, not fatal", "[geometry]") {
  TriMesh m;
  m.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(2, 0, 0)};  // collinear
  m.faces = {{0, 1, 2}};
  std::vector<int> degenerate;
  const auto normals = vertex_normals(m, &degenerate);
  CHECK(degenerate == std::vector<int>{0, 1, 2});
  for (const auto& n : normals) CHECK(n.norm() == 0.0);
}

TEST_CASE("chamfer: identical sets give zero", "[geometry]") {
  Rng rng(7);
  const auto pts = random_points(rng, 40, 5.0);
  CHECK(chamfer(pts, pts).value == 0.0);
}

TEST_CASE("chamfer: single pair", "[geometry]") {
  const ChamferResult r = chamfer({Vec3(0, 0, 0)}, {Vec3(1, 0, 0)});
  CHECK_THAT(r.value, Catch::Matchers::WithinAbs(2.0, 1e-15));
  CHECK(r.a_to_b == std::vector<int>{0});
  CHECK(r.b_to_a == std::vector<int>{0});
}

TEST_CASE("chamfer: matches brute-force oracle", "[geometry]") {
  Rng rng(11);
  const auto a = random_points(rng, 50, 3.0);
  const auto b = random_points(rng, 50, 3.0);
  const double fast = chamfer(a, b).value;
  const double slow = brute_chamfer(a, b);
  CHECK_THAT(fast, Catch::Matchers::WithinAbs(slow, 1e-10));
}

TEST_CASE("chamfer: symmetric and rigid-invariant", "[geometry]") {
  Rng rng(13);
  const auto a = random_points(rng, 30, 2.0);
  const auto b = random_points(rng, 45, 2.0);
  const double ab = chamfer(a, b).value;
  CHECK_THAT(chamfer(b, a).value, Catch::Matchers::WithinRel(ab, 1e-12));

  const Mat3 rot = random_rotation(rng);
  const Vec3 shift = rng.normal3() * 10.0;
  auto moved = [&](const std::vector<Vec3>& pts) {
    std::vector<Vec3> out;
    for (const auto& p : pts) out.push_back(rot * p + shift);
    return out;
  };
  CHECK_THAT(chamfer(moved(a), moved(b)).value, Catch::Matchers::WithinRel(ab, 1e-9));
}

TEST_CASE("chamfer: empty set rejected", "[geometry]") {
  CHECK_THROWS_AS(chamfer({}, {Vec3(0, 0, 0)}), Error);
}

TEST_CASE("nearest surface point: on-surface query returns itself", "[geometry]") {
  const TriMesh cube = make_cube();
  const SpatialIndex idx(cube);
  const Vec3 q(1.0, 0.25, -0.5);  // on the x = +1 face
  const SurfaceHit hit = nearest_surface_point(q, idx);
  CHECK(hit.distance < 1e-14);
  CHECK((hit.point - q).norm() < 1e-14);
}

TEST_CASE("nearest surface point: foot point under elevated query", "[geometry]") {
  TriMesh m;
  m.vertices = {Vec3(0, 0, 0), Vec3(3, 0, 0), Vec3(0, 3, 0)};
  m.faces = {{0, 1, 2}};
  const SpatialIndex idx(m);
  const Vec3 center(1.0, 1.0, 0.0);
  const double h = 0.7;
  const SurfaceHit hit = idx.nearest(center + Vec3(0, 0, h));
  CHECK_THAT(hit.distance, Catch::Matchers::WithinAbs(h, 1e-14));
  CHECK((hit.point - center).norm() < 1e-14);
  CHECK((hit.normal - Vec3(0, 0, 1)).norm() < 1e-14);
}

TEST_CASE("nearest surface point: agrees with exhaustive scan", "[geometry]") {
  const TriMesh sphere = make_icosphere(2.0, 2, Vec3(0.3, -0.1, 0.5));
  const SpatialIndex idx(sphere);
  Rng rng(17);
  for (int i = 0; i < 100; ++i) {
    const Vec3 q = rng.normal3() * 3.0;
    const SurfaceHit fast = idx.nearest(q);
    const SurfaceHit slow = brute_nearest(q, sphere);
    if (fast.face != slow.face)
      CHECK_THAT(fast.distance, Catch::Matchers::WithinAbs(slow.distance, 1e-9));
    else
      CHECK((fast.point - slow.point).norm() < 1e-9);
  }
}

TEST_CASE("deformation gradient: identity, rotation, uniform scale", "[geometry]") {
  const TetMesh box = make_box_tets();
  SECTION("rest configuration") {
    for (size_t t = 0; t < box.tets.size(); ++t) {
      const Mat3 F = deformation_gradient(box, static_cast<int>(t), box.vertices);
      CHECK((F - Mat3::Identity()).norm() < 1e-12);
    }
  }
  SECTION("rigid motion gives the rotation") {
    Rng rng(23);
    const Mat3 rot = random_rotation(rng);
    std::vector<Vec3> moved;
    for (const auto& v : box.vertices) moved.push_back(rot * v + Vec3(4, -2, 9));
    for (size_t t = 0; t < box.tets.size(); ++t) {
      const Mat3 F = deformation_gradient(box, static_cast<int>(t), moved);
      CHECK((F - rot).norm() < 1e-10);
      CHECK((F.transpose() * F - Mat3::Identity()).norm() < 1e-8);
    }
  }
  SECTION("uniform scale") {
    const double s = 1.73;
    std::vector<Vec3> scaled;
    for (const auto& v : box.vertices) scaled.push_back(s * v);
    for (size_t t = 0; t < box.tets.size(); ++t) {
      const Mat3 F = deformation_gradient(box, static_cast<int>(t), scaled);
      CHECK((F - s * Mat3::Identity()).norm() < 1e-10);
      CHECK_THAT(F.determinant(), Catch::Matchers::WithinRel(s * s * s, 1e-10));
    }
  }
}

TEST_CASE("tet mesh: shape inverse really inverts the rest edges", "[geometry]") {
  const TetMesh box = make_box_tets(Vec3(1, 2, 3), 0.8);
  for (size_t t = 0; t < box.tets.size(); ++t) {
    const Mat3 edges = tet_edge_matrix(box.vertices, box.tets[t]);
    CHECK((box.rest_shape_inverse[t] * edges - Mat3::Identity()).norm() < 1e-6);
  }
}

TEST_CASE("tet mesh: volumes of a convex solid sum to the analytic value", "[geometry]") {
  const double half = 1.3;
  const TetMesh box = make_box_tets(Vec3(0.5, -1, 2), half);
  const double side = 2.0 * half;
  CHECK_THAT(total_rest_volume(box),
             Catch::Matchers::WithinRel(side * side * side, 1e-6));
}

TEST_CASE("tet mesh: inverted rest tet rejected at construction", "[geometry]") {
  std::vector<Vec3> verts = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1)};
  CHECK_NOTHROW(make_tet_mesh(verts, {Tet{0, 1, 2, 3}}));
  CHECK_THROWS_AS(make_tet_mesh(verts, {Tet{0, 2, 1, 3}}), Error);
}

TEST_CASE("tet mesh: boundary of the box tets is a watertight cube surface", "[geometry]") {
  const TetMesh box = make_box_tets();
  const TriMesh surface = box.surface_mesh();
  CHECK(surface.faces.size() == 12);
  CHECK(is_watertight(surface));
  // outward orientation: every face normal points away from the center
  for (size_t fi = 0; fi < surface.faces.size(); ++fi) {
    const Face& f = surface.faces[fi];
    const Vec3 centroid = (surface.vertices[f[0]] + surface.vertices[f[1]] +
                           surface.vertices[f[2]]) / 3.0;
    CHECK(face_normal(surface, static_cast<int>(fi)).dot(centroid) > 0.0);
  }
}

TEST_CASE("watertight check names the open boundary", "[geometry]") {
  TriMesh cube = make_cube();
  CHECK(is_watertight(cube));
  cube.faces.pop_back();
  CHECK_FALSE(is_watertight(cube));
  CHECK_THROWS_WITH(require_watertight(cube, "probe"),
                    Catch::Matchers::ContainsSubstring("edge 1-5"));
}

TEST_CASE("winding number: inside vs outside a sphere", "[geometry]") {
  const TriMesh sphere = make_icosphere(1.0, 2);
  const SpatialIndex idx(sphere);
  CHECK(idx.contains(Vec3(0, 0, 0)));
  CHECK(idx.contains(Vec3(0.5, 0.3, -0.4)));
  CHECK_FALSE(idx.contains(Vec3(1.2, 0, 0)));
  CHECK_FALSE(idx.contains(Vec3(0, 0, -5)));
  CHECK_THAT(idx.winding_number(Vec3(0, 0, 0)), Catch::Matchers::WithinAbs(1.0, 1e-9));
  CHECK_THAT(idx.winding_number(Vec3(3, 3, 3)), Catch::Matchers::WithinAbs(0.0, 1e-9));
}

TEST_CASE("penetrations: disjoint spheres give the empty list", "[geometry]") {
  const TriMesh a = make_icosphere(1.0, 1, Vec3(-3, 0, 0));
  const TriMesh b = make_icosphere(1.0, 1, Vec3(3, 0, 0));
  const SpatialIndex idx(b);
  const auto contacts =
      detect_penetrations(a.vertices, vertex_normals(a), b, idx, 180.0, 100.0);
  CHECK(contacts.empty());
}

TEST_CASE("penetrations: small sphere inside a cube is fully reported", "[geometry]") {
  const TriMesh sphere = make_icosphere(0.3, 1);
  const TriMesh cube = make_cube(Vec3::Zero(), 1.0);
  const SpatialIndex idx(cube);
  const auto contacts =
      detect_penetrations(sphere.vertices, vertex_normals(sphere), cube, idx, 180.0, 100.0);
  CHECK(contacts.size() == sphere.vertices.size());
  for (const auto& c : contacts) {
    CHECK_THAT(c.n_tar.norm(), Catch::Matchers::WithinAbs(1.0, 1e-6));
    CHECK(c.depth >= 0.0);
  }
}

TEST_CASE("penetrations: analytic depth half a millimeter inside a face", "[geometry]") {
  const TriMesh cube = make_cube(Vec3::Zero(), 1.0);  // faces at ±1
  const SpatialIndex idx(cube);
  // a point 0.5 below the x=+1 face, its normal facing that face
  const std::vector<Vec3> verts = {Vec3(0.5, 0.1, 0.2)};
  const std::vector<Vec3> normals = {Vec3(-1, 0, 0)};
  const auto contacts = detect_penetrations(verts, normals, cube, idx, 90.0, 100.0);
  REQUIRE(contacts.size() == 1);
  CHECK_THAT(contacts[0].depth, Catch::Matchers::WithinAbs(0.5, 1e-12));
  CHECK((contacts[0].n_tar - Vec3(1, 0, 0)).norm() < 1e-12);
  // invariant: depth equals n_tar · (v_tar − v_in)
  CHECK_THAT(contacts[0].n_tar.dot(contacts[0].v_tar - contacts[0].v_in_position),
             Catch::Matchers::WithinAbs(contacts[0].depth, 1e-12));
}

TEST_CASE("penetrations: normal filter drops passed-through contacts", "[geometry]") {
  const TriMesh cube = make_cube(Vec3::Zero(), 1.0);
  const SpatialIndex idx(cube);
  const std::vector<Vec3> verts = {Vec3(0.5, 0.1, 0.2)};
  // probe normal aligned with the x=+1 face normal: the surface carrying this
  // vertex has moved through the face, not into it → facing angle 180° > 90°
  const auto contacts = detect_penetrations(verts, {Vec3(1, 0, 0)}, cube, idx, 90.0, 100.0);
  CHECK(contacts.empty());
}

TEST_CASE("penetrations: depth filter drops deep contacts", "[geometry]") {
  const TriMesh cube = make_cube(Vec3::Zero(), 10.0);
  const SpatialIndex idx(cube);
  const std::vector<Vec3> verts = {Vec3(9.5, 0, 0), Vec3(0, 0, 0)};
  const std::vector<Vec3> normals = {Vec3(-1, 0, 0), Vec3(-1, 0, 0)};
  const auto contacts = detect_penetrations(verts, normals, cube, idx, 90.0, 1.0);
  REQUIRE(contacts.size() == 1);
  CHECK(contacts[0].v_in == 0);
}

TEST_CASE("penetrations: non-watertight target rejected", "[geometry]") {
  TriMesh cube = make_cube();
  cube.faces.pop_back();
  const SpatialIndex idx(cube);
  CHECK_THROWS_AS(detect_penetrations({Vec3(0, 0, 0)}, {Vec3(1, 0, 0)}, cube, idx),
                  Error);
}

TEST_CASE("penetrations: all-outside probes give the empty list", "[geometry]") {
  const TriMesh cube = make_cube();
  const SpatialIndex idx(cube);
  Rng rng(29);
  std::vector<Vec3> verts, normals;
  for (int i = 0; i < 50; ++i) {
    Vec3 p = rng.normal3() * 4.0;
    while (p.cwiseAbs().maxCoeff() <= 1.0) p *= 2.0;  // push outside
    verts.push_back(p);
    normals.push_back(rng.normal3().normalized());
  }
  CHECK(detect_penetrations(verts, normals, cube, idx, 180.0, 1e6).empty());
}

TEST_CASE("mesh components and edge utilities", "[geometry]") {
  TriMesh two = make_cube(Vec3(-5, 0, 0));
  const TriMesh other = make_cube(Vec3(5, 0, 0));
  const int offset = static_cast<int>(two.vertices.size());
  for (const auto& v : other.vertices) two.vertices.push_back(v);
  for (const auto& f : other.faces)
    two.faces.push_back({f[0] + offset, f[1] + offset, f[2] + offset});
  const auto [component, count] = vertex_components(two);
  CHECK(count == 2);
  CHECK(component[0] == component[7]);
  CHECK(component[0] != component[8]);
  CHECK(edge_list(two).size() == 2 * 18);  // cube surface has 18 edges
  CHECK_THAT(mean_edge_length(make_cube(Vec3::Zero(), 0.5)),
             Catch::Matchers::WithinRel((12 * 1.0 + 6 * std::sqrt(2.0)) / 18.0, 1e-12));
}

TEST_CASE("obj: cube round-trips", "[io]") {
  const TriMesh cube = make_cube(Vec3(0.25, -1.5, 3.0), 0.75);
  const auto path = (temp_dir() / "cube.obj").string();
  save_obj(cube, path);
  const TriMesh back = load_obj(path);
  REQUIRE(back.vertices.size() == cube.vertices.size());
  REQUIRE(back.faces.size() == cube.faces.size());
  for (size_t i = 0; i < cube.vertices.size(); ++i)
    CHECK((back.vertices[i] - cube.vertices[i]).norm() == 0.0);
  CHECK(back.faces == cube.faces);
}

TEST_CASE("obj: uv round-trips", "[io]") {
  TriMesh m = make_cube();
  Rng rng(31);
  for (size_t i = 0; i < m.vertices.size(); ++i)
    m.uv.push_back(Vec2(rng.uniform(), rng.uniform()));
  const auto path = (temp_dir() / "cube_uv.obj").string();
  save_obj(m, path);
  const TriMesh back = load_obj(path);
  REQUIRE(back.uv.size() == m.uv.size());
  for (size_t i = 0; i < m.uv.size(); ++i)
    CHECK((back.uv[i] - m.uv[i]).norm() < 1e-9);
}

TEST_CASE("obj: comments, blank lines, slashed and negative indices", "[io]") {
  const auto path = (temp_dir() / "annotated.obj").string();
  {
    std::ofstream out(path);
    out << "# header comment\n\n"
        << "v 0 0 0\n"
        << "v 1 0 0\n"
        << "v 0 1 0\n"
        << "v 1 1 0\n"
        << "vt 0 0\nvt 1 0\nvt 0 1\nvt 1 1\n"
        << "# a quad with v/vt references, fan-triangulated\n"
        << "f 1/1 2/2 4/4 3/3\n"
        << "\n"
        << "f -4//1 -3//1 -1//1\n";  // negative (relative) indices
  }
  const TriMesh m = load_obj(path);
  CHECK(m.vertices.size() == 4);
  CHECK(m.faces.size() == 3);
  CHECK(m.faces[0] == Face{0, 1, 3});
  CHECK(m.faces[1] == Face{0, 3, 2});
  CHECK(m.faces[2] == Face{0, 1, 3});
}

TEST_CASE("obj: malformed input names the line", "[io]") {
  const auto path = (temp_dir() / "broken.obj").string();
  {
    std::ofstream out(path);
    out << "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 nonsense\n";
  }
  CHECK_THROWS_WITH(load_obj(path), Catch::Matchers::ContainsSubstring(":4:"));

  {
    std::ofstream out(path);
    out << "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n";
  }
  CHECK_THROWS_WITH(load_obj(path), Catch::Matchers::ContainsSubstring("out of range"));
}

TEST_CASE("tetgen: box round-trips through the node/ele pair", "[io]") {
  const TetMesh box = make_box_tets(Vec3(1, 2, 3), 0.6);
  const auto node = (temp_dir() / "box.node").string();
  const auto ele = (temp_dir() / "box.ele").string();
  save_tet(box, node, ele);
  const TetMesh back = load_tet(node, ele);
  REQUIRE(back.vertices.size() == box.vertices.size());
  REQUIRE(back.tets.size() == box.tets.size());
  for (size_t i = 0; i < box.vertices.size(); ++i)
    CHECK((back.vertices[i] - box.vertices[i]).norm() == 0.0);
  CHECK(back.tets == box.tets);
  CHECK_THAT(total_rest_volume(back), Catch::Matchers::WithinRel(total_rest_volume(box), 1e-12));
}

TEST_CASE("tetgen: documented layout with attributes and comments parses", "[io]") {
  // single tet written the way the format documentation shows it: header
  // counts, per-record attributes and boundary markers, comment lines
  const auto node = (temp_dir() / "doc.node").string();
  const auto ele = (temp_dir() / "doc.ele").string();
  {
    std::ofstream out(node);
    out << "# Node count, dim, attributes, boundary markers\n"
        << "4  3  1  1\n"
        << "   1    0 0 0   0.5   1\n"
        << "   2    1 0 0   0.5   1\n"
        << "   3    0 1 0   0.5   1\n"
        << "   4    0 0 1   0.5   1\n";
  }
  {
    std::ofstream out(ele);
    out << "1  4  0\n"
        << "# the only element\n"
        << "1    1 2 3 4\n";
  }
  const TetMesh m = load_tet(node, ele);
  CHECK(m.vertices.size() == 4);
  CHECK(m.tets.size() == 1);
  CHECK_THAT(m.rest_volumes[0], Catch::Matchers::WithinRel(1.0 / 6.0, 1e-12));
  CHECK(m.surface_faces.size() == 4);
}

TEST_CASE("tetgen: malformed records name the line", "[io]") {
  const auto node = (temp_dir() / "bad.node").string();
  const auto ele = (temp_dir() / "bad.ele").string();
  {
    std::ofstream out(node);
    out << "2 3 0 0\n1 0 0 0\n2 oops 0 0\n";
  }
  {
    std::ofstream out(ele);
    out << "1 4 0\n1 1 2 3 4\n";
  }
  CHECK_THROWS_WITH(load_tet(node, ele), Catch::Matchers::ContainsSubstring(":3:"));
}
