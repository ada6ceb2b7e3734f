#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "fd_checks.hpp"

using namespace lamina;
using namespace lamina::testing;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

/// 3×3 grid in the z=0 plane, 8 triangles, all normals +z.
TriMesh make_plane_grid() {
  TriMesh m;
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 3; ++x) m.vertices.push_back(Vec3(x, y, 0));
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 2; ++x) {
      const int a = y * 3 + x, b = a + 1, c = a + 3, d = a + 4;
      m.faces.push_back({a, b, d});
      m.faces.push_back({a, d, c});
    }
  return m;
}

/// Identity correspondences of a mesh onto itself, using its own smooth
/// vertex normals as targets.
std::pair<std::vector<ForwardCorr>, std::vector<BackwardCorr>> identity_corrs(
    const TriMesh& m, double normal_sign = 1.0) {
  const auto vn = vertex_normals(m);
  std::vector<ForwardCorr> fwd;
  for (size_t i = 0; i < m.vertices.size(); ++i)
    fwd.push_back({static_cast<int>(i), m.vertices[i], normal_sign * vn[i]});
  std::vector<BackwardCorr> bwd;
  std::vector<char> seen(m.vertices.size(), 0);
  for (size_t f = 0; f < m.faces.size(); ++f)
    for (int k = 0; k < 3; ++k) {
      const int v = m.faces[f][k];
      if (seen[v]) continue;
      seen[v] = 1;
      Vec3 bary = Vec3::Zero();
      bary[k] = 1.0;
      bwd.push_back({static_cast<int>(f), bary, m.vertices[v]});
    }
  return {fwd, bwd};
}

}  // namespace

TEST_CASE("e_geo is zero for a mesh matched to itself") {
  const TriMesh m = make_icosphere(10.0, 1);
  const auto [fwd, bwd] = identity_corrs(m);
  const TermResult r = e_geo(m.vertices, m.faces, fwd, bwd, 1.0, 1.0);
  CHECK(r.value >= 0.0);
  CHECK(r.value < 1e-12);
  CHECK(r.grads.at("vertices").cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("e_geo flipped target normals cost 2 per correspondence") {
  const TriMesh m = make_icosphere(10.0, 1);
  const auto [fwd, bwd] = identity_corrs(m, -1.0);
  const double dn = 0.7;
  const TermResult r = e_geo(m.vertices, m.faces, fwd, bwd, 0.0, dn);
  CHECK_THAT(r.value, WithinRel(2.0 * dn, 1e-12));
}

TEST_CASE("e_geo rejects degenerate input") {
  CHECK_THROWS_WITH(e_geo({}, {}, {}, {}, 1.0, 1.0), ContainsSubstring("empty"));
  const TriMesh m = make_icosphere(10.0, 0);
  CHECK_THROWS_WITH(e_geo(m.vertices, m.faces, {}, {}, 1.0, 1.0),
                    ContainsSubstring("no correspondences"));
}

TEST_CASE("e_rig vanishes for a constant field and matches the two-vertex closed form") {
  const std::vector<Vec3> rest = {Vec3(0, 0, 0), Vec3(2, 0, 0)};
  const RigidityGraph graph = rigidity_graph(rest, 2.0, 8);
  REQUIRE(graph.neighbors[0] == std::vector<int>{1});
  const double w = std::exp(-4.0 / 8.0);
  CHECK_THAT(graph.weights[0][0], WithinRel(w, 1e-14));

  DeformationField field = DeformationField::identity(2);
  field.a[0] = field.a[1] = 0.5 * Mat3::Identity() + Mat3::Constant(0.1);
  field.t[0] = field.t[1] = Vec3(1, -2, 3);
  CHECK(e_rig(field, rest, graph).value == 0.0);

  field = DeformationField::identity(2);
  const Vec3 t(0.3, -0.2, 0.5);
  field.t[0] = t;
  CHECK_THAT(e_rig(field, rest, graph).value, WithinRel(2.0 * w * t.squaredNorm(), 1e-12));
}

TEST_CASE("rigidity_graph validates and truncates to the point count") {
  const std::vector<Vec3> rest = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0)};
  CHECK_THROWS_WITH(rigidity_graph(rest, 0.0), ContainsSubstring("sigma"));
  CHECK_THROWS_WITH(rigidity_graph({Vec3::Zero()}, 1.0), ContainsSubstring("two vertices"));
  const RigidityGraph g = rigidity_graph(rest, 1.0, 8);
  for (int i = 0; i < 3; ++i) {
    CHECK(g.neighbors[i].size() == 2);
    for (int j : g.neighbors[i]) CHECK(j != i);
  }
}

TEST_CASE("DeformationField pack/unpack round trip is exact") {
  Rng rng(71);
  DeformationField f = DeformationField::identity(5);
  for (int i = 0; i < 5; ++i) {
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) f.a[i](r, c) = rng.normal();
    f.t[i] = rng.normal3();
  }
  const DeformationField g = DeformationField::unpack(f.pack());
  for (int i = 0; i < 5; ++i) {
    CHECK(f.a[i] == g.a[i]);
    CHECK(f.t[i] == g.t[i]);
  }
  CHECK_THROWS_WITH(DeformationField::unpack(VecX::Zero(13)),
                    ContainsSubstring("divisible by 12"));
}

TEST_CASE("e_fn is exactly zero on a flat plane") {
  const TriMesh plane = make_plane_grid();
  const TermResult r = e_fn(plane.vertices, plane.faces);
  CHECK(r.value == 0.0);
}

TEST_CASE("e_edge mean form equals 1 on a unit-edge equilateral pair") {
  TriMesh m;
  const double h = std::sqrt(3.0) / 2.0;
  m.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0.5, h, 0), Vec3(1.5, h, 0)};
  m.faces = {{0, 1, 2}, {1, 3, 2}};
  const auto edges = edge_list(m);
  REQUIRE(edges.size() == 5);
  CHECK_THAT(e_edge_mean(m.vertices, edges).value, WithinAbs(1.0, 1e-12));
}

TEST_CASE("e_edge diff form is exactly zero at the reference") {
  const TriMesh m = make_icosphere(10.0, 1);
  const auto edges = edge_list(m);
  std::vector<double> reference;
  for (const auto& [a, b] : edges)
    reference.push_back((m.vertices[a] - m.vertices[b]).norm());
  CHECK(e_edge_diff(m.vertices, edges, reference).value == 0.0);

  // single stretched edge: (ℓ − r)²
  const std::vector<Vec3> two = {Vec3(0, 0, 0), Vec3(3, 0, 0)};
  const std::vector<std::pair<int, int>> one_edge = {{0, 1}};
  CHECK_THAT(e_edge_diff(two, one_edge, {2.0}).value, WithinRel(1.0, 1e-14));
}

TEST_CASE("e_ne is zero at rest and invariant to rigid motion") {
  const TetMesh mesh = make_box_tets(Vec3::Zero(), 5.0);
  const TermResult at_rest = e_ne(mesh, mesh.vertices, 1.0, 10.0);
  CHECK(std::abs(at_rest.value) < 1e-18);
  CHECK(at_rest.grads.at("vertices").cwiseAbs().maxCoeff() < 1e-10);

  Rng rng(5);
  std::vector<Vec3> deformed = mesh.vertices;
  for (auto& v : deformed) v += rng.normal3(0.4);
  const double e = e_ne(mesh, deformed, 1.0, 10.0).value;
  const Mat3 rot = random_rotation(rng);
  const Vec3 shift = rng.normal3(20.0);
  std::vector<Vec3> moved;
  for (const auto& v : deformed) moved.push_back(rot * v + shift);
  const double e_moved = e_ne(mesh, moved, 1.0, 10.0).value;
  CHECK(std::abs(e_moved - e) < 1e-8 * (1.0 + e));
}

TEST_CASE("e_ne reports inverted tets and stays finite and non-negative") {
  const TetMesh mesh = make_box_tets(Vec3::Zero(), 5.0);
  std::vector<Vec3> deformed = mesh.vertices;
  deformed[7] = mesh.vertices[0] - (mesh.vertices[7] - mesh.vertices[0]);
  std::vector<int> inverted;
  const TermResult r = e_ne(mesh, deformed, 1.0, 10.0, &inverted);
  CHECK(!inverted.empty());
  CHECK(std::isfinite(r.value));
  CHECK(r.value >= 0.0);

  Rng rng(17);
  for (int it = 0; it < 50; ++it) {
    std::vector<Vec3> wild = mesh.vertices;
    for (auto& v : wild) v += rng.normal3(4.0);
    CHECK(e_ne(mesh, wild, 1.0, 10.0).value >= 0.0);
  }
}

TEST_CASE("e_att closed forms") {
  const std::vector<Vec3> muscle = {Vec3(1, 2, 3), Vec3(4, 5, 6)};
  std::vector<Vec3> bone = muscle;
  const std::vector<std::pair<int, int>> pairs = {{0, 0}, {1, 1}};
  CHECK(e_att(muscle, bone, pairs, 10.0).value == 0.0);
  bone[1] += Vec3(1, 0, 0);
  CHECK_THAT(e_att(muscle, bone, {{1, 1}}, 10.0).value, WithinRel(10.0, 1e-14));
}

TEST_CASE("e_icol closed form and gradient direction") {
  const std::vector<Vec3> vertices = {Vec3(0, 0, 0), Vec3(1, 1, 1)};
  PenetrationContact c;
  c.v_in = 1;
  c.v_in_position = vertices[1];
  c.v_tar = Vec3(1, 1, 1.7);
  c.n_tar = Vec3(0, 0, 1);
  c.depth = 0.7;
  const double lcol = 0.4;
  CHECK(e_icol(vertices, {}, lcol).value == 0.0);
  const TermResult r = e_icol(vertices, {c}, lcol);
  CHECK_THAT(r.value, WithinRel(lcol * 0.49, 1e-12));
  // gradient on v_in is 2λd·n_tar with signed depth d = n·(v − v_tar) = −0.7
  const Vec3 g = r.grads.at("vertices").segment<3>(3);
  CHECK_THAT(g.dot(c.n_tar), WithinRel(2.0 * lcol * -0.7, 1e-12));
  CHECK(g.cross(c.n_tar).norm() < 1e-14);
}

TEST_CASE("e_icol is positive exactly when detect_penetrations finds contacts") {
  Rng rng(23);
  const TriMesh a = make_icosphere(10.0, 2);
  const auto normals = vertex_normals(a);

  TriMesh overlapping = make_icosphere(10.0, 2, Vec3(12, 0, 0));
  const SpatialIndex near_index(overlapping);
  const auto contacts = detect_penetrations(a.vertices, normals, overlapping, near_index);
  REQUIRE(!contacts.empty());
  CHECK(e_icol(a.vertices, contacts, 0.5).value > 0.0);

  TriMesh far = make_icosphere(10.0, 2, Vec3(25, 0, 0));
  const SpatialIndex far_index(far);
  const auto none = detect_penetrations(a.vertices, normals, far, far_index);
  CHECK(none.empty());
  CHECK(e_icol(a.vertices, none, 0.5).value == 0.0);
}

TEST_CASE("e_ecol with pure repulsion equals the coupling penalty") {
  Rng rng(31);
  const std::vector<Vec3> vertices = random_points(rng, 12, 5.0);
  const auto contacts = random_contacts(rng, vertices, 6);
  const TermResult rep = e_ecol(vertices, contacts, {}, 1.0);
  const TermResult icol = e_icol(vertices, contacts, 1.0);
  CHECK(rep.value == icol.value);
  CHECK((rep.grads.at("vertices") - icol.grads.at("vertices")).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("e_ecol is zero for well-separated meshes") {
  const TriMesh a = make_icosphere(10.0, 1);
  const TriMesh b = make_icosphere(10.0, 1, Vec3(40, 0, 0));
  const SpatialIndex index_b(b);
  const auto contacts =
      detect_penetrations(a.vertices, vertex_normals(a), b, index_b);
  const auto attractions = attraction_pairs(a.vertices, index_b, 2.0);
  CHECK(contacts.empty());
  CHECK(attractions.empty());
  CHECK(e_ecol(a.vertices, contacts, attractions, 0.5).value == 0.0);
}

TEST_CASE("e_ecol on penetrating spheres matches brute-force enumeration") {
  Rng rng(47);
  const TriMesh a = make_icosphere(10.0, 2);
  TriMesh b = make_icosphere(10.0, 2, Vec3::Zero());
  const Mat3 rot = random_rotation(rng);
  for (auto& v : b.vertices) v = rot * v + Vec3(13, 0.3, -0.2);

  const SpatialIndex index_b(b);
  const auto normals = vertex_normals(a);
  const double r_attr = 2.0, lrep = 0.6;
  const auto contacts = detect_penetrations(a.vertices, normals, b, index_b);
  const auto attractions = attraction_pairs(a.vertices, index_b, r_attr);
  REQUIRE(!contacts.empty());
  REQUIRE(!attractions.empty());
  const double value = e_ecol(a.vertices, contacts, attractions, lrep).value;

  // independent enumeration: b is convex, so inside = behind every face plane
  double brute = 0.0;
  const double cos_max = std::cos(90.0 * M_PI / 180.0);
  for (size_t i = 0; i < a.vertices.size(); ++i) {
    const Vec3& p = a.vertices[i];
    bool inside = true;
    double best_d = std::numeric_limits<double>::infinity();
    Vec3 best_cp, best_n;
    for (size_t f = 0; f < b.faces.size(); ++f) {
      const Vec3 &fa = b.vertices[b.faces[f][0]], &fb = b.vertices[b.faces[f][1]],
                 &fc = b.vertices[b.faces[f][2]];
      const Vec3 n = (fb - fa).cross(fc - fa).normalized();
      if (n.dot(p - fa) > 0) inside = false;
      const Vec3 cp = closest_point_on_triangle(p, fa, fb, fc);
      const double d = (cp - p).norm();
      if (d < best_d) {
        best_d = d;
        best_cp = cp;
        best_n = n;
      }
    }
    if (inside && best_d <= 10.0) {
      const double depth = std::abs(best_n.dot(best_cp - p));
      if (depth <= 10.0 && -normals[i].dot(best_n) >= cos_max)
        brute += lrep * depth * depth;
    }
    if (best_d <= r_attr) brute += (1.0 - lrep) * (p - best_cp).squaredNorm();
  }
  CHECK_THAT(value, WithinRel(brute, 1e-12));
}

TEST_CASE("learning penalty closed forms") {
  SECTION("e_jt") {
    const std::vector<Vec3> j = {Vec3(1, 2, 3), Vec3(4, 5, 6)};
    CHECK(e_jt(j, j).value == 0.0);
    std::vector<Vec3> shifted = j;
    shifted[1][2] += 1.0;
    CHECK_THAT(e_jt(shifted, j).value, WithinRel(1.0, 1e-14));
  }
  SECTION("e_preg") {
    MatX theta = MatX::Zero(3, 3);
    const std::vector<char> mask = {1, 1, 0};
    CHECK(e_preg(theta, mask).value == 0.0);
    theta.row(1) = Vec3(1, 0, 0);
    CHECK_THAT(e_preg(theta, mask).value, WithinRel(1.0, 1e-14));
    theta.row(2) = Vec3(5, 5, 5);  // unmasked joint is free
    CHECK_THAT(e_preg(theta, mask).value, WithinRel(1.0, 1e-14));
    CHECK_THROWS_WITH(e_preg(theta, {1, 1}), ContainsSubstring("mask"));
  }
  SECTION("e_jreg") {
    const std::vector<Vec3> verts = {Vec3(1, 0, 0), Vec3(0, 2, 0), Vec3(0, 0, 3)};
    std::vector<Vec3> joints = {verts[0], verts[2]};
    MatX reg = MatX::Zero(2, 3);
    reg(0, 0) = 1.0;
    reg(1, 2) = 1.0;
    CHECK(e_jreg(reg, verts, joints).value == 0.0);
    joints[0][1] += 1.0;
    CHECK_THAT(e_jreg(reg, verts, joints).value, WithinRel(1.0, 1e-14));
  }
  SECTION("e_wreg and e_pbreg") {
    MatX w = MatX::Random(4, 3);
    CHECK(e_wreg(w, w).value == 0.0);
    MatX w2 = w;
    w2(2, 1) += 1.0;
    CHECK_THAT(e_wreg(w2, w).value, WithinRel(1.0, 1e-12));
    CHECK(e_pbreg(MatX::Zero(5, 9)).value == 0.0);
    MatX p = MatX::Zero(5, 9);
    p(3, 4) = 2.0;
    CHECK_THAT(e_pbreg(p).value, WithinRel(4.0, 1e-14));
  }
  SECTION("e_sreg") {
    Rng rng(3);
    const int n = 10;
    MatX basis(n, 4);
    for (int i = 0; i < basis.size(); ++i) basis(i) = rng.normal();
    const Eigen::HouseholderQR<MatX> qr(basis);
    const MatX q = qr.householderQ() * MatX::Identity(n, 4);
    const MatX components = q.leftCols(3).transpose();  // 3×n orthonormal rows
    const VecX off_dir = q.col(3);                      // orthogonal to all rows
    VecX mean(n);
    for (int i = 0; i < n; ++i) mean[i] = rng.normal();

    const VecX in_span = mean + components.transpose() * Vec3(1.0, -2.0, 0.5);
    CHECK(e_sreg(in_span, components, mean).value < 1e-24);
    const VecX off_span = in_span + 3.0 * off_dir;
    CHECK_THAT(e_sreg(off_span, components, mean).value, WithinRel(9.0, 1e-10));
  }
}

TEST_CASE("compose reports totals, per-term values, and merged gradients") {
  const std::vector<Vec3> muscle = {Vec3(0, 0, 0)};
  const std::vector<Vec3> bone = {Vec3(1, 0, 0)};
  const TermResult att = e_att(muscle, bone, {{0, 0}}, 2.0);
  const std::vector<Vec3> joints = {Vec3(0, 0, 1)};
  const TermResult jt = e_jt(joints, {Vec3(0, 0, 3)});

  SECTION("single unit-weight term passes through") {
    const EnergyReport r = compose({{"att", 1.0, att}});
    CHECK(r.total == att.value);
    CHECK(r.term("att") == att.value);
    CHECK((r.gradient("muscle") - att.grads.at("muscle")).cwiseAbs().maxCoeff() == 0.0);
  }
  SECTION("disjoint blocks stay independent") {
    const EnergyReport r = compose({{"att", 0.5, att}, {"jt", 2.0, jt}});
    CHECK_THAT(r.total, WithinRel(0.5 * att.value + 2.0 * jt.value, 1e-14));
    CHECK((r.gradient("muscle") - 0.5 * att.grads.at("muscle")).cwiseAbs().maxCoeff() ==
          0.0);
    CHECK((r.gradient("joints") - 2.0 * jt.grads.at("joints")).cwiseAbs().maxCoeff() == 0.0);
    // report invariant: total = Σ weight·value
    const double recomputed = 0.5 * r.term("att") + 2.0 * r.term("jt");
    CHECK(std::abs(r.total - recomputed) <= 1e-9 * std::abs(r.total));
  }
  SECTION("doubling a weight doubles the contribution exactly") {
    const EnergyReport r1 = compose({{"att", 0.7, att}});
    const EnergyReport r2 = compose({{"att", 1.4, att}});
    CHECK(r2.total == 2.0 * r1.total);
    CHECK((r2.gradient("muscle") - 2.0 * r1.gradient("muscle")).cwiseAbs().maxCoeff() ==
          0.0);
  }
  SECTION("unknown names are rejected") {
    const EnergyReport r = compose({{"att", 1.0, att}});
    CHECK_THROWS_WITH(r.gradient("nope"), ContainsSubstring("unknown gradient block"));
    CHECK_THROWS_WITH(r.term("nope"), ContainsSubstring("unknown term"));
  }
  SECTION("shared blocks accumulate") {
    TriMesh m = make_icosphere(10.0, 1);
    Rng rng(9);
    for (auto& v : m.vertices) v += rng.normal3(0.3);
    const auto edges = edge_list(m);
    const double w_fn = 0.01, w_e = 0.5;
    const EnergyReport r = compose({{"fn", w_fn, e_fn(m.vertices, m.faces)},
                                    {"edge", w_e, e_edge_mean(m.vertices, edges)}});
    auto total = [&](const VecX& x) {
      const auto verts = unflatten(x);
      return w_fn * e_fn(verts, m.faces).value + w_e * e_edge_mean(verts, edges).value;
    };
    const VecX fd = numeric_gradient(total, flatten(m.vertices));
    CHECK(gradient_rel_error(r.gradient("vertices"), fd) < 1e-4);
  }
}

TEST_CASE("every energy gradient matches finite differences") {
  for (const auto& c : fd_cases()) {
    DYNAMIC_SECTION(c.name) {
      Rng rng(1234);
      CHECK(c.run(rng, 3) < 1e-4);
    }
  }
}

TEST_CASE("energy terms are non-negative on random instances") {
  Rng rng(77);
  for (int it = 0; it < 10; ++it) {
    const std::vector<Vec3> pts = random_points(rng, 20, 5.0);
    const RigidityGraph graph = rigidity_graph(pts, 2.0);
    DeformationField f = DeformationField::identity(20);
    for (auto& t : f.t) t = rng.normal3();
    CHECK(e_rig(f, pts, graph).value >= 0.0);

    TriMesh m = make_icosphere(8.0, 1);
    for (auto& v : m.vertices) v += rng.normal3(1.0);
    CHECK(e_fn(m.vertices, m.faces).value >= 0.0);
    CHECK(e_edge_mean(m.vertices, edge_list(m)).value >= 0.0);

    const auto contacts = random_contacts(rng, pts, 5);
    CHECK(e_icol(pts, contacts, rng.uniform(0.0, 2.0)).value >= 0.0);
    CHECK(e_ecol(pts, contacts, {}, rng.uniform(0.0, 1.0)).value >= 0.0);
  }
}

TEST_CASE("config carries per-tissue defaults") {
  const EnergyConfig muscle = EnergyConfig::defaults(Tissue::muscle);
  CHECK(muscle.lambda_d == 1.0);
  CHECK(muscle.lambda_dn == 1.0);
  CHECK(muscle.lambda_a == 0.1);
  CHECK(muscle.lambda_e == 0.5);
  CHECK(muscle.lambda_fn == 0.01);
  CHECK(muscle.lambda_ne == 0.02);
  CHECK(muscle.lambda_rep == 0.5);
  CHECK(muscle.lambda_col == 0.1);
  CHECK(muscle.lambda_att == 10.0);

  const EnergyConfig skin = EnergyConfig::defaults(Tissue::skin);
  CHECK(skin.lambda_d == 2.0);
  CHECK(skin.lambda_dn == 2.0);
  CHECK(skin.lambda_ne == 1.0);
  CHECK(skin.lambda_col == 1.0);
  CHECK(skin.lambda_a == 0.01);

  CHECK(EnergyConfig::defaults(Tissue::bone).lambda_ne == 0.0);
}

TEST_CASE("config JSON round trip, defaults, and validation") {
  EnergyConfig c = EnergyConfig::defaults(Tissue::skin);
  c.sigma = 3.5;
  c.w_jt = 42.0;
  const EnergyConfig back = config_from_json(to_json(c), Tissue::skin);
  CHECK(to_json(back) == to_json(c));

  const EnergyConfig fresh = config_from_json(nlohmann::json::object(), Tissue::bone);
  CHECK(to_json(fresh) == to_json(EnergyConfig::defaults(Tissue::bone)));

  CHECK_THROWS_WITH(config_from_json({{"lambda_zz", 1.0}}, Tissue::skin),
                    ContainsSubstring("lambda_zz"));
  CHECK_THROWS_WITH(config_from_json({{"lambda_d", "high"}}, Tissue::skin),
                    ContainsSubstring("lambda_d"));

  EnergyConfig bad = EnergyConfig::defaults(Tissue::muscle);
  bad.lambda_d = -1.0;
  CHECK_THROWS(bad.validate());
  bad = EnergyConfig::defaults(Tissue::muscle);
  bad.mu = 0.0;
  CHECK_THROWS(bad.validate());
  bad = EnergyConfig::defaults(Tissue::muscle);
  bad.lambda_rep = 1.5;
  CHECK_THROWS(bad.validate());

  const auto dir = std::filesystem::temp_directory_path() / "lamina_test_energy";
  std::filesystem::create_directories(dir);
  const auto path = (dir / "cfg.json").string();
  {
    std::ofstream out(path);
    out << to_json(c).dump(2) << "\n";
  }
  CHECK(to_json(load_config(path, Tissue::skin)) == to_json(c));
  std::filesystem::remove_all(dir);
}

TEST_CASE("tissue names round trip") {
  for (Tissue t : {Tissue::bone, Tissue::muscle, Tissue::skin})
    CHECK(tissue_from_name(tissue_name(t)) == t);
  CHECK_THROWS_WITH(tissue_from_name("cartilage"), ContainsSubstring("cartilage"));
}
