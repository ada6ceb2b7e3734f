#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>

#include "lamina/geometry/trimesh.hpp"

namespace lamina {

namespace detail {

inline Error parse_error(const std::string& path, int line_no, const std::string& what) {
  return Error(path + ":" + std::to_string(line_no) + ": " + what);
}

/// "7", "7/3", "7//2", "7/3/2" → vertex index (1-based in file).
inline int obj_vertex_ref(const std::string& token, const std::string& path, int line_no) {
  const size_t slash = token.find('/');
  const std::string head = slash == std::string::npos ? token : token.substr(0, slash);
  try {
    size_t used = 0;
    const int idx = std::stoi(head, &used);
    if (used != head.size() || idx == 0) throw std::invalid_argument(head);
    return idx;
  } catch (const std::exception&) {
    throw parse_error(path, line_no, "bad face vertex reference '" + token + "'");
  }
}

}  // namespace detail

/// Wavefront OBJ loader: v/vt/f records, 1-based (or negative relative)
/// indices, comments and blank lines skipped. Faces with more than three
/// vertices are fan-triangulated.
inline TriMesh load_obj(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "load_obj: cannot open " + path);
  TriMesh mesh;
  std::string line;
  int line_no = 0;
  bool any_uv = false;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ss(line);
    std::string tag;
    if (!(ss >> tag) || tag[0] == '#') continue;
    if (tag == "v") {
      Vec3 p;
      if (!(ss >> p[0] >> p[1] >> p[2]))
        throw detail::parse_error(path, line_no, "malformed vertex");
      mesh.vertices.push_back(p);
    } else if (tag == "vt") {
      Vec2 t;
      if (!(ss >> t[0] >> t[1]))
        throw detail::parse_error(path, line_no, "malformed texture coordinate");
      mesh.uv.push_back(t);
      any_uv = true;
    } else if (tag == "f") {
      std::vector<int> ring;
      std::string token;
      while (ss >> token) {
        int idx = detail::obj_vertex_ref(token, path, line_no);
        if (idx < 0) idx = static_cast<int>(mesh.vertices.size()) + idx + 1;
        if (idx < 1 || idx > static_cast<int>(mesh.vertices.size()))
          throw detail::parse_error(path, line_no,
                                    "face index " + std::to_string(idx) + " out of range");
        ring.push_back(idx - 1);
      }
      if (ring.size() < 3)
        throw detail::parse_error(path, line_no, "face with fewer than 3 vertices");
      for (size_t k = 2; k < ring.size(); ++k)
        mesh.faces.push_back({ring[0], ring[static_cast<int>(k) - 1], ring[k]});
    }
    // other records (vn, o, g, s, usemtl, mtllib) are ignored
  }
  if (any_uv && mesh.uv.size() != mesh.vertices.size())
    throw Error("load_obj: " + path + ": uv count " + std::to_string(mesh.uv.size()) +
                " does not match vertex count " + std::to_string(mesh.vertices.size()) +
                " (per-vertex uv layout required)");
  mesh.validate();
  return mesh;
}

/// Writes v/vt/f records with enough digits to round-trip float32-representable
/// coordinates exactly.
inline void save_obj(const TriMesh& mesh, const std::string& path) {
  mesh.validate();
  std::ofstream out(path);
  require(out.good(), "save_obj: cannot open " + path);
  char buf[128];
  for (const auto& v : mesh.vertices) {
    std::snprintf(buf, sizeof(buf), "v %.9g %.9g %.9g\n", v[0], v[1], v[2]);
    out << buf;
  }
  for (const auto& t : mesh.uv) {
    std::snprintf(buf, sizeof(buf), "vt %.9g %.9g\n", t[0], t[1]);
    out << buf;
  }
  for (const auto& f : mesh.faces)
    out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
  require(out.good(), "save_obj: write failed for " + path);
}

}  // namespace lamina
