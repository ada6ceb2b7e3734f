#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "lamina/geometry/tetmesh.hpp"
#include "lamina/io/obj.hpp"

namespace lamina {

namespace detail {

/// Next non-comment, non-blank line of a TetGen ASCII file, or false at EOF.
inline bool tetgen_line(std::ifstream& in, std::string& line, int& line_no) {
  while (std::getline(in, line)) {
    ++line_no;
    const size_t pos = line.find_first_not_of(" \t\r");
    if (pos == std::string::npos || line[pos] == '#') continue;
    return true;
  }
  return false;
}

}  // namespace detail

/// TetGen ASCII pair: `<base>.node` holds "index x y z" records (plus ignored
/// attributes/markers), `<base>.ele` holds "index v1 v2 v3 v4". Node indices
/// may start at 0 or 1; the header lines carry the counts.
inline TetMesh load_tet(const std::string& node_path, const std::string& ele_path) {
  std::ifstream node_in(node_path);
  require(node_in.good(), "load_tet: cannot open " + node_path);
  std::string line;
  int line_no = 0;
  require(detail::tetgen_line(node_in, line, line_no),
          "load_tet: " + node_path + ": missing header");
  long n_points = 0, dim = 0;
  {
    std::istringstream ss(line);
    if (!(ss >> n_points >> dim) || n_points <= 0 || dim != 3)
      throw detail::parse_error(node_path, line_no, "bad node header '" + line + "'");
  }
  std::vector<Vec3> vertices;
  vertices.reserve(n_points);
  std::unordered_map<long, int> id_map;
  for (long i = 0; i < n_points; ++i) {
    if (!detail::tetgen_line(node_in, line, line_no))
      throw detail::parse_error(node_path, line_no, "unexpected end of node records");
    std::istringstream ss(line);
    long id;
    Vec3 p;
    if (!(ss >> id >> p[0] >> p[1] >> p[2]))
      throw detail::parse_error(node_path, line_no, "malformed node record");
    if (!id_map.emplace(id, static_cast<int>(vertices.size())).second)
      throw detail::parse_error(node_path, line_no,
                                "duplicate node index " + std::to_string(id));
    vertices.push_back(p);
  }

  std::ifstream ele_in(ele_path);
  require(ele_in.good(), "load_tet: cannot open " + ele_path);
  line_no = 0;
  require(detail::tetgen_line(ele_in, line, line_no),
          "load_tet: " + ele_path + ": missing header");
  long n_tets = 0, nodes_per_tet = 0;
  {
    std::istringstream ss(line);
    if (!(ss >> n_tets >> nodes_per_tet) || n_tets <= 0 || nodes_per_tet != 4)
      throw detail::parse_error(ele_path, line_no, "bad element header '" + line + "'");
  }
  std::vector<Tet> tets;
  tets.reserve(n_tets);
  for (long i = 0; i < n_tets; ++i) {
    if (!detail::tetgen_line(ele_in, line, line_no))
      throw detail::parse_error(ele_path, line_no, "unexpected end of element records");
    std::istringstream ss(line);
    long id;
    std::array<long, 4> ref;
    if (!(ss >> id >> ref[0] >> ref[1] >> ref[2] >> ref[3]))
      throw detail::parse_error(ele_path, line_no, "malformed element record");
    Tet t;
    for (int k = 0; k < 4; ++k) {
      const auto it = id_map.find(ref[k]);
      if (it == id_map.end())
        throw detail::parse_error(ele_path, line_no,
                                  "unknown node index " + std::to_string(ref[k]));
      t[k] = it->second;
    }
    tets.push_back(t);
  }
  return make_tet_mesh(vertices, tets);
}

/// Writes the pair with 1-based indices.
inline void save_tet(const TetMesh& mesh, const std::string& node_path,
                     const std::string& ele_path) {
  std::ofstream node_out(node_path);
  require(node_out.good(), "save_tet: cannot open " + node_path);
  node_out << mesh.vertices.size() << " 3 0 0\n";
  char buf[160];
  for (size_t i = 0; i < mesh.vertices.size(); ++i) {
    const Vec3& p = mesh.vertices[i];
    std::snprintf(buf, sizeof(buf), "%zu %.9g %.9g %.9g\n", i + 1, p[0], p[1], p[2]);
    node_out << buf;
  }
  require(node_out.good(), "save_tet: write failed for " + node_path);

  std::ofstream ele_out(ele_path);
  require(ele_out.good(), "save_tet: cannot open " + ele_path);
  ele_out << mesh.tets.size() << " 4 0\n";
  for (size_t i = 0; i < mesh.tets.size(); ++i) {
    const Tet& t = mesh.tets[i];
    ele_out << i + 1 << ' ' << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << ' '
            << t[3] + 1 << '\n';
  }
  require(ele_out.good(), "save_tet: write failed for " + ele_path);
}

}  // namespace lamina
