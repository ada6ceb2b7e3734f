#pragma once

#include "lamina/geometry/tetmesh.hpp"

namespace lamina {

/// Hand-crafted (muscle vertex, bone vertex) pairs tying one muscle part to
/// the skeleton. Indices are part-local.
struct AttachmentSet {
  int muscle_part = -1;
  std::vector<std::pair<int, int>> pairs;  // (muscle vertex, bone vertex in stacked bone numbering)
};

/// Three-tissue rest template. All parts share one coordinate frame; the
/// global vertex numbering stacks bone parts, then muscle parts, then skin.
struct HandTemplate {
  std::vector<TriMesh> bones;
  std::vector<std::string> bone_names;
  std::vector<TetMesh> muscles;
  std::vector<std::string> muscle_names;
  TetMesh skin;
  std::vector<AttachmentSet> attachments;

  int bone_vertex_count() const {
    int n = 0;
    for (const auto& b : bones) n += static_cast<int>(b.vertices.size());
    return n;
  }
  int muscle_vertex_count() const {
    int n = 0;
    for (const auto& m : muscles) n += static_cast<int>(m.vertices.size());
    return n;
  }
  int skin_vertex_count() const { return static_cast<int>(skin.vertices.size()); }
  int vertex_count_total() const {
    return bone_vertex_count() + muscle_vertex_count() + skin_vertex_count();
  }

  int bone_offset() const { return 0; }
  int muscle_offset() const { return bone_vertex_count(); }
  int skin_offset() const { return bone_vertex_count() + muscle_vertex_count(); }

  /// Global offset of bone part p in the stacked numbering.
  int bone_part_offset(int p) const {
    int n = 0;
    for (int i = 0; i < p; ++i) n += static_cast<int>(bones[i].vertices.size());
    return n;
  }
  int muscle_part_offset(int p) const {
    int n = muscle_offset();
    for (int i = 0; i < p; ++i) n += static_cast<int>(muscles[i].vertices.size());
    return n;
  }

  std::vector<Vec3> stacked_vertices() const {
    std::vector<Vec3> out;
    out.reserve(vertex_count_total());
    for (const auto& b : bones) out.insert(out.end(), b.vertices.begin(), b.vertices.end());
    for (const auto& m : muscles) out.insert(out.end(), m.vertices.begin(), m.vertices.end());
    out.insert(out.end(), skin.vertices.begin(), skin.vertices.end());
    return out;
  }

  /// Same topology with every part's vertices replaced from a stacked array.
  HandTemplate with_vertices(const std::vector<Vec3>& stacked) const {
    require(static_cast<int>(stacked.size()) == vertex_count_total(),
            "with_vertices: stacked size mismatch");
    HandTemplate out = *this;
    size_t at = 0;
    for (auto& b : out.bones)
      for (auto& v : b.vertices) v = stacked[at++];
    for (auto& m : out.muscles)
      for (auto& v : m.vertices) v = stacked[at++];
    for (auto& v : out.skin.vertices) v = stacked[at++];
    return out;
  }

  void validate() const {
    require(!bones.empty(), "HandTemplate: no bone parts");
    require(bone_names.size() == bones.size() && muscle_names.size() == muscles.size(),
            "HandTemplate: name/part count mismatch");
    for (const auto& b : bones) b.validate();
    require(!skin.vertices.empty(), "HandTemplate: empty skin");
    const int bone_verts = bone_vertex_count();
    for (const auto& a : attachments) {
      require(a.muscle_part >= 0 && a.muscle_part < static_cast<int>(muscles.size()),
              "HandTemplate: attachment names unknown muscle part");
      require(!a.pairs.empty(), "HandTemplate: empty attachment set");
      const int mv = static_cast<int>(muscles[a.muscle_part].vertices.size());
      for (const auto& [m, b] : a.pairs)
        require(m >= 0 && m < mv && b >= 0 && b < bone_verts,
                "HandTemplate: attachment index out of range");
    }
  }
};

/// All bone parts merged into one surface, vertex order matching the stacked
/// numbering (bone block first).
inline TriMesh merged_bones(const HandTemplate& t) {
  TriMesh out;
  int offset = 0;
  for (const auto& b : t.bones) {
    out.vertices.insert(out.vertices.end(), b.vertices.begin(), b.vertices.end());
    for (const auto& f : b.faces)
      out.faces.push_back({f[0] + offset, f[1] + offset, f[2] + offset});
    offset += static_cast<int>(b.vertices.size());
  }
  return out;
}

/// All muscle parts merged into one tet mesh, vertex order matching the
/// stacked numbering within the muscle block.
inline TetMesh merged_muscles(const HandTemplate& t) {
  std::vector<Vec3> vertices;
  std::vector<Tet> tets;
  int offset = 0;
  for (const auto& m : t.muscles) {
    vertices.insert(vertices.end(), m.vertices.begin(), m.vertices.end());
    for (const auto& tet : m.tets)
      tets.push_back({tet[0] + offset, tet[1] + offset, tet[2] + offset, tet[3] + offset});
    offset += static_cast<int>(m.vertices.size());
  }
  return make_tet_mesh(vertices, tets);
}

}  // namespace lamina
