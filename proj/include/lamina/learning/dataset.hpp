#pragma once

#include <array>

#include "lamina/energy/config.hpp"
#include "lamina/model/model.hpp"

namespace lamina {

/// One registered scan in template topology. Unobserved tissue blocks carry
/// no information and are never read.
struct Scan {
  int subject = 0;
  int pose = 0;                  // pose label within the subject
  std::vector<Vec3> vertices;    // stacked template-topology positions
  std::vector<Vec3> joints;      // total_joints annotations; may be empty
  std::array<bool, 3> tissues{true, true, true};  // bone, muscle, skin observed

  bool observed(Tissue t) const { return tissues[static_cast<size_t>(t)]; }
};

struct Dataset {
  std::vector<Scan> scans;

  int subject_count() const {
    int n = 0;
    for (const auto& s : scans) n = std::max(n, s.subject + 1);
    return n;
  }

  std::vector<int> scans_of(int subject) const {
    std::vector<int> out;
    for (size_t s = 0; s < scans.size(); ++s)
      if (scans[s].subject == subject) out.push_back(static_cast<int>(s));
    return out;
  }

  void validate(const ParametricModel& model) const {
    require(!scans.empty(), "Dataset: no scans");
    const int v = model.rest.vertex_count_total();
    for (size_t s = 0; s < scans.size(); ++s) {
      const Scan& sc = scans[s];
      const std::string tag = "Dataset: scan " + std::to_string(s);
      require(sc.subject >= 0, tag + " has a negative subject id");
      require(static_cast<int>(sc.vertices.size()) == v,
              tag + " does not share the template topology (" +
                  std::to_string(sc.vertices.size()) + " vertices, template has " +
                  std::to_string(v) + ")");
      require(sc.joints.empty() ||
                  static_cast<int>(sc.joints.size()) == model.tree.total_joints,
              tag + " has a joint annotation count mismatch");
      require(sc.tissues[0] || sc.tissues[1] || sc.tissues[2],
              tag + " observes no tissue");
      for (const auto& p : sc.vertices)
        require(p.allFinite(), tag + " has non-finite vertices");
    }
    // every subject id below subject_count() must actually appear
    std::vector<char> seen(subject_count(), 0);
    for (const auto& s : scans) seen[s.subject] = 1;
    for (size_t i = 0; i < seen.size(); ++i)
      require(seen[i], "Dataset: subject ids must be contiguous (missing " +
                           std::to_string(i) + ")");
  }
};

/// Half-open stacked-vertex range [first, last) of one tissue block.
inline std::pair<int, int> tissue_range(const HandTemplate& t, Tissue tissue) {
  switch (tissue) {
    case Tissue::bone: return {0, t.bone_vertex_count()};
    case Tissue::muscle: return {t.muscle_offset(), t.muscle_offset() + t.muscle_vertex_count()};
    case Tissue::skin: return {t.skin_offset(), t.skin_offset() + t.skin_vertex_count()};
  }
  return {0, 0};
}

/// Muscle vertices whose rest position lies within `tol` of a *different*
/// muscle part — the contact band between muscle groups. Mask over the full
/// stacked numbering.
inline std::vector<char> interior_boundary_mask(const HandTemplate& rest, double tol = 1.0) {
  require(tol > 0.0, "interior_boundary_mask: tol must be positive");
  std::vector<char> mask(rest.vertex_count_total(), 0);
  const int parts = static_cast<int>(rest.muscles.size());
  const double tol2 = tol * tol;
  for (int p = 0; p < parts; ++p) {
    const int off = rest.muscle_part_offset(p);
    for (size_t i = 0; i < rest.muscles[p].vertices.size(); ++i) {
      const Vec3& v = rest.muscles[p].vertices[i];
      bool close = false;
      for (int q = 0; q < parts && !close; ++q) {
        if (q == p) continue;
        for (const auto& u : rest.muscles[q].vertices)
          if ((v - u).squaredNorm() <= tol2) {
            close = true;
            break;
          }
      }
      if (close) mask[off + static_cast<int>(i)] = 1;
    }
  }
  return mask;
}

}  // namespace lamina
