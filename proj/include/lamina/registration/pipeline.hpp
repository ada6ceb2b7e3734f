#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "lamina/energy/config.hpp"
#include "lamina/model/model.hpp"
#include "lamina/registration/init_pose.hpp"
#include "lamina/registration/refine.hpp"

namespace lamina {

struct RegistrationJob {
  std::string id;
  std::map<Tissue, TargetScan> targets;
};

struct RegistrationOutcome {
  std::string id;
  Pose pose;
  double pose_rms = 0.0;  // joint alignment residual, mm
  std::map<Tissue, RegistrationResult> results;
  std::string error;  // empty on success; set when this job failed
};

/// Registers every job against the model: pose initialization from joint
/// annotations, then bone, muscle, and skin refinement in that order so each
/// layer can constrain the next (muscles attach to registered bones, skin
/// collides against registered bones and muscles). A failing job records its
/// error and does not stop the batch.
inline std::vector<RegistrationOutcome> register_all(
    const ParametricModel& model, const std::vector<RegistrationJob>& jobs,
    const std::map<Tissue, EnergyConfig>& configs = {}, const RefineOptions& options = {}) {
  model.validate();
  const auto config_for = [&](Tissue t) {
    const auto it = configs.find(t);
    return it != configs.end() ? it->second : EnergyConfig::defaults(t);
  };
  const auto slice = [](const std::vector<Vec3>& stacked, int offset, int count) {
    return std::vector<Vec3>(stacked.begin() + offset, stacked.begin() + offset + count);
  };
  const std::vector<Vec3> rest_joints = model.joints_of(model.shape.mean);

  std::vector<RegistrationOutcome> out;
  out.reserve(jobs.size());
  for (const auto& job : jobs) {
    RegistrationOutcome outcome;
    outcome.id = job.id;
    try {
      const std::vector<Vec3>* joints = nullptr;
      for (const Tissue t : {Tissue::bone, Tissue::muscle, Tissue::skin}) {
        const auto it = job.targets.find(t);
        if (it != job.targets.end() && !it->second.joints.empty()) {
          joints = &it->second.joints;
          break;
        }
      }
      require(joints != nullptr,
              "register_all: job '" + job.id + "' has no joint annotations on any target");
      const InitPoseResult ik = init_pose(model.tree, rest_joints, *joints);
      outcome.pose = ik.pose;
      outcome.pose_rms = ik.rms;
      const PosedHand posed = pose_model(model, ik.pose, VecX());
      const HandTemplate& rest = model.rest;

      const TriMesh rest_bones = merged_bones(rest);
      const int nb = rest.bone_vertex_count();
      if (job.targets.count(Tissue::bone)) {
        RefineInputs bi;
        bi.rest_vertices = rest_bones.vertices;
        bi.initial_vertices = slice(posed.vertices, rest.bone_offset(), nb);
        bi.surface_faces = rest_bones.faces;
        RegistrationResult r =
            refine(bi, job.targets.at(Tissue::bone), config_for(Tissue::bone), options);
        r.pose = ik.pose;
        outcome.results.emplace(Tissue::bone, std::move(r));
      }
      // registered bones when available, posed template bones otherwise
      TriMesh bone_surface = rest_bones;
      bone_surface.vertices = outcome.results.count(Tissue::bone)
                                  ? outcome.results.at(Tissue::bone).vertices
                                  : slice(posed.vertices, rest.bone_offset(), nb);

      const TetMesh rest_muscles = merged_muscles(rest);
      TriMesh muscle_surface = rest_muscles.surface_mesh();
      muscle_surface.vertices = slice(posed.vertices, rest.muscle_offset(), rest.muscle_vertex_count());
      if (job.targets.count(Tissue::muscle)) {
        RefineInputs mi;
        mi.rest_vertices = rest_muscles.vertices;
        mi.initial_vertices = slice(posed.vertices, rest.muscle_offset(), rest.muscle_vertex_count());
        mi.surface_faces = rest_muscles.surface_faces;
        mi.tets = &rest_muscles;
        for (const auto& set : rest.attachments) {
          const int part_offset = rest.muscle_part_offset(set.muscle_part) - rest.muscle_offset();
          for (const auto& [mv, bv] : set.pairs) mi.attachments.emplace_back(part_offset + mv, bv);
        }
        mi.attachment_anchors = bone_surface.vertices;
        mi.obstacles = {bone_surface};
        RegistrationResult r =
            refine(mi, job.targets.at(Tissue::muscle), config_for(Tissue::muscle), options);
        r.pose = ik.pose;
        muscle_surface.vertices = r.vertices;
        outcome.results.emplace(Tissue::muscle, std::move(r));
      }

      if (job.targets.count(Tissue::skin)) {
        RefineInputs si;
        si.rest_vertices = rest.skin.vertices;
        si.initial_vertices = slice(posed.vertices, rest.skin_offset(), rest.skin_vertex_count());
        si.surface_faces = rest.skin.surface_faces;
        si.tets = &rest.skin;
        si.obstacles = {bone_surface, muscle_surface};
        RegistrationResult r =
            refine(si, job.targets.at(Tissue::skin), config_for(Tissue::skin), options);
        r.pose = ik.pose;
        outcome.results.emplace(Tissue::skin, std::move(r));
      }
    } catch (const Error& e) {
      outcome.error = e.what();
    }
    out.push_back(std::move(outcome));
  }
  return out;
}

}  // namespace lamina
