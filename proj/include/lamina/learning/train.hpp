#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "lamina/learning/stages.hpp"

namespace lamina {

struct TrainConfig {
  int max_rounds = 10;
  double relative_tolerance = 1e-4;  // per-round relative decrease of the total objective
  EnergyConfig energy;               // base weights; the schedule overrides w_jt/w_jreg/w_cp
  StageOptions stage;
  bool schedule = true;  // anneal the supervision weights over rounds
};

/// Round-dependent weights: heavy joint supervision in round 1 to settle the
/// kinematics, light afterwards; the coupling weight ramps up linearly so
/// contacts do not dominate before the surfaces roughly fit.
inline EnergyConfig round_config(const TrainConfig& cfg, int round) {
  EnergyConfig c = cfg.energy;
  if (!cfg.schedule) return c;
  c.w_jt = round == 1 ? 100.0 : 0.01;
  c.w_jreg = round == 1 ? 100.0 : 10.0;
  c.w_cp = cfg.max_rounds > 1
               ? 0.1 + 0.9 * static_cast<double>(round - 1) / (cfg.max_rounds - 1)
               : 1.0;
  return c;
}

/// Total training objective at the current state: the three stage objectives
/// summed literally (terms shared between stages are counted once per stage
/// that optimizes them). Value only, with contacts detected fresh.
inline double evaluate_e1(const TrainState& state, const Dataset& data,
                          const EnergyConfig& config,
                          const ShapeSpace* sreg_space = nullptr) {
  const KinematicTree& tree = state.model.tree;
  const HandTemplate& rest = state.model.rest;
  const int nb = rest.bone_vertex_count();
  const detail::TemplateInfo info = detail::template_info(rest);
  const std::vector<Vec3> mean_positions = unflatten(state.model.shape.mean);
  const std::vector<double> muscle_ref = detail::edge_lengths(mean_positions, info.edges[1]);
  const int subjects = data.subject_count();

  double total = config.w_wreg * e_wreg(state.model.weights.w, state.w_ref).value +
                 config.w_pbreg * e_pbreg(state.model.pose_blends.matrix).value;

  for (int i = 0; i < subjects; ++i) {
    const VecX& t_p = subject_template(state, i);
    const std::vector<Vec3> positions = unflatten(t_p);
    if (!info.edges[1].empty())
      total += config.lambda_e * e_edge_diff(positions, info.edges[1], muscle_ref).value;
    if (!info.muscle_faces.empty())
      total += config.lambda_fn * e_fn(positions, info.muscle_faces).value;
    if (config.w_jreg > 0.0) {
      const std::vector<Vec3> bone_positions(positions.begin(), positions.begin() + nb);
      total += config.w_jreg * e_jreg(state.model.regressor.j, bone_positions,
                                      subject_rest_joints(state, i))
                                   .value;
    }
    if (sreg_space && config.w_sreg > 0.0)
      total += config.w_sreg * e_sreg(t_p, sreg_space->components, sreg_space->mean).value;
  }

  for (size_t s = 0; s < data.scans.size(); ++s) {
    const Scan& scan = data.scans[s];
    const Pose& pose = state.poses[s];
    const detail::ScanSupport support = detail::scan_support(rest, info, scan);
    const bool use_jt = !scan.joints.empty() && config.w_jt > 0.0;

    {  // pose + shape stage share the subject-solve mesh
      const std::vector<Vec3> positions = unflatten(subject_template(state, scan.subject));
      const std::vector<Vec3> rest_joints = subject_rest_joints(state, scan.subject);
      const FkResult fk = forward_kinematics(rest_joints, pose, tree);
      const std::vector<Vec3> posed = skin(positions, fk.skinning, state.model.weights);
      const double jt_val = use_jt ? e_jt(fk.joints, scan.joints).value : 0.0;
      double cp_val = 0.0;
      if (config.w_cp > 0.0) {
        const auto contacts = coupling_contacts(rest.with_vertices(posed), config);
        if (!contacts.empty()) cp_val = e_icol(posed, contacts, 1.0).value;
      }
      total += config.w_jt * jt_val +
               e_edge_diff(posed, support.edges, support.ref_lengths).value +
               config.w_preg * e_preg(pose.theta, tree.metacarpal).value + config.w_cp * cp_val;
      total += e_fit(posed, scan.vertices, support.fit_weights).value + config.w_jt * jt_val +
               config.w_cp * cp_val;
    }

    {  // parameter stage evaluates the parametric reconstruction
      const VecX t_p = state.model.shape.mean +
                       shape_blend(state.subject_beta[static_cast<size_t>(scan.subject)],
                                   state.model.shape) +
                       pose_blend(pose, state.model.pose_blends);
      const std::vector<Vec3> positions = unflatten(t_p);
      const std::vector<Vec3> bone_positions(positions.begin(), positions.begin() + nb);
      const std::vector<Vec3> rest_joints = regress_joints(bone_positions, state.model.regressor);
      const FkResult fk = forward_kinematics(rest_joints, pose, tree);
      const std::vector<Vec3> posed = skin(positions, fk.skinning, state.model.weights);
      total += e_fit(posed, scan.vertices, support.fit_weights).value;
      if (!info.edges[1].empty())
        total += config.lambda_e * e_edge_diff(positions, info.edges[1], muscle_ref).value;
      if (!info.muscle_faces.empty())
        total += config.lambda_fn * e_fn(positions, info.muscle_faces).value;
      if (config.w_jreg > 0.0)
        total += config.w_jreg * e_jreg(state.model.regressor.j, bone_positions,
                                        subject_rest_joints(state, scan.subject))
                                     .value;
      if (config.w_cp > 0.0) {
        const auto contacts = coupling_contacts(rest.with_vertices(posed), config);
        if (!contacts.empty()) total += config.w_cp * e_icol(posed, contacts, 1.0).value;
      }
    }
  }
  return total;
}

struct RoundRecord {
  int round = 0;
  double e1_before = 0.0;
  double e1_after = 0.0;
  bool pose_accepted = false;
  bool shape_accepted = false;
  bool parameter_accepted = false;
  std::vector<ScanIssue> issues;
};

struct TrainResult {
  std::vector<RoundRecord> rounds;
  bool converged = false;
};

namespace detail {

/// Alternating block minimization with strict acceptance: each stage's
/// update is kept only if the total objective at the round's weights does
/// not increase, otherwise the full state is rolled back. The accepted
/// objective is therefore non-increasing within every round.
inline TrainResult train_loop(TrainState& state, const Dataset& data, const TrainConfig& cfg,
                              const ShapeSpace* sreg_space) {
  require(cfg.max_rounds >= 1, "train: max_rounds must be >= 1");
  cfg.energy.validate();
  TrainResult out;

  for (int round = 1; round <= cfg.max_rounds; ++round) {
    const EnergyConfig config = round_config(cfg, round);
    RoundRecord rec;
    rec.round = round;
    rec.e1_before = evaluate_e1(state, data, config, sreg_space);
    double current = rec.e1_before;

    const auto block = [&](auto&& stage, bool* accepted) {
      TrainState backup = state;
      const StageResult sr = stage();
      rec.issues.insert(rec.issues.end(), sr.issues.begin(), sr.issues.end());
      const double e = evaluate_e1(state, data, config, sreg_space);
      if (e <= current) {
        current = e;
        *accepted = true;
      } else {
        state = std::move(backup);
      }
    };

    block([&] { return pose_stage(state, data, config, cfg.stage); }, &rec.pose_accepted);
    block([&] { return shape_stage(state, data, config, cfg.stage, sreg_space); },
          &rec.shape_accepted);
    block([&] { return parameter_stage(state, data, config, cfg.stage); },
          &rec.parameter_accepted);

    rec.e1_after = current;
    out.rounds.push_back(rec);
    if (rec.e1_before - current <= cfg.relative_tolerance * (1.0 + std::abs(rec.e1_before))) {
      out.converged = true;
      break;
    }
  }
  return out;
}

}  // namespace detail

/// Full model training from registered scans: alternate the pose, shape and
/// parameter stages under the annealing schedule until the per-round
/// decrease of the total objective falls below the tolerance.
inline TrainResult train(TrainState& state, const Dataset& data, const TrainConfig& cfg = {}) {
  data.validate(state.model);
  return detail::train_loop(state, data, cfg, nullptr);
}

/// Weakly supervised pose-space augmentation: the shape space and joint
/// regressor are frozen, per-scan solves are anchored to the space by the
/// off-space penalty w_sreg, and only the skinning weights and pose blend
/// shapes absorb the new pose variation. Replaces the per-scan and
/// per-subject latents in `state` with slots for the augmentation set.
inline TrainResult pose_augment(TrainState& state, const Dataset& augment,
                                const TrainConfig& cfg = {}) {
  augment.validate(state.model);
  const ShapeSpace frozen = state.model.shape;
  state.poses.assign(augment.scans.size(), Pose::rest(state.model.tree.rotation_joints));
  const int subjects = augment.subject_count();
  state.subject_templates.assign(static_cast<size_t>(subjects), VecX());
  state.subject_joints.assign(static_cast<size_t>(subjects), {});
  state.subject_beta.assign(static_cast<size_t>(subjects), VecX());
  return detail::train_loop(state, augment, cfg, &frozen);
}

}  // namespace lamina
