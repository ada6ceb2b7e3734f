#pragma once

#include <fstream>
#include <json.hpp>

#include "lamina/common.hpp"

namespace lamina {

enum class Tissue { bone, muscle, skin };

inline const char* tissue_name(Tissue t) {
  switch (t) {
    case Tissue::bone: return "bone";
    case Tissue::muscle: return "muscle";
    case Tissue::skin: return "skin";
  }
  return "?";
}

inline Tissue tissue_from_name(const std::string& s) {
  if (s == "bone") return Tissue::bone;
  if (s == "muscle") return Tissue::muscle;
  if (s == "skin") return Tissue::skin;
  throw Error("unknown tissue '" + s + "'");
}

/// Flat weight table for every energy term, JSON-serializable. Zero sigma
/// means "derive from the mesh" (2× mean edge length).
struct EnergyConfig {
  // registration
  double lambda_d = 1.0;
  double lambda_dn = 1.0;
  double lambda_a = 0.1;
  double lambda_e = 0.5;
  double lambda_fn = 0.01;
  double lambda_ne = 0.02;
  double lambda_rep = 0.5;
  double lambda_col = 0.1;
  double lambda_att = 10.0;
  // learning
  double w_jt = 100.0;
  double w_jreg = 100.0;
  double w_cp = 0.1;
  double w_wreg = 1.0;
  double w_pbreg = 1.0;
  double w_sreg = 1.0;  // augmentation only: off-space penalty on T_p
  double w_preg = 1.0;  // metacarpal rotation penalty
  // kernels and material
  double sigma = 0.0;        // rigidity kernel width, mm; 0 = auto
  double mu = 1.0;           // Neo-Hookean shear modulus
  double lambda_mat = 10.0;  // Neo-Hookean volume penalty
  // contact search
  double r_attr = 2.0;       // attraction radius, mm
  double max_angle = 90.0;   // contact normal filter, degrees
  double max_depth = 10.0;   // contact depth filter, mm

  void validate() const {
    for (double v : {lambda_d, lambda_dn, lambda_a, lambda_e, lambda_fn, lambda_ne,
                     lambda_rep, lambda_col, lambda_att, w_jt, w_jreg, w_cp, w_wreg,
                     w_pbreg, w_sreg, w_preg})
      require(v >= 0.0 && std::isfinite(v), "EnergyConfig: weights must be finite and >= 0");
    require(sigma >= 0.0, "EnergyConfig: sigma must be >= 0");
    require(mu > 0.0, "EnergyConfig: mu must be > 0");
    require(lambda_rep <= 1.0, "EnergyConfig: lambda_rep is a convex mixing factor");
  }

  /// Per-tissue defaults; unlisted skin/bone weights keep the muscle values.
  static EnergyConfig defaults(Tissue tissue) {
    EnergyConfig c;  // muscle values above
    switch (tissue) {
      case Tissue::muscle:
        break;
      case Tissue::bone:
        c.lambda_ne = 0.0;  // rigid tissue: no elasticity
        break;
      case Tissue::skin:
        c.lambda_d = 2.0;
        c.lambda_dn = 2.0;
        c.lambda_ne = 1.0;
        c.lambda_col = 1.0;
        c.lambda_a = 0.01;
        break;
    }
    return c;
  }
};

namespace detail {

inline const std::vector<std::pair<const char*, double EnergyConfig::*>>& config_fields() {
  static const std::vector<std::pair<const char*, double EnergyConfig::*>> fields = {
      {"lambda_d", &EnergyConfig::lambda_d},   {"lambda_dn", &EnergyConfig::lambda_dn},
      {"lambda_a", &EnergyConfig::lambda_a},   {"lambda_e", &EnergyConfig::lambda_e},
      {"lambda_fn", &EnergyConfig::lambda_fn}, {"lambda_ne", &EnergyConfig::lambda_ne},
      {"lambda_rep", &EnergyConfig::lambda_rep}, {"lambda_col", &EnergyConfig::lambda_col},
      {"lambda_att", &EnergyConfig::lambda_att}, {"w_jt", &EnergyConfig::w_jt},
      {"w_jreg", &EnergyConfig::w_jreg},       {"w_cp", &EnergyConfig::w_cp},
      {"w_wreg", &EnergyConfig::w_wreg},       {"w_pbreg", &EnergyConfig::w_pbreg},
      {"w_sreg", &EnergyConfig::w_sreg},       {"w_preg", &EnergyConfig::w_preg},
      {"sigma", &EnergyConfig::sigma},         {"mu", &EnergyConfig::mu},
      {"lambda_mat", &EnergyConfig::lambda_mat}, {"r_attr", &EnergyConfig::r_attr},
      {"max_angle", &EnergyConfig::max_angle}, {"max_depth", &EnergyConfig::max_depth}};
  return fields;
}

}  // namespace detail

inline nlohmann::json to_json(const EnergyConfig& c) {
  nlohmann::json j;
  for (const auto& [name, member] : detail::config_fields()) j[name] = c.*member;
  return j;
}

/// Missing keys keep the per-tissue defaults; unknown keys are rejected.
inline EnergyConfig config_from_json(const nlohmann::json& j, Tissue tissue) {
  EnergyConfig c = EnergyConfig::defaults(tissue);
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (const auto& [name, member] : detail::config_fields())
      if (key == name) {
        require(value.is_number(), "EnergyConfig: key '" + key + "' must be a number");
        c.*member = value.get<double>();
        known = true;
        break;
      }
    require(known, "EnergyConfig: unknown key '" + key + "'");
  }
  c.validate();
  return c;
}

inline EnergyConfig load_config(const std::string& path, Tissue tissue) {
  std::ifstream in(path);
  require(in.good(), "load_config: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error("load_config: " + path + ": " + e.what());
  }
  return config_from_json(j, tissue);
}

}  // namespace lamina
