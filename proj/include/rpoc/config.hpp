/* Copyright 2026 The rpoc Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <initializer_list>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "rpoc/optimizer.hpp"

namespace rpoc {

// SplitMix64 finalizer. Replication seeds are derived from one master seed
// by task index, so results never depend on thread scheduling.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t task_seed(std::uint64_t master, std::uint64_t index) {
  return splitmix64(splitmix64(master) ^ (index + 1));
}

enum class ModelName { masuzawa7, fadh_z, custom };

inline ModelName parse_model_name(const std::string& s) {
  if (s == "masuzawa7") return ModelName::masuzawa7;
  if (s == "fadh_z") return ModelName::fadh_z;
  if (s == "custom") return ModelName::custom;
  throw Error(ErrorCode::bad_config, "unknown model name: " + s);
}

inline const char* model_name_str(ModelName m) {
  switch (m) {
    case ModelName::masuzawa7: return "masuzawa7";
    case ModelName::fadh_z: return "fadh_z";
    case ModelName::custom: return "custom";
  }
  return "?";
}

enum class ObjectiveKind {
  minimize_yield,
  maximize_yield,
  maximize_contrast,
  maximize_contrast_swapped,
};

inline ObjectiveKind parse_objective(const std::string& s) {
  if (s == "minimize-yield") return ObjectiveKind::minimize_yield;
  if (s == "maximize-yield") return ObjectiveKind::maximize_yield;
  if (s == "maximize-contrast") return ObjectiveKind::maximize_contrast;
  if (s == "maximize-contrast-swapped")
    return ObjectiveKind::maximize_contrast_swapped;
  throw Error(ErrorCode::bad_config, "unknown objective: " + s);
}

inline const char* objective_str(ObjectiveKind o) {
  switch (o) {
    case ObjectiveKind::minimize_yield: return "minimize-yield";
    case ObjectiveKind::maximize_yield: return "maximize-yield";
    case ObjectiveKind::maximize_contrast: return "maximize-contrast";
    case ObjectiveKind::maximize_contrast_swapped:
      return "maximize-contrast-swapped";
  }
  return "?";
}

inline const char* control_family_str(ControlFamily f) {
  switch (f) {
    case ControlFamily::coherent_x: return "coherent-x";
    case ControlFamily::CPC: return "CPC";
    case ControlFamily::UPC: return "UPC";
    case ControlFamily::UIC: return "UIC";
  }
  return "?";
}

inline const char* noise_model_str(NoiseModel m) {
  switch (m) {
    case NoiseModel::none: return "none";
    case NoiseModel::STD: return "STD";
    case NoiseModel::URF: return "URF";
    case NoiseModel::CRF: return "CRF";
  }
  return "?";
}

inline GradientRule parse_gradient_rule(const std::string& s) {
  if (s == "left-endpoint") return GradientRule::left_endpoint;
  if (s == "midpoint") return GradientRule::midpoint;
  if (s == "exact") return GradientRule::exact;
  throw Error(ErrorCode::bad_config, "unknown gradient rule: " + s);
}

inline const char* gradient_rule_str(GradientRule r) {
  switch (r) {
    case GradientRule::left_endpoint: return "left-endpoint";
    case GradientRule::midpoint: return "midpoint";
    case GradientRule::exact: return "exact";
  }
  return "?";
}

// Probe orientation pair for anisotropy sweeps. Both directions share one
// field magnitude; only the direction differs.
struct OrientationPair {
  FieldSpec omega_z;
  FieldSpec omega_x;
};

namespace detail {

inline const nlohmann::json& need(const nlohmann::json& j, const char* ctx,
                                  const char* key) {
  if (!j.is_object())
    throw Error(ErrorCode::bad_config,
                std::string(ctx) + " must be a JSON object");
  if (!j.contains(key))
    throw Error(ErrorCode::bad_config,
                std::string("missing key '") + key + "' in " + ctx);
  return j.at(key);
}

// Strict schema: every object is checked against its key whitelist, so a
// misspelled option fails loudly instead of silently using a default.
inline void allow_keys(const nlohmann::json& j, const char* ctx,
                       std::initializer_list<const char*> allowed) {
  if (!j.is_object())
    throw Error(ErrorCode::bad_config,
                std::string(ctx) + " must be a JSON object");
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* k : allowed)
      if (item.key() == k) {
        known = true;
        break;
      }
    if (!known)
      throw Error(ErrorCode::bad_config,
                  "unknown key '" + item.key() + "' in " + ctx);
  }
}

inline double as_num(const nlohmann::json& j, const char* ctx,
                     const char* key) {
  const nlohmann::json& v = need(j, ctx, key);
  if (!v.is_number())
    throw Error(ErrorCode::bad_config,
                std::string("'") + key + "' in " + ctx + " must be a number");
  return v.get<double>();
}

inline double as_num_or(const nlohmann::json& j, const char* ctx,
                        const char* key, double fallback) {
  if (!j.is_object() || !j.contains(key)) return fallback;
  return as_num(j, ctx, key);
}

inline std::int64_t as_int(const nlohmann::json& j, const char* ctx,
                           const char* key) {
  const nlohmann::json& v = need(j, ctx, key);
  if (!v.is_number_integer() && !v.is_number_unsigned())
    throw Error(ErrorCode::bad_config,
                std::string("'") + key + "' in " + ctx + " must be an integer");
  return v.get<std::int64_t>();
}

inline std::int64_t as_int_or(const nlohmann::json& j, const char* ctx,
                              const char* key, std::int64_t fallback) {
  if (!j.is_object() || !j.contains(key)) return fallback;
  return as_int(j, ctx, key);
}

inline std::string as_str(const nlohmann::json& j, const char* ctx,
                          const char* key) {
  const nlohmann::json& v = need(j, ctx, key);
  if (!v.is_string())
    throw Error(ErrorCode::bad_config,
                std::string("'") + key + "' in " + ctx + " must be a string");
  return v.get<std::string>();
}

inline std::vector<double> as_num_vec(const nlohmann::json& j, const char* ctx,
                                      const char* key) {
  const nlohmann::json& v = need(j, ctx, key);
  if (!v.is_array())
    throw Error(ErrorCode::bad_config,
                std::string("'") + key + "' in " + ctx + " must be an array");
  std::vector<double> out;
  for (const auto& e : v) {
    if (!e.is_number())
      throw Error(ErrorCode::bad_config, std::string("'") + key + "' in " +
                                             ctx + " must hold numbers only");
    out.push_back(e.get<double>());
  }
  return out;
}

inline void check_rate(double v, const char* what) {
  if (!std::isfinite(v) || v < 0.0)
    throw Error(ErrorCode::bad_config,
                std::string(what) + " must be finite and >= 0");
}

}  // namespace detail

// Parsed experiment description. `raw` keeps the exact JSON document for the
// run manifest; reparsing the snapshot reproduces this struct, which is what
// `resume` relies on.
struct ExperimentConfig {
  nlohmann::json raw;

  ModelName model = ModelName::custom;
  bool j_ex_given = false;
  double j_ex = 0.0;  // rad/us
  std::vector<HyperfineCoupling> hyperfines;

  double k_b = 0.0;  // 1/us
  double k_f = 0.0;  // 1/us
  NoiseSpec noise;
  ControlFamily family = ControlFamily::coherent_x;
  double amplitude = 0.0;  // omega1 in rad/us, or gamma_max in 1/us

  Eigen::Index n_steps = 0;
  double dt = 0.0;  // us
  Horizon horizon;

  ObjectiveKind objective = ObjectiveKind::minimize_yield;
  std::vector<FieldSpec> field_sweep;
  OrientationPair orientations;
  std::vector<double> j_sweep;  // rad/us

  OptimizerConfig optimizer;
  TaylorOptions taylor;
  Rk8Options costate;
  Eigen::Index gradient_stride = 1;
  int replications = 1;
  std::uint64_t seed = 0;
  int threads = 0;  // 0: fall back to env, then hardware
  std::string output_dir;

  bool is_contrast() const {
    return objective == ObjectiveKind::maximize_contrast ||
           objective == ObjectiveKind::maximize_contrast_swapped;
  }
  double t_c() const { return double(n_steps) * dt; }
};

inline ExperimentConfig parse_experiment_config(const nlohmann::json& doc) {
  using nlohmann::json;
  ExperimentConfig c;
  c.raw = doc;

  detail::allow_keys(doc, "config",
                     {"schema_version", "model", "kinetics", "noise", "control",
                      "schedule", "horizon", "objective", "field_sweep",
                      "orientations", "j_ex_sweep_mhz", "optimizer", "numerics",
                      "replications", "seed", "threads", "output_dir"});
  if (detail::as_int(doc, "config", "schema_version") != 1)
    throw Error(ErrorCode::bad_config, "schema_version must be 1");

  const json& jm = detail::need(doc, "config", "model");
  detail::allow_keys(jm, "model", {"name", "j_ex_mhz", "hyperfines"});
  c.model = parse_model_name(detail::as_str(jm, "model", "name"));
  if (jm.contains("j_ex_mhz")) {
    if (c.model == ModelName::masuzawa7)
      throw Error(ErrorCode::bad_config,
                  "masuzawa7 fixes the exchange coupling; drop model.j_ex_mhz");
    c.j_ex_given = true;
    c.j_ex = kTwoPi * detail::as_num(jm, "model", "j_ex_mhz");
    if (!std::isfinite(c.j_ex))
      throw Error(ErrorCode::bad_config, "model.j_ex_mhz must be finite");
  }
  if (jm.contains("hyperfines")) {
    if (c.model != ModelName::custom)
      throw Error(ErrorCode::bad_config,
                  "model.hyperfines is only valid for the custom model");
    const json& arr = jm.at("hyperfines");
    if (!arr.is_array())
      throw Error(ErrorCode::bad_config, "model.hyperfines must be an array");
    for (const auto& e : arr) {
      detail::allow_keys(e, "model.hyperfines[]",
                         {"electron", "multiplicity", "iso_mt", "diag_mhz"});
      HyperfineCoupling hf;
      hf.electron = int(detail::as_int(e, "model.hyperfines[]", "electron"));
      hf.nucleus_multiplicity =
          int(detail::as_int(e, "model.hyperfines[]", "multiplicity"));
      const bool iso = e.contains("iso_mt");
      const bool diag = e.contains("diag_mhz");
      if (iso == diag)
        throw Error(ErrorCode::bad_config,
                    "each hyperfine entry needs exactly one of iso_mt "
                    "(isotropic, mT) or diag_mhz (principal values, MHz)");
      if (iso) {
        const double a = detail::as_num(e, "model.hyperfines[]", "iso_mt");
        if (!std::isfinite(a))
          throw Error(ErrorCode::bad_config, "iso_mt must be finite");
        hf.tensor = kGammaE * a * Eigen::Matrix3d::Identity();
      } else {
        const auto v = detail::as_num_vec(e, "model.hyperfines[]", "diag_mhz");
        if (v.size() != 3)
          throw Error(ErrorCode::bad_config,
                      "diag_mhz must hold exactly three values");
        hf.tensor =
            kTwoPi * Eigen::Vector3d(v[0], v[1], v[2]).asDiagonal().toDenseMatrix();
      }
      c.hyperfines.push_back(hf);
    }
  }

  const json& jk = detail::need(doc, "config", "kinetics");
  detail::allow_keys(jk, "kinetics", {"k_b_per_us", "k_f_per_us"});
  c.k_b = detail::as_num(jk, "kinetics", "k_b_per_us");
  c.k_f = detail::as_num(jk, "kinetics", "k_f_per_us");
  detail::check_rate(c.k_b, "kinetics.k_b_per_us");
  detail::check_rate(c.k_f, "kinetics.k_f_per_us");

  if (doc.contains("noise")) {
    const json& jn = doc.at("noise");
    detail::allow_keys(jn, "noise", {"model", "rate_per_us"});
    c.noise.model = parse_noise_model(detail::as_str(jn, "noise", "model"));
    c.noise.rate = detail::as_num_or(jn, "noise", "rate_per_us", 0.0);
    detail::check_rate(c.noise.rate, "noise.rate_per_us");
    if (c.noise.model == NoiseModel::none && c.noise.rate != 0.0)
      throw Error(ErrorCode::bad_config,
                  "noise.rate_per_us must be 0 when noise.model is none");
  }

  const json& jc = detail::need(doc, "config", "control");
  detail::allow_keys(jc, "control",
                     {"family", "omega1_rad_us", "gamma_max_per_us"});
  c.family = parse_control_family(detail::as_str(jc, "control", "family"));
  const bool coherent = c.family == ControlFamily::coherent_x;
  const char* wanted = coherent ? "omega1_rad_us" : "gamma_max_per_us";
  const char* rejected = coherent ? "gamma_max_per_us" : "omega1_rad_us";
  if (jc.contains(rejected))
    throw Error(ErrorCode::bad_config,
                std::string("control.") + rejected +
                    " does not apply to this control family");
  // No default amplitude: the drive strength is part of the experiment.
  c.amplitude = detail::as_num(jc, "control", wanted);
  detail::check_rate(c.amplitude, (std::string("control.") + wanted).c_str());

  const json& js = detail::need(doc, "config", "schedule");
  detail::allow_keys(js, "schedule", {"n_steps", "dt_us"});
  c.n_steps = Eigen::Index(detail::as_int(js, "schedule", "n_steps"));
  c.dt = detail::as_num(js, "schedule", "dt_us");
  if (c.n_steps < 1)
    throw Error(ErrorCode::bad_config, "schedule.n_steps must be >= 1");
  if (!(c.dt > 0.0) || !std::isfinite(c.dt))
    throw Error(ErrorCode::bad_config,
                "schedule.dt_us must be finite and > 0");

  const json& jh = detail::need(doc, "config", "horizon");
  detail::allow_keys(jh, "horizon", {"tail", "t1_us", "coarse_dt_us"});
  const std::string tail = detail::as_str(jh, "horizon", "tail");
  if (tail == "finite") {
    c.horizon.mode = TailMode::finite;
    c.horizon.t1 = detail::as_num(jh, "horizon", "t1_us");
    const double slack = 1e-9 * std::max(1.0, c.t_c());
    if (!std::isfinite(c.horizon.t1) || c.horizon.t1 < c.t_c() - slack)
      throw Error(ErrorCode::bad_config,
                  "horizon.t1_us must reach at least the control window end");
  } else if (tail == "infinite") {
    if (jh.contains("t1_us"))
      throw Error(ErrorCode::bad_config,
                  "horizon.t1_us does not apply to the infinite tail");
    c.horizon.mode = TailMode::infinite;
    c.horizon.t1 = c.t_c();
  } else {
    throw Error(ErrorCode::bad_config,
                "horizon.tail must be 'finite' or 'infinite'");
  }
  c.horizon.coarse_dt = detail::as_num_or(jh, "horizon", "coarse_dt_us", 0.1);
  if (!(c.horizon.coarse_dt > 0.0) || !std::isfinite(c.horizon.coarse_dt))
    throw Error(ErrorCode::bad_config,
                "horizon.coarse_dt_us must be finite and > 0");

  c.objective = parse_objective(detail::as_str(doc, "config", "objective"));

  if (c.is_contrast()) {
    if (doc.contains("field_sweep"))
      throw Error(ErrorCode::bad_config,
                  "contrast objectives take orientations + j_ex_sweep_mhz, "
                  "not field_sweep");
    if (c.model != ModelName::fadh_z)
      throw Error(ErrorCode::bad_config,
                  "contrast objectives require the fadh_z model");
    if (coherent)
      throw Error(ErrorCode::bad_config,
                  "contrast objectives require an incoherent control family");
    if (c.j_ex_given)
      throw Error(ErrorCode::bad_config,
                  "the exchange coupling comes from j_ex_sweep_mhz here; "
                  "drop model.j_ex_mhz");
    const json& jo = detail::need(doc, "config", "orientations");
    detail::allow_keys(jo, "orientations", {"b0_mt", "omega_z", "omega_x"});
    const double b0 = detail::as_num(jo, "orientations", "b0_mt");
    auto direction = [&](const char* key) {
      const json& ja = detail::need(jo, "orientations", key);
      detail::allow_keys(ja, key, {"theta", "phi"});
      FieldSpec f;
      f.b0 = b0;
      f.theta = detail::as_num_or(ja, key, "theta", 0.0);
      f.phi = detail::as_num_or(ja, key, "phi", 0.0);
      validate_field(f);
      return f;
    };
    c.orientations.omega_z = direction("omega_z");
    c.orientations.omega_x = direction("omega_x");
    const auto sweep = detail::as_num_vec(doc, "config", "j_ex_sweep_mhz");
    if (sweep.empty())
      throw Error(ErrorCode::bad_config, "j_ex_sweep_mhz must not be empty");
    for (double j : sweep) {
      if (!std::isfinite(j))
        throw Error(ErrorCode::bad_config, "j_ex_sweep_mhz must be finite");
      c.j_sweep.push_back(kTwoPi * j);
    }
  } else {
    if (doc.contains("orientations") || doc.contains("j_ex_sweep_mhz"))
      throw Error(ErrorCode::bad_config,
                  "orientations / j_ex_sweep_mhz only apply to contrast "
                  "objectives");
    const json& arr = detail::need(doc, "config", "field_sweep");
    if (!arr.is_array() || arr.empty())
      throw Error(ErrorCode::bad_config,
                  "field_sweep must be a non-empty array");
    for (const auto& e : arr) {
      detail::allow_keys(e, "field_sweep[]", {"b0_mt", "theta", "phi"});
      FieldSpec f;
      f.b0 = detail::as_num(e, "field_sweep[]", "b0_mt");
      f.theta = detail::as_num_or(e, "field_sweep[]", "theta", 0.0);
      f.phi = detail::as_num_or(e, "field_sweep[]", "phi", 0.0);
      validate_field(f);
      c.field_sweep.push_back(f);
    }
  }

  if (doc.contains("optimizer")) {
    const json& jo = doc.at("optimizer");
    detail::allow_keys(jo, "optimizer",
                       {"max_iterations", "yield_rel_tol", "grad_norm_tol",
                        "step_len_tol", "grad_change_tol",
                        "max_initial_control_change", "reset_period",
                        "init_std", "gradient_rule"});
    OptimizerConfig& o = c.optimizer;
    o.max_iterations =
        int(detail::as_int_or(jo, "optimizer", "max_iterations",
                              o.max_iterations));
    o.yield_rel_tol =
        detail::as_num_or(jo, "optimizer", "yield_rel_tol", o.yield_rel_tol);
    o.grad_norm_tol =
        detail::as_num_or(jo, "optimizer", "grad_norm_tol", o.grad_norm_tol);
    o.step_len_tol =
        detail::as_num_or(jo, "optimizer", "step_len_tol", o.step_len_tol);
    o.grad_change_tol = detail::as_num_or(jo, "optimizer", "grad_change_tol",
                                          o.grad_change_tol);
    o.max_initial_control_change =
        detail::as_num_or(jo, "optimizer", "max_initial_control_change",
                          o.max_initial_control_change);
    o.reset_period =
        int(detail::as_int_or(jo, "optimizer", "reset_period", o.reset_period));
    o.init_std = detail::as_num_or(jo, "optimizer", "init_std", o.init_std);
    if (jo.contains("gradient_rule"))
      o.rule = parse_gradient_rule(
          detail::as_str(jo, "optimizer", "gradient_rule"));
  }
  c.optimizer.validate();

  if (doc.contains("numerics")) {
    const json& jn = doc.at("numerics");
    detail::allow_keys(jn, "numerics",
                       {"taylor_tol", "costate_rtol", "costate_atol",
                        "gradient_stride"});
    c.taylor.tol = detail::as_num_or(jn, "numerics", "taylor_tol", c.taylor.tol);
    c.costate.rtol =
        detail::as_num_or(jn, "numerics", "costate_rtol", c.costate.rtol);
    c.costate.atol =
        detail::as_num_or(jn, "numerics", "costate_atol", c.costate.atol);
    for (double v : {c.taylor.tol, c.costate.rtol, c.costate.atol})
      if (!(v > 0.0) || !std::isfinite(v))
        throw Error(ErrorCode::bad_config,
                    "numerics tolerances must be finite and > 0");
    c.gradient_stride =
        Eigen::Index(detail::as_int_or(jn, "numerics", "gradient_stride", 1));
    if (c.gradient_stride < 1)
      throw Error(ErrorCode::bad_config,
                  "numerics.gradient_stride must be >= 1");
  }

  const std::int64_t reps =
      detail::as_int_or(doc, "config", "replications", 1);
  if (reps < 1)
    throw Error(ErrorCode::bad_config, "replications must be >= 1");
  c.replications = int(reps);

  const std::int64_t seed = detail::as_int_or(doc, "config", "seed", 0);
  if (seed < 0)
    throw Error(ErrorCode::bad_config, "seed must be >= 0");
  c.seed = std::uint64_t(seed);

  const std::int64_t threads = detail::as_int_or(doc, "config", "threads", 0);
  if (threads < 0)
    throw Error(ErrorCode::bad_config, "threads must be >= 0");
  c.threads = int(threads);

  if (doc.contains("output_dir"))
    c.output_dir = detail::as_str(doc, "config", "output_dir");

  return c;
}

inline nlohmann::json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in)
    throw Error(ErrorCode::io_failure, "cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::bad_config,
                "JSON parse failure in " + path + ": " + e.what());
  }
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  return parse_experiment_config(load_json_file(path));
}

// Spin model behind a config, with the exchange coupling spelled out because
// anisotropy sweeps override it per point.
inline SpinSystem build_spin_system(const ExperimentConfig& c, double j_ex) {
  switch (c.model) {
    case ModelName::masuzawa7:
      return masuzawa7();
    case ModelName::fadh_z:
      return fadh_z(j_ex);
    case ModelName::custom:
      return make_spin_system(c.hyperfines, j_ex);
  }
  throw Error(ErrorCode::bad_config, "unreachable model name");
}

inline SpinSystem build_spin_system(const ExperimentConfig& c) {
  return build_spin_system(c, c.j_ex);
}

// Thread-count resolution: explicit CLI flag, then the config value, then
// the RPOC_THREADS environment variable, then the hardware count.
inline int effective_threads(int cli_threads, int config_threads) {
  if (cli_threads > 0) return cli_threads;
  if (config_threads > 0) return config_threads;
  if (const char* env = std::getenv("RPOC_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return int(v);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? int(hw) : 1;
}

}  // namespace rpoc
