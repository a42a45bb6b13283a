#pragma once

// JSON experiment configuration. A config may name a scenario, whose
// defaults are loaded first; every other key overrides them. Unknown keys
// are rejected so typos surface as usage errors.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "paretoloc/simulation.hpp"

namespace paretoloc {

/// Malformed or inconsistent configuration (CLI exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SweepSpec {
  SweepParameter parameter = SweepParameter::speed;
  std::vector<double> values;
};

struct CrlbSpec {
  int steps = 200;
  std::size_t ensemble = 10000;
  double eps = 1e-6;
  D11Form d11_form = D11Form::corrected;
  Vec4 prior_sd{0.1, 0.1, 0.05, 0.05};
};

struct FullConfig {
  ExperimentConfig experiment;
  std::optional<SweepSpec> sweep;
  CrlbSpec crlb;
};

/// Default sweep values per parameter when none are configured.
[[nodiscard]] inline std::vector<double> default_sweep_values(SweepParameter p) {
  switch (p) {
    case SweepParameter::speed: return {0.1, 0.25, 0.5, 0.75, 1.0};
    case SweepParameter::a_max: return {0.1, 0.3, 0.5, 0.75, 1.0};
    case SweepParameter::T: return {0.05, 0.1, 0.2, 0.5};
  }
  return {};
}

namespace detail {

using nlohmann::json;

inline void check_keys(const json& j, const std::string& where, const std::set<std::string>& allowed) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!allowed.count(it.key())) throw ConfigError(where + ": unknown key '" + it.key() + "'");
  }
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

inline Vec2 read_vec2(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) {
    throw ConfigError(where + ": expected [x1, x2]");
  }
  return {j[0].get<double>(), j[1].get<double>()};
}

inline TrajectoryKind parse_kind(const std::string& s) {
  if (s == "linear") return TrajectoryKind::linear;
  if (s == "pwl") return TrajectoryKind::pwl;
  if (s == "cv") return TrajectoryKind::cv;
  throw ConfigError("trajectory.kind: expected linear, pwl or cv, got '" + s + "'");
}

inline FusionMode parse_mode(const std::string& s) {
  if (s == "knee") return FusionMode::pareto_knee;
  if (s == "fixed_rho") return FusionMode::fixed_rho;
  if (s == "mse") return FusionMode::mse;
  throw ConfigError("pareto.mode: expected knee, fixed_rho or mse, got '" + s + "'");
}

inline void read_cv(const json& j, CvProcessModel& cv, const std::string& where) {
  check_keys(j, where, {"sigma12_sq", "sigma3_sq", "sigma4_sq"});
  double s12 = cv.sigma1_sq;
  read(j, "sigma12_sq", s12, where);
  cv.sigma1_sq = cv.sigma2_sq = s12;
  read(j, "sigma3_sq", cv.sigma3_sq, where);
  read(j, "sigma4_sq", cv.sigma4_sq, where);
}

}  // namespace detail

/// Splits a comma-separated estimator list and checks every name.
[[nodiscard]] inline std::vector<std::string> parse_estimator_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    if (item == "all") {
      for (const auto& n : all_estimators()) out.push_back(n);
      continue;
    }
    const auto& known = all_estimators();
    if (std::find(known.begin(), known.end(), item) == known.end()) throw ConfigError("unknown estimator '" + item + "'");
    out.push_back(item);
  }
  if (out.empty()) throw ConfigError("estimator list is empty");
  return out;
}

/// Cross-field checks shared by the JSON loader and the CLI overrides.
inline void validate_config(const ExperimentConfig& c) {
  try {
    if (c.runs < 1) throw ConfigError("runs must be >= 1");
    if (c.trace_run < 0) throw ConfigError("trace_run must be >= 0");
    if (c.estimators.empty()) throw ConfigError("no estimators configured");
    for (const auto& e : c.estimators) {
      const auto& known = all_estimators();
      if (std::find(known.begin(), known.end(), e) == known.end()) throw ConfigError("unknown estimator '" + e + "'");
    }
    if (c.trajectory.initial.speed < 0) throw ConfigError("initial speed must be >= 0");
    AnchorSet anchors(c.anchors);
    (void)build_geometry(anchors);
    c.trajectory.validate();
    c.cv.validate();
    c.pareto.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
}

[[nodiscard]] inline FullConfig parse_config(const nlohmann::json& j) {
  using detail::check_keys;
  using detail::read;
  check_keys(j, "config", {"scenario", "anchors", "range_noise", "sensors", "trajectory", "cv", "pareto", "estimators", "runs",
                           "seed", "trace_run", "cdf_threshold", "sweep", "crlb"});
  FullConfig fc;
  std::string scenario = "A";
  read(j, "scenario", scenario, "config");
  try {
    fc.experiment = scenario_config(scenario);
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  }
  auto& c = fc.experiment;

  if (j.contains("anchors")) {
    const auto& a = j.at("anchors");
    if (!a.is_array()) throw ConfigError("anchors: expected a list of [x1, x2]");
    c.anchors.clear();
    for (std::size_t i = 0; i < a.size(); ++i) c.anchors.push_back(detail::read_vec2(a[i], "anchors[" + std::to_string(i) + "]"));
  }
  if (j.contains("range_noise")) {
    const auto& r = j.at("range_noise");
    check_keys(r, "range_noise", {"sigma0", "kappa"});
    double sigma0 = std::sqrt(c.range.sigma0_sq), kappa = c.range.kappa_sigma;
    read(r, "sigma0", sigma0, "range_noise");
    read(r, "kappa", kappa, "range_noise");
    if (!(sigma0 >= 0)) throw ConfigError("range_noise.sigma0 must be >= 0");
    try {
      c.range = RangeNoiseModel::from_sigma0(sigma0, kappa);
    } catch (const DomainError& e) {
      throw ConfigError(e.what());
    }
  }
  if (j.contains("sensors")) {
    const auto& s = j.at("sensors");
    check_keys(s, "sensors", {"sigma_speed", "sigma_heading"});
    double sv = c.sensors.sigma_speed, sp = c.sensors.sigma_heading;
    read(s, "sigma_speed", sv, "sensors");
    read(s, "sigma_heading", sp, "sensors");
    try {
      c.sensors = SensorNoiseModel(sv, sp);
    } catch (const DomainError& e) {
      throw ConfigError(e.what());
    }
  }
  if (j.contains("cv")) detail::read_cv(j.at("cv"), c.cv, "cv");
  if (j.contains("trajectory")) {
    const auto& t = j.at("trajectory");
    check_keys(t, "trajectory", {"kind", "steps", "T", "initial", "a_max", "breakpoint_interval", "velocity_feedback",
                                 "position_feedback", "center"});
    auto& tr = c.trajectory;
    if (t.contains("kind")) {
      std::string kind;
      read(t, "kind", kind, "trajectory");
      tr.kind = detail::parse_kind(kind);
    }
    read(t, "steps", tr.steps, "trajectory");
    read(t, "T", tr.T, "trajectory");
    read(t, "a_max", tr.a_max, "trajectory");
    read(t, "breakpoint_interval", tr.breakpoint_interval, "trajectory");
    read(t, "velocity_feedback", tr.velocity_feedback, "trajectory");
    read(t, "position_feedback", tr.position_feedback, "trajectory");
    if (t.contains("center")) tr.center = detail::read_vec2(t.at("center"), "trajectory.center");
    if (t.contains("initial")) {
      const auto& i = t.at("initial");
      check_keys(i, "trajectory.initial", {"position", "speed", "heading"});
      if (i.contains("position")) tr.initial.position = detail::read_vec2(i.at("position"), "trajectory.initial.position");
      read(i, "speed", tr.initial.speed, "trajectory.initial");
      read(i, "heading", tr.initial.heading, "trajectory.initial");
    }
  }
  // The CV trajectory is always generated by the model the filters assume.
  c.cv.T = c.trajectory.T;
  c.trajectory.cv = c.cv;

  if (j.contains("pareto")) {
    const auto& p = j.at("pareto");
    check_keys(p, "pareto", {"rho_grid_points", "rho_grid", "beta_clip", "mode", "fixed_rho", "variance_floor"});
    if (p.contains("rho_grid_points")) {
      int n = 0;
      read(p, "rho_grid_points", n, "pareto");
      if (n < 1) throw ConfigError("pareto.rho_grid_points must be >= 1");
      c.pareto.rho_grid = ParetoConfig::uniform_grid(n);
    }
    read(p, "rho_grid", c.pareto.rho_grid, "pareto");
    read(p, "beta_clip", c.pareto.beta_clip, "pareto");
    read(p, "fixed_rho", c.pareto.fixed_rho, "pareto");
    read(p, "variance_floor", c.pareto.variance_floor, "pareto");
    if (p.contains("mode")) {
      std::string mode;
      read(p, "mode", mode, "pareto");
      c.pareto.mode = detail::parse_mode(mode);
    }
  }
  if (j.contains("estimators")) {
    std::vector<std::string> names;
    read(j, "estimators", names, "config");
    std::string joined;
    for (const auto& n : names) joined += n + ",";
    c.estimators = parse_estimator_list(joined);
  }
  read(j, "runs", c.runs, "config");
  read(j, "seed", c.seed, "config");
  read(j, "trace_run", c.trace_run, "config");
  read(j, "cdf_threshold", c.cdf_threshold, "config");

  if (j.contains("sweep")) {
    const auto& s = j.at("sweep");
    check_keys(s, "sweep", {"parameter", "values"});
    SweepSpec sp;
    std::string name = "speed";
    read(s, "parameter", name, "sweep");
    try {
      sp.parameter = parse_sweep_parameter(name);
    } catch (const DomainError& e) {
      throw ConfigError(e.what());
    }
    sp.values = default_sweep_values(sp.parameter);
    read(s, "values", sp.values, "sweep");
    if (sp.values.empty()) throw ConfigError("sweep.values must not be empty");
    fc.sweep = sp;
  }
  if (j.contains("crlb")) {
    const auto& s = j.at("crlb");
    check_keys(s, "crlb", {"steps", "ensemble", "eps", "d11_form", "prior_sd"});
    read(s, "steps", fc.crlb.steps, "crlb");
    read(s, "ensemble", fc.crlb.ensemble, "crlb");
    read(s, "eps", fc.crlb.eps, "crlb");
    if (s.contains("d11_form")) {
      std::string f;
      read(s, "d11_form", f, "crlb");
      if (f == "corrected") fc.crlb.d11_form = D11Form::corrected;
      else if (f == "as_printed") fc.crlb.d11_form = D11Form::as_printed;
      else throw ConfigError("crlb.d11_form: expected corrected or as_printed");
    }
    if (s.contains("prior_sd")) {
      std::vector<double> v;
      read(s, "prior_sd", v, "crlb");
      if (v.size() != 4) throw ConfigError("crlb.prior_sd: expected 4 values");
      for (double x : v) {
        if (!(x > 0)) throw ConfigError("crlb.prior_sd values must be positive");
      }
      fc.crlb.prior_sd = Vec4(v[0], v[1], v[2], v[3]);
    }
    if (fc.crlb.steps < 2) throw ConfigError("crlb.steps must be >= 2");
    if (fc.crlb.ensemble < 2) throw ConfigError("crlb.ensemble must be >= 2");
  }
  validate_config(c);
  return fc;
}

[[nodiscard]] inline FullConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_config(j);
}

}  // namespace paretoloc
