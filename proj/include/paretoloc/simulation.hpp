#pragma once

// Trajectory generation, Monte Carlo runner, metrics and sweeps.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "paretoloc/core.hpp"
#include "paretoloc/crlb.hpp"
#include "paretoloc/dead_reckoning.hpp"
#include "paretoloc/kalman.hpp"
#include "paretoloc/pareto_fusion.hpp"
#include "paretoloc/ranging.hpp"

namespace paretoloc {

// ------------------------------------------------------------ trajectories

enum class TrajectoryKind { linear, pwl, cv };

struct TrajectorySpec {
  TrajectoryKind kind = TrajectoryKind::linear;
  int steps = 1000;
  double T = 0.1;
  TruthState initial{{2.0, 10.0}, 0.1, 0.0, 0};
  // pwl
  double a_max = 0.5;
  double breakpoint_interval = 2.0;  // seconds
  double velocity_feedback = 0.5;    // 1/s, pulls the velocity towards 0
  double position_feedback = 0.05;   // 1/s^2, pulls the position towards `center`
  Vec2 center{10.0, 10.0};
  // cv
  CvProcessModel cv;

  void validate() const {
    if (steps < 2) throw DomainError("trajectory needs at least 2 steps");
    if (!(T > 0)) throw DomainError("T must be positive");
    if (kind == TrajectoryKind::pwl && !(a_max >= 0)) throw DomainError("a_max must be >= 0");
    if (kind == TrajectoryKind::pwl && !(breakpoint_interval > 0)) throw DomainError("breakpoint interval must be positive");
    if (kind == TrajectoryKind::cv) cv.validate();
  }
};

namespace detail {

inline Vec2 cap_norm(const Vec2& v, double cap) {
  const double n = v.norm();
  return n > cap && n > 0.0 ? Vec2(v * (cap / n)) : v;
}

/// Nearest representative of `angle` to `reference` modulo 2 pi.
inline double unwrap_near(double angle, double reference) {
  return angle + 2.0 * kPi * std::round((reference - angle) / (2.0 * kPi));
}

}  // namespace detail

/// Truth trajectory. All kinds use x_{k+1} = x_k + T V_k [cos phi_k, sin phi_k].
[[nodiscard]] inline std::vector<TruthState> gen_trajectory(const TrajectorySpec& spec, std::mt19937_64& gen) {
  spec.validate();
  std::vector<TruthState> out;
  out.reserve(static_cast<std::size_t>(spec.steps));
  TruthState s = spec.initial;
  s.k = 0;
  out.push_back(s);
  switch (spec.kind) {
    case TrajectoryKind::linear: {
      for (int k = 1; k < spec.steps; ++k) {
        s.position += spec.T * s.speed * Vec2(std::cos(s.heading), std::sin(s.heading));
        s.k = k;
        out.push_back(s);
      }
      break;
    }
    case TrajectoryKind::cv: {
      const Vec4 sd = spec.cv.variances().cwiseSqrt();
      Vec4 p = s.as_vector();
      for (int k = 1; k < spec.steps; ++k) {
        p = cv_transition(p, spec.T);
        for (int j = 0; j < 4; ++j) p(j) += gaussian(gen, sd(j));
        out.push_back({p.head<2>(), p(2), p(3), k});
      }
      break;
    }
    case TrajectoryKind::pwl: {
      // Acceleration breakpoints every `breakpoint_interval` seconds, linear in
      // between. Each breakpoint is a uniform draw in [-a_max, a_max]^2 plus
      // velocity / position feedback, capped at |a| <= a_max. Breakpoint j+1
      // is fixed from the state at breakpoint j.
      std::uniform_real_distribution<double> u(-spec.a_max, spec.a_max);
      const int per_segment = std::max(1, static_cast<int>(std::lround(spec.breakpoint_interval / spec.T)));
      Vec2 x = s.position;
      Vec2 v = s.speed * Vec2(std::cos(s.heading), std::sin(s.heading));
      auto draw = [&](const Vec2& pos, const Vec2& vel) {
        const Vec2 raw(u(gen), u(gen));
        return detail::cap_norm(raw - spec.velocity_feedback * vel - spec.position_feedback * (pos - spec.center), spec.a_max);
      };
      Vec2 a_from = draw(x, v);
      Vec2 a_to = draw(x, v);
      double heading = s.heading;
      for (int k = 1; k < spec.steps; ++k) {
        const int phase = (k - 1) % per_segment;
        if (phase == 0 && k > 1) {
          a_from = a_to;
          a_to = draw(x, v);
        }
        const double w = static_cast<double>(phase) / per_segment;
        const Vec2 a = (1.0 - w) * a_from + w * a_to;
        x += spec.T * v;
        v += spec.T * a;
        const double speed = v.norm();
        if (speed > 0.0) heading = detail::unwrap_near(std::atan2(v.y(), v.x()), heading);
        out.push_back({x, speed, heading, k});
      }
      break;
    }
  }
  return out;
}

[[nodiscard]] inline std::vector<TruthState> gen_trajectory(const TrajectorySpec& spec, std::uint64_t seed, std::uint64_t run = 0) {
  auto gen = RngStreams::make(seed, run, RngStreams::kProcess);
  return gen_trajectory(spec, gen);
}

// ------------------------------------------------------------ estimators

inline const std::vector<std::string>& all_estimators() {
  static const std::vector<std::string> names{"pareto", "mse", "wls", "dr", "ekf", "ukf", "lckf", "ekfcv"};
  return names;
}

struct ExperimentConfig {
  std::string scenario = "A";
  std::vector<Vec2> anchors{{0.0, 0.0}, {20.0, 0.0}, {0.0, 20.0}, {20.0, 20.0}};
  RangeNoiseModel range{0.0625, 0.25};
  SensorNoiseModel sensors{0.05, kPi / 8.0};
  TrajectorySpec trajectory;
  CvProcessModel cv;  // model used by EKF-CV and the PCRLB
  ParetoConfig pareto;
  std::vector<std::string> estimators{"pareto", "mse", "wls", "dr", "ekf", "ukf", "lckf"};
  int runs = 10;
  std::uint64_t seed = 7;
  int trace_run = 0;
  double cdf_threshold = 0.07;
};

/// Runs one estimator over a sequence of frames and returns the position
/// estimates. Throws on a step failure.
class EstimatorRunner {
 public:
  EstimatorRunner(const ExperimentConfig& cfg, const AnchorSet& anchors, const RangingGeometry& g)
      : cfg_(cfg), anchors_(anchors), g_(g) {
    fm_.range = cfg.range;
    fm_.sensors = cfg.sensors;
    fm_.T = cfg.trajectory.T;
    km_.range = cfg.range;
    km_.sensors = cfg.sensors;
    km_.T = cfg.trajectory.T;
  }

  [[nodiscard]] std::vector<Vec2> run(const std::string& name, const std::vector<MeasurementFrame>& frames) const {
    std::vector<Vec2> est;
    est.reserve(frames.size());
    if (name == "pareto" || name == "mse") {
      ParetoConfig pc = cfg_.pareto;
      if (name == "mse") pc.mode = FusionMode::mse;
      auto s = fusion_init(frames[0], anchors_, g_, fm_, pc);
      est.push_back(s.estimate);
      for (std::size_t k = 1; k < frames.size(); ++k) {
        s = fusion_step(s, frames[k], anchors_, g_, fm_, pc);
        est.push_back(s.estimate);
      }
    } else if (name == "wls") {
      auto s = fusion_init(frames[0], anchors_, g_, fm_, cfg_.pareto);
      Vec2 p = s.estimate;
      est.push_back(p);
      for (std::size_t k = 1; k < frames.size(); ++k) {
        p = detail::solve_ranging_at(g_, anchors_, frames[k].ranges, p, cfg_.range, cfg_.pareto.variance_floor).estimate;
        est.push_back(p);
      }
    } else if (name == "dr") {
      auto s = fusion_init(frames[0], anchors_, g_, fm_, cfg_.pareto);
      Vec2 p = s.estimate;
      est.push_back(p);
      for (std::size_t k = 1; k < frames.size(); ++k) {
        p = dr_predict(p, frames[k - 1], fm_.T);
        est.push_back(p);
      }
    } else if (name == "ekf" || name == "ukf" || name == "lckf") {
      auto s = kf2_init(frames[0], anchors_, g_, km_);
      est.push_back(s.mean.head<2>());
      for (std::size_t k = 1; k < frames.size(); ++k) {
        if (name == "ekf") s = ekf_step(s, frames[k], anchors_, km_);
        else if (name == "ukf") s = ukf_step(s, frames[k], anchors_, km_);
        else s = lckf_step(s, frames[k], anchors_, g_, km_);
        check_finite(s.mean);
        est.push_back(s.mean.head<2>());
      }
    } else if (name == "ekfcv") {
      CvProcessModel model = cfg_.cv;
      model.T = fm_.T;
      auto s = ekf_cv_init(frames[0], anchors_, g_, km_);
      est.push_back(s.mean.head<2>());
      for (std::size_t k = 1; k < frames.size(); ++k) {
        s = ekf_cv_step(s, frames[k], model, anchors_, km_);
        check_finite(s.mean);
        est.push_back(s.mean.head<2>());
      }
    } else {
      throw DomainError("unknown estimator '" + name + "'");
    }
    for (const auto& p : est) check_finite(p);
    return est;
  }

 private:
  static void check_finite(const Eigen::VectorXd& v) {
    if (!v.allFinite()) throw NumericalError("estimator produced a non-finite estimate");
  }

  const ExperimentConfig& cfg_;
  const AnchorSet& anchors_;
  const RangingGeometry& g_;
  FusionModels fm_;
  KfModels km_;
};

// ------------------------------------------------------------ metrics

struct EstimatorSummary {
  std::string name;
  double rmse = 0;          // mean over runs of the per-run RMSE
  double rmse_pooled = 0;   // sqrt of the mean squared error over all steps and runs
  double p95 = 0;
  double cdf_at_threshold = 0;
  int runs = 0;
  int excluded = 0;
  std::vector<double> step_sum_sq;  // sum over runs of err_k^2
  std::vector<double> step_sum_4;   // sum over runs of err_k^4
  std::vector<double> pooled;       // every error, all runs
  std::vector<std::string> failures;

  [[nodiscard]] double step_rmse(std::size_t k) const { return runs > 0 ? std::sqrt(step_sum_sq[k] / runs) : NAN; }

  /// Standard error of the per-step RMSE by the delta method.
  [[nodiscard]] double step_rmse_se(std::size_t k) const {
    if (runs < 2) return NAN;
    const double n = runs;
    const double m2 = step_sum_sq[k] / n;
    const double var2 = std::max(0.0, step_sum_4[k] / n - m2 * m2) * n / (n - 1);
    const double rmse = std::sqrt(m2);
    return rmse > 0 ? std::sqrt(var2 / n) / (2 * rmse) : 0.0;
  }
};

struct CdfPoint {
  double error = 0;
  double probability = 0;
};

/// Empirical CDF on the sorted sample: P(E <= e_i) = i / n.
[[nodiscard]] inline std::vector<CdfPoint> empirical_cdf(std::vector<double> errors) {
  std::sort(errors.begin(), errors.end());
  std::vector<CdfPoint> out;
  const double n = static_cast<double>(errors.size());
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (i + 1 < errors.size() && errors[i + 1] == errors[i]) continue;
    out.push_back({errors[i], static_cast<double>(i + 1) / n});
  }
  return out;
}

[[nodiscard]] inline double fraction_below(const std::vector<double>& errors, double threshold) {
  if (errors.empty()) return NAN;
  const auto c = std::count_if(errors.begin(), errors.end(), [threshold](double e) { return e < threshold; });
  return static_cast<double>(c) / static_cast<double>(errors.size());
}

/// Nearest-rank percentile.
[[nodiscard]] inline double percentile(std::vector<double> v, double p) {
  if (v.empty()) return NAN;
  std::sort(v.begin(), v.end());
  const auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * static_cast<double>(v.size())));
  return v[std::clamp<std::size_t>(rank, 1, v.size()) - 1];
}

struct TraceRow {
  int k = 0;
  Vec2 truth;
  std::map<std::string, Vec2> estimates;
};

struct RunResult {
  std::vector<EstimatorSummary> estimators;
  std::vector<TraceRow> trace;
  int steps = 0;

  [[nodiscard]] const EstimatorSummary& get(const std::string& name) const {
    for (const auto& e : estimators) {
      if (e.name == name) return e;
    }
    throw DomainError("estimator '" + name + "' not in result");
  }
};

[[nodiscard]] inline std::vector<MeasurementFrame> synthesize_run(const std::vector<TruthState>& truth, const AnchorSet& anchors,
                                                                  RngStreams& rng, const ExperimentConfig& cfg) {
  std::vector<MeasurementFrame> frames;
  frames.reserve(truth.size());
  for (const auto& s : truth) frames.push_back(synthesize_measurements(s, anchors, rng, cfg.range, cfg.sensors));
  return frames;
}

/// All estimators see the same trajectory and measurements within a run.
[[nodiscard]] inline RunResult run_experiment(const ExperimentConfig& cfg) {
  if (cfg.runs < 1) throw DomainError("runs must be >= 1");
  cfg.pareto.validate();
  const AnchorSet anchors(cfg.anchors);
  const RangingGeometry g = build_geometry(anchors);
  const EstimatorRunner runner(cfg, anchors, g);

  RunResult res;
  res.steps = cfg.trajectory.steps;
  const auto steps = static_cast<std::size_t>(cfg.trajectory.steps);
  for (const auto& name : cfg.estimators) {
    EstimatorSummary s;
    s.name = name;
    s.step_sum_sq.assign(steps, 0.0);
    s.step_sum_4.assign(steps, 0.0);
    res.estimators.push_back(std::move(s));
  }
  std::vector<double> rmse_sum(cfg.estimators.size(), 0.0);

  for (int run = 0; run < cfg.runs; ++run) {
    RngStreams rng(cfg.seed, static_cast<std::uint64_t>(run));
    const auto truth = gen_trajectory(cfg.trajectory, rng.process());
    const auto frames = synthesize_run(truth, anchors, rng, cfg);
    if (run == cfg.trace_run) {
      res.trace.resize(truth.size());
      for (std::size_t k = 0; k < truth.size(); ++k) res.trace[k] = {truth[k].k, truth[k].position, {}};
    }
    for (std::size_t e = 0; e < cfg.estimators.size(); ++e) {
      auto& summary = res.estimators[e];
      std::vector<Vec2> est;
      try {
        est = runner.run(summary.name, frames);
      } catch (const std::exception& ex) {
        ++summary.excluded;
        summary.failures.push_back("run " + std::to_string(run) + ": " + ex.what());
        continue;
      }
      double sq = 0.0;
      for (std::size_t k = 0; k < steps; ++k) {
        const double err = (est[k] - truth[k].position).norm();
        summary.step_sum_sq[k] += err * err;
        summary.step_sum_4[k] += err * err * err * err;
        summary.pooled.push_back(err);
        sq += err * err;
      }
      rmse_sum[e] += std::sqrt(sq / static_cast<double>(steps));
      ++summary.runs;
      if (run == cfg.trace_run) {
        for (std::size_t k = 0; k < steps; ++k) res.trace[k].estimates[summary.name] = est[k];
      }
    }
  }
  for (std::size_t e = 0; e < res.estimators.size(); ++e) {
    auto& s = res.estimators[e];
    if (s.runs == 0) {
      s.rmse = s.rmse_pooled = s.p95 = s.cdf_at_threshold = NAN;
      continue;
    }
    s.rmse = rmse_sum[e] / s.runs;
    double tot = 0.0;
    for (double v : s.pooled) tot += v * v;
    s.rmse_pooled = std::sqrt(tot / static_cast<double>(s.pooled.size()));
    s.p95 = percentile(s.pooled, 95.0);
    s.cdf_at_threshold = fraction_below(s.pooled, cfg.cdf_threshold);
  }
  return res;
}

// ------------------------------------------------------------ scenarios

/// Path length available to scenario A inside the default hull (2 -> 18 m).
inline constexpr double kScenarioAPathLength = 16.0;

/// Steps for a straight run at speed V: the configured count, reduced so the
/// node stays inside the anchor hull.
[[nodiscard]] inline int linear_steps_within(double path_length, double V, double T, int requested) {
  if (!(V > 0)) return requested;
  const int fit = static_cast<int>(std::floor(path_length / (V * T))) + 1;
  return std::max(2, std::min(requested, fit));
}

[[nodiscard]] inline ExperimentConfig scenario_config(const std::string& scenario) {
  ExperimentConfig c;
  c.scenario = scenario;
  if (scenario == "A") {
    c.trajectory.kind = TrajectoryKind::linear;
    c.trajectory.initial = {{2.0, 10.0}, 0.1, 0.0, 0};
    c.trajectory.steps = 1000;
  } else if (scenario == "B") {
    c.trajectory.kind = TrajectoryKind::pwl;
    c.trajectory.initial = {{10.0, 10.0}, 0.5, 0.0, 0};
    c.trajectory.a_max = 0.5;
    c.trajectory.steps = 1000;
  } else if (scenario == "CV") {
    c.trajectory.kind = TrajectoryKind::cv;
    c.trajectory.initial = {{6.0, 10.0}, 0.5, 0.0, 0};
    c.trajectory.steps = 200;
    c.trajectory.cv = c.cv;
    c.runs = 1000;
    c.estimators = {"pareto", "lckf", "ekfcv", "ekf", "ukf"};
  } else {
    throw DomainError("unknown scenario '" + scenario + "' (expected A, B or CV)");
  }
  return c;
}

enum class SweepParameter { speed, a_max, T };

[[nodiscard]] inline SweepParameter parse_sweep_parameter(const std::string& s) {
  if (s == "speed") return SweepParameter::speed;
  if (s == "a_max" || s == "amax") return SweepParameter::a_max;
  if (s == "T") return SweepParameter::T;
  throw DomainError("unknown sweep parameter '" + s + "' (expected speed, a_max or T)");
}

[[nodiscard]] inline std::string to_string(SweepParameter p) {
  switch (p) {
    case SweepParameter::speed: return "speed";
    case SweepParameter::a_max: return "a_max";
    case SweepParameter::T: return "T";
  }
  return "?";
}

/// Applies one sweep value. For linear trajectories the step count is capped
/// so the path stays inside the hull.
[[nodiscard]] inline ExperimentConfig apply_sweep_value(ExperimentConfig c, SweepParameter p, double value, int requested_steps) {
  switch (p) {
    case SweepParameter::speed: c.trajectory.initial.speed = value; break;
    case SweepParameter::a_max: c.trajectory.a_max = value; break;
    case SweepParameter::T:
      c.trajectory.T = value;
      c.cv.T = value;
      c.trajectory.cv.T = value;
      break;
  }
  if (c.trajectory.kind == TrajectoryKind::linear) {
    c.trajectory.steps = linear_steps_within(kScenarioAPathLength, c.trajectory.initial.speed, c.trajectory.T, requested_steps);
  }
  return c;
}

struct SweepPoint {
  double value = 0;
  RunResult result;
};

[[nodiscard]] inline std::vector<SweepPoint> sweep(const ExperimentConfig& base, SweepParameter p, const std::vector<double>& values) {
  std::vector<SweepPoint> out;
  for (double v : values) out.push_back({v, run_experiment(apply_sweep_value(base, p, v, base.trajectory.steps))});
  return out;
}

}  // namespace paretoloc
