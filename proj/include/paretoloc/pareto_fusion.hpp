#pragma once

// Loosely coupled fusion of the WLS ranging estimate with dead reckoning.
//
// Per axis the fused estimate is (1 - beta) x^(r) + beta x^(v). Its error
// mean and variance are affine / quadratic in beta; beta is chosen by
// minimizing rho mu^2 + (1 - rho) sigma^2 and rho by the knee criterion
// (sigma^2 - mu^2)^2 -> min over a grid.

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <vector>

#include "paretoloc/core.hpp"
#include "paretoloc/dead_reckoning.hpp"
#include "paretoloc/ranging.hpp"

namespace paretoloc {

enum class FusionMode { pareto_knee, fixed_rho, mse };

struct ParetoConfig {
  std::vector<double> rho_grid = uniform_grid(51);
  double beta_clip = 0.99;
  FusionMode mode = FusionMode::pareto_knee;
  double fixed_rho = 0.5;
  // Floor on per-link range variances inside the online estimator. Keeps
  // the weight matrix finite when the range noise is switched off.
  double variance_floor = 1e-20;
  // Kinematics used before two estimates exist; measured values if unset.
  std::optional<double> initial_speed;
  std::optional<double> initial_heading;

  static std::vector<double> uniform_grid(int n) {
    std::vector<double> g(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) g[static_cast<std::size_t>(i)] = n == 1 ? 0.0 : static_cast<double>(i) / (n - 1);
    return g;
  }

  void validate() const {
    if (rho_grid.empty()) throw DomainError("rho grid must not be empty");
    for (std::size_t i = 0; i < rho_grid.size(); ++i) {
      if (rho_grid[i] < 0.0 || rho_grid[i] > 1.0) throw DomainError("rho grid values must lie in [0, 1]");
      if (i > 0 && rho_grid[i] < rho_grid[i - 1]) throw DomainError("rho grid must be sorted");
    }
    if (!(beta_clip > 0.0 && beta_clip <= 1.0)) throw DomainError("beta_clip must lie in (0, 1]");
    if (fixed_rho < 0.0 || fixed_rho > 1.0) throw DomainError("fixed_rho must lie in [0, 1]");
  }
};

struct VarianceComponents {
  double sigma_vr_sq = 0.0;
  double sigma_vx_sq = 0.0;
  double sigma_vv_sq = 0.0;
};

/// Everything the per-axis optimization needs at one step. `nominal` is
/// V_k cos(phi_k) on x1 (sin on x2) and `attenuation` is exp(-sigma_phi^2/2).
struct AxisContext {
  double ranging_mean = 0.0;    // E{w^(r)_{k+1}}
  double ranging_second = 0.0;  // E{(w^(r)_{k+1})^2}
  double prev_bias = 0.0;       // E{w_k}
  double prev_variance = 0.0;   // sigma^2_{w,k}
  double nominal = 0.0;
  double attenuation = 1.0;
  double dr_second = 0.0;       // E{V~^2 cos^2 phi~} (sin^2 on x2)
  double T = 0.1;

  [[nodiscard]] double dr_offset() const { return T * nominal * (attenuation - 1.0); }
  [[nodiscard]] double dr_mean() const { return nominal * attenuation; }
  [[nodiscard]] double prev_second() const { return prev_variance + prev_bias * prev_bias; }
  [[nodiscard]] double gamma() const { return -ranging_mean + prev_bias + dr_offset(); }

  [[nodiscard]] VarianceComponents components() const {
    VarianceComponents v;
    v.sigma_vr_sq = std::max(0.0, ranging_second - ranging_mean * ranging_mean);
    v.sigma_vx_sq = std::max(0.0, prev_variance);
    v.sigma_vv_sq = std::max(0.0, T * T * (dr_second - dr_mean() * dr_mean()));
    return v;
  }
  [[nodiscard]] double eta() const {
    const auto v = components();
    return v.sigma_vr_sq + v.sigma_vx_sq + v.sigma_vv_sq;
  }
};

[[nodiscard]] inline double fuse(double beta, double ranging_est, double dr_est) {
  return (1.0 - beta) * ranging_est + beta * dr_est;
}

[[nodiscard]] inline Vec2 fuse(const Vec2& beta, const Vec2& ranging_est, const Vec2& dr_est) {
  return {fuse(beta(0), ranging_est(0), dr_est(0)), fuse(beta(1), ranging_est(1), dr_est(1))};
}

/// Mean of the fused error after one step.
[[nodiscard]] inline double bias_recursion(double beta, double prev_bias, double ranging_bias_axis, double V, double phi,
                                           double sigma_phi, double T, Axis axis = Axis::x1) {
  const double trig = axis == Axis::x1 ? std::cos(phi) : std::sin(phi);
  return (1.0 - beta) * ranging_bias_axis + beta * prev_bias +
         beta * T * V * trig * (std::exp(-0.5 * sigma_phi * sigma_phi) - 1.0);
}

[[nodiscard]] inline double fused_bias(double beta, const AxisContext& c) {
  return (1.0 - beta) * c.ranging_mean + beta * c.prev_bias + beta * c.dr_offset();
}

[[nodiscard]] inline double error_variance(double beta, const VarianceComponents& v) {
  return (1.0 - beta) * (1.0 - beta) * v.sigma_vr_sq + beta * beta * v.sigma_vx_sq + beta * beta * v.sigma_vv_sq;
}

struct SecondMomentTerms {
  double a = 0.0;
  double b = 0.0;
  double ranging_second = 0.0;

  [[nodiscard]] double second_moment(double beta) const { return beta * beta * a + 2.0 * beta * b + ranging_second; }
};

/// Coefficients of E{w_{k+1}^2} = beta^2 a + 2 beta b + E{(w^(r))^2}.
[[nodiscard]] inline SecondMomentTerms second_moment_terms(const AxisContext& c, bool allow_degenerate = false) {
  const double mr = c.ranging_mean;
  const double mx = c.prev_bias;
  const double tvc = c.T * c.nominal;
  const double e = c.attenuation;
  SecondMomentTerms t;
  t.ranging_second = c.ranging_second;
  t.a = c.ranging_second + c.prev_second() + c.T * c.T * c.dr_second + tvc * tvc * (1.0 - 2.0 * e) - 2.0 * mx * mr -
        2.0 * mr * tvc * (e - 1.0) + 2.0 * mx * tvc * (e - 1.0);
  t.b = -c.ranging_second + mx * mr + mr * tvc * (e - 1.0);
  if (!allow_degenerate && !(t.a > 0.0)) throw NumericalError("second_moment_terms: a_k must be positive");
  return t;
}

struct BetaResult {
  double beta = 0.0;
  double xi = 0.0;
  bool degenerate = false;
};

[[nodiscard]] inline double clip_beta(double beta, double clip) {
  return std::clamp(std::clamp(beta, -1.0, 1.0), -clip, clip);
}

/// Minimizer of rho mu(beta)^2 + (1 - rho) sigma^2(beta) over [-1, 1],
/// then clipped to |beta| <= clip.
[[nodiscard]] inline BetaResult optimal_beta(double rho, const AxisContext& c, double clip = 0.99) {
  if (rho < 0.0 || rho > 1.0) throw DomainError("rho must lie in [0, 1]");
  const auto v = c.components();
  const double eta = v.sigma_vr_sq + v.sigma_vx_sq + v.sigma_vv_sq;
  const double gamma = c.gamma();
  const double num = 2.0 * (1.0 - rho) * v.sigma_vr_sq - 2.0 * rho * gamma * c.ranging_mean;
  const double den = 2.0 * (1.0 - rho) * eta + 2.0 * rho * gamma * gamma;
  BetaResult r;
  if (!(den > 0.0)) {
    r.degenerate = true;
    return r;
  }
  r.xi = num / den;
  r.beta = clip_beta(r.xi, clip);
  return r;
}

[[nodiscard]] inline double mse_beta(double a, double b, double clip = 1.0) {
  if (!(a > 0.0)) throw NumericalError("mse_beta: a_k must be positive");
  return clip_beta(-b / a, clip);
}

[[nodiscard]] inline double knee_objective(double beta, const AxisContext& c) {
  const double mu = fused_bias(beta, c);
  const double d = error_variance(beta, c.components()) - mu * mu;
  return d * d;
}

struct RhoSelection {
  double rho = 0.0;
  double beta = 0.0;
  double objective = 0.0;
  bool degenerate = false;
};

/// Grid search for the knee point; ties go to the smallest rho.
[[nodiscard]] inline RhoSelection select_rho(const ParetoConfig& cfg, const AxisContext& c) {
  RhoSelection best;
  bool first = true;
  for (double rho : cfg.rho_grid) {
    const auto br = optimal_beta(rho, c, cfg.beta_clip);
    const double obj = knee_objective(br.beta, c);
    if (first || obj < best.objective) {
      best = {rho, br.beta, obj, br.degenerate};
      first = false;
    }
  }
  return best;
}

/// Speed and heading recovered from two consecutive estimates. A zero
/// displacement keeps the previous heading.
struct Kinematics {
  double speed = 0.0;
  double heading = 0.0;
};

[[nodiscard]] inline Kinematics approximate_kinematics(const Vec2& previous, const Vec2& current, double T,
                                                       double previous_heading) {
  if (!(T > 0.0)) throw DomainError("T must be positive");
  const Vec2 d = current - previous;
  const double n = d.norm();
  if (n == 0.0) return {0.0, previous_heading};
  return {n / T, std::atan2(d.y(), d.x())};
}

struct FusionState {
  Vec2 estimate = Vec2::Zero();
  Vec2 previous = Vec2::Zero();
  bool has_previous = false;
  Vec2 bias = Vec2::Zero();
  Vec2 variance = Vec2::Zero();
  Kinematics kinematics;
  // Speed and heading measured at the current step, consumed by the next
  // dead-reckoning prediction.
  double pending_speed = 0.0;
  double pending_heading = 0.0;
  int k = 0;
  // Diagnostics of the last step.
  Vec2 beta = Vec2::Zero();
  Vec2 rho = Vec2::Zero();
  Vec2 ranging_estimate = Vec2::Zero();
  Vec2 dr_estimate = Vec2::Zero();
  bool degenerate = false;
};

struct FusionModels {
  RangeNoiseModel range;
  SensorNoiseModel sensors;
  double T = 0.1;
};

namespace detail {

struct RangingSolution {
  Vec2 estimate;
  RangingErrorMoments moments;
};

inline RangingSolution solve_ranging_at(const RangingGeometry& g, const AnchorSet& anchors, std::span<const double> measured,
                                        const Vec2& linearization_point, const RangeNoiseModel& model, double floor) {
  const auto approx = true_ranges(linearization_point, anchors);
  auto vars = range_variances(approx, model);
  for (double& v : vars) v = std::max(v, floor);
  const Eigen::MatrixXd w = noise_cov_inverse(approx, vars);
  RangingSolution s;
  s.estimate = wls_estimate(g, measured, w);
  s.moments = ranging_moments(g, w, approx, vars);
  return s;
}

}  // namespace detail

/// Initial state from the first frame: WLS estimate (unit weights, then
/// re-weighted at that estimate), closed-form bias and variance.
[[nodiscard]] inline FusionState fusion_init(const MeasurementFrame& frame, const AnchorSet& anchors, const RangingGeometry& g,
                                             const FusionModels& models, const ParetoConfig& cfg) {
  cfg.validate();
  const auto n = g.rows();
  const Vec2 coarse = wls_estimate(g, frame.ranges, Eigen::MatrixXd::Identity(n, n));
  const auto sol = detail::solve_ranging_at(g, anchors, frame.ranges, coarse, models.range, cfg.variance_floor);
  FusionState s;
  s.estimate = sol.estimate;
  s.ranging_estimate = sol.estimate;
  s.dr_estimate = sol.estimate;
  s.bias = sol.moments.mean;
  s.variance = sol.moments.covariance().diagonal().cwiseMax(0.0);
  s.pending_speed = frame.speed;
  s.pending_heading = frame.heading;
  s.kinematics = {cfg.initial_speed.value_or(frame.speed), cfg.initial_heading.value_or(frame.heading)};
  s.k = frame.k;
  return s;
}

/// One fusion step using the ranges of `frame` (time k+1) and the speed and
/// heading stored from the previous frame (time k).
[[nodiscard]] inline FusionState fusion_step(const FusionState& state, const MeasurementFrame& frame, const AnchorSet& anchors,
                                             const RangingGeometry& g, const FusionModels& models, const ParetoConfig& cfg) {
  const double T = models.T;
  const auto sol = detail::solve_ranging_at(g, anchors, frame.ranges, state.estimate, models.range, cfg.variance_floor);
  const Vec2 x_r = sol.estimate;
  const Vec2 x_v = dr_predict(state.estimate, state.pending_speed, state.pending_heading, T);

  Kinematics kin = state.kinematics;
  if (state.has_previous) kin = approximate_kinematics(state.previous, state.estimate, T, state.kinematics.heading);

  const double sphi = models.sensors.sigma_heading;
  const double attenuation = std::exp(-0.5 * sphi * sphi);
  const Mat2& corr = sol.moments.correlation;

  FusionState next = state;
  next.degenerate = false;
  for (int i = 0; i < 2; ++i) {
    const Axis axis = static_cast<Axis>(i);
    AxisContext c;
    c.ranging_mean = sol.moments.mean(i);
    c.ranging_second = corr(i, i);
    c.prev_bias = state.bias(i);
    c.prev_variance = state.variance(i);
    c.nominal = kin.speed * (axis == Axis::x1 ? std::cos(kin.heading) : std::sin(kin.heading));
    c.attenuation = attenuation;
    c.dr_second = dr_second_moment(kin.speed, models.sensors.sigma_speed, kin.heading, sphi, axis);
    c.T = T;

    double beta = 0.0;
    double rho = 0.0;
    switch (cfg.mode) {
      case FusionMode::pareto_knee: {
        const auto sel = select_rho(cfg, c);
        beta = sel.beta;
        rho = sel.rho;
        next.degenerate = next.degenerate || sel.degenerate;
        break;
      }
      case FusionMode::fixed_rho: {
        const auto br = optimal_beta(cfg.fixed_rho, c, cfg.beta_clip);
        beta = br.beta;
        rho = cfg.fixed_rho;
        next.degenerate = next.degenerate || br.degenerate;
        break;
      }
      case FusionMode::mse: {
        // a_k vanishes only when every error moment does; fall back to ranging.
        const auto t = second_moment_terms(c, true);
        if (t.a > 0.0) {
          beta = mse_beta(t.a, t.b, cfg.beta_clip);
        } else {
          next.degenerate = true;
        }
        rho = 0.5;
        break;
      }
    }
    next.beta(i) = beta;
    next.rho(i) = rho;
    next.bias(i) = fused_bias(beta, c);
    next.variance(i) = error_variance(beta, c.components());
  }
  next.ranging_estimate = x_r;
  next.dr_estimate = x_v;
  next.previous = state.estimate;
  next.has_previous = true;
  next.estimate = fuse(next.beta, x_r, x_v);
  next.kinematics = kin;
  next.pending_speed = frame.speed;
  next.pending_heading = frame.heading;
  next.k = frame.k;
  return next;
}

}  // namespace paretoloc
