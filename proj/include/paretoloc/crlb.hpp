#pragma once

// Parametric and posterior Cramer-Rao bounds for the [x1 x2 V phi] model
//   p_{k+1} = f(p_k) + v_k,  y_k = [ranges; V; phi] + e_k.

#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "paretoloc/core.hpp"
#include "paretoloc/kalman.hpp"
#include "paretoloc/special_functions.hpp"

namespace paretoloc {

// ------------------------------------------------------------ moments

enum class TrigMomentForm { corrected, as_printed };

/// Expectations of the speed/heading functions at step k >= 1 of the CV
/// model started deterministically at (V0, phi0) when k = 1.
struct TrigMoments {
  double c0 = 1, s0 = 0, c0p = 1, s0p = 0;
  double eps = 1;
  double V0 = 0;
  double sigma3_sq = 0;
  int k = 1;
  TrigMomentForm form = TrigMomentForm::corrected;

  [[nodiscard]] double mean_speed() const { return V0; }
  [[nodiscard]] double mean_speed_sq() const { return (k - 1) * sigma3_sq + V0 * V0; }
  [[nodiscard]] double mean_cos() const { return c0 * eps; }
  [[nodiscard]] double mean_sin() const { return s0 * eps; }
  [[nodiscard]] double mean_sin_cos() const {
    const double e = form == TrigMomentForm::corrected ? std::pow(eps, 4) : eps * eps;
    return 0.5 * s0p * e;
  }
  [[nodiscard]] double mean_cos_sq() const { return 0.5 + 0.5 * c0p * std::pow(eps, 4); }
  [[nodiscard]] double mean_sin_sq() const { return 0.5 - 0.5 * c0p * std::pow(eps, 4); }
};

[[nodiscard]] inline TrigMoments trig_moments(double V0, double phi0, double sigma3_sq, double sigma4_sq, int k,
                                              TrigMomentForm form = TrigMomentForm::corrected) {
  if (k < 1) throw DomainError("trig_moments: k must be >= 1");
  if (sigma3_sq < 0 || sigma4_sq < 0) throw DomainError("trig_moments: variances must be >= 0");
  TrigMoments t;
  t.c0 = std::cos(phi0);
  t.s0 = std::sin(phi0);
  t.c0p = std::cos(2 * phi0);
  t.s0p = std::sin(2 * phi0);
  t.eps = std::exp(-0.5 * (k - 1) * sigma4_sq);
  t.V0 = V0;
  t.sigma3_sq = sigma3_sq;
  t.k = k;
  t.form = form;
  return t;
}

// ------------------------------------------------------------ D blocks

enum class D11Form { corrected, as_printed };

namespace detail {
inline void require_process_noise(const CvProcessModel& cv) {
  if (!(cv.sigma1_sq > 0 && cv.sigma2_sq > 0 && cv.sigma3_sq > 0 && cv.sigma4_sq > 0)) {
    throw NumericalError("process noise variances must be positive; use the parametric bound for Q = 0");
  }
}
}  // namespace detail

/// D11 = E{grad f Q^-1 grad f^T}. The as-printed (4,4) entry drops the V0^2
/// part of E{V_k^2}.
[[nodiscard]] inline Mat4 d11(const TrigMoments& t, const CvProcessModel& cv, D11Form form = D11Form::corrected) {
  detail::require_process_noise(cv);
  const double s1 = cv.sigma1_sq, s2 = cv.sigma2_sq, T = cv.T;
  const double e = t.eps, e4 = std::pow(t.eps, 4);
  const double sum = (s1 + s2) / (2 * s1 * s2);
  Mat4 D = Mat4::Zero();
  D(0, 0) = 1 / s1;
  D(1, 1) = 1 / s2;
  D(0, 2) = D(2, 0) = T * t.c0 / s1 * e;
  D(0, 3) = D(3, 0) = -T * t.V0 * t.s0 / s1 * e;
  D(1, 2) = D(2, 1) = T * t.s0 / s2 * e;
  D(1, 3) = D(3, 1) = T * t.V0 * t.c0 / s2 * e;
  D(2, 2) = T * T * (sum + (s2 - s1) / (2 * s1 * s2) * t.c0p * e4) + 1 / cv.sigma3_sq;
  D(2, 3) = D(3, 2) = T * T * ((s1 - s2) / (s1 * s2)) * t.V0 * t.s0p / 2 * e4;
  const double speed_sq = form == D11Form::corrected ? t.mean_speed_sq() : (t.k - 1) * t.sigma3_sq;
  D(3, 3) = T * T * speed_sq * (sum + (s1 - s2) / (2 * s1 * s2) * t.c0p * e4) + 1 / cv.sigma4_sq;
  return D;
}

/// D12 = -E{grad f} Q^-1.
[[nodiscard]] inline Mat4 d12(const TrigMoments& t, const CvProcessModel& cv) {
  detail::require_process_noise(cv);
  const double s1 = cv.sigma1_sq, s2 = cv.sigma2_sq, T = cv.T, e = t.eps;
  Mat4 D = Mat4::Zero();
  D(0, 0) = 1 / s1;
  D(1, 1) = 1 / s2;
  D(2, 0) = T / s1 * t.c0 * e;
  D(2, 1) = T / s2 * t.s0 * e;
  D(2, 2) = 1 / cv.sigma3_sq;
  D(3, 0) = -T / s1 * t.V0 * t.s0 * e;
  D(3, 1) = T / s2 * t.V0 * t.c0 * e;
  D(3, 3) = 1 / cv.sigma4_sq;
  return -D;
}

/// D22 = Q^-1 + blockdiag(Pi, diag(sigma_V^-2, sigma_phi^-2)).
[[nodiscard]] inline Mat4 d22(const CvProcessModel& cv, const Mat2& pi, const SensorNoiseModel& sensors) {
  detail::require_process_noise(cv);
  if (!(sensors.sigma_speed > 0 && sensors.sigma_heading > 0)) throw NumericalError("sensor noise must be positive");
  Mat4 D = cv.variances().cwiseInverse().asDiagonal();
  D.topLeftCorner<2, 2>() += pi;
  D(2, 2) += 1 / (sensors.sigma_speed * sensors.sigma_speed);
  D(3, 3) += 1 / (sensors.sigma_heading * sensors.sigma_heading);
  return D;
}

/// J_{k+1} = D22 - D21 (J_k + D11)^-1 D12, D21 = D12^T.
[[nodiscard]] inline Eigen::MatrixXd pcrlb_recursion(const Eigen::MatrixXd& J, const Eigen::MatrixXd& D11,
                                                     const Eigen::MatrixXd& D12, const Eigen::MatrixXd& D22) {
  const Eigen::MatrixXd inner = J + D11;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(inner);
  if (!lu.isInvertible()) throw NumericalError("pcrlb_recursion: J + D11 is singular");
  Eigen::MatrixXd out = D22 - D12.transpose() * lu.solve(D12);
  symmetrize(out);
  return out;
}

// ------------------------------------------------------------ Pi

/// Sum over anchors of sigma_r^-2 d d^T at a single position, where d is
/// the unit vector from the anchor to the node.
[[nodiscard]] inline Mat2 pi_at(const Vec2& p, const AnchorSet& anchors, const RangeNoiseModel& range) {
  Mat2 pi = Mat2::Zero();
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    const Vec2 d = p - anchors[i];
    const double r = d.norm();
    if (r == 0.0) continue;
    const double var = range_variance(r, range);
    if (!(var > 0.0)) throw NumericalError("pi_at: range variance must be positive");
    pi += (d / r) * (d / r).transpose() / var;
  }
  return pi;
}

struct PiEstimate {
  Mat2 mean = Mat2::Zero();
  Mat2 se = Mat2::Zero();
};

/// Monte Carlo Pi over an ensemble of positions.
[[nodiscard]] inline PiEstimate pi_expectation_mc(std::span<const Vec2> positions, const AnchorSet& anchors,
                                                  const RangeNoiseModel& range) {
  if (positions.empty()) throw DomainError("pi_expectation_mc: empty ensemble");
  Mat2 s = Mat2::Zero(), sq = Mat2::Zero();
  for (const auto& p : positions) {
    const Mat2 v = pi_at(p, anchors, range);
    s += v;
    sq += v.cwiseProduct(v);
  }
  const double n = static_cast<double>(positions.size());
  PiEstimate e;
  e.mean = s / n;
  const Mat2 var = (sq / n - e.mean.cwiseProduct(e.mean)).cwiseMax(0.0);
  e.se = (var / n).cwiseSqrt();
  return e;
}

struct PiBounds {
  Mat2 lb = Mat2::Zero();
  Mat2 ub = Mat2::Zero();
};

/// Element-wise bounds on Pi from the ensemble's mean and spread. Weights
/// sigma_r^-2 are plug-in values at the mean position; q, z are the
/// anchor-relative coordinates with the common spread sigma.
[[nodiscard]] inline PiBounds pi_bounds(const Vec2& mean, double sigma, const AnchorSet& anchors, const RangeNoiseModel& range) {
  PiBounds b;
  const auto off = offdiag_bounds();
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    const Vec2 d = mean - anchors[i];
    const double w = 1.0 / range_variance(d.norm(), range);
    const auto b11 = diag_bounds(d.x(), sigma, d.y(), sigma);
    const auto b22 = diag_bounds(d.y(), sigma, d.x(), sigma);
    b.lb(0, 0) += w * b11.lb;
    b.ub(0, 0) += w * b11.ub;
    b.lb(1, 1) += w * b22.lb;
    b.ub(1, 1) += w * b22.ub;
    b.lb(0, 1) += w * off.lb;
    b.ub(0, 1) += w * off.ub;
  }
  b.lb(1, 0) = b.lb(0, 1);
  b.ub(1, 0) = b.ub(0, 1);
  return b;
}

// ------------------------------------------------------------ Gershgorin

struct GershgorinResult {
  Eigen::MatrixXd lower;
  Eigen::MatrixXd upper;
  int repaired_rows = 0;  // rows of U whose diagonal the ordering pass raised
};

/// Diagonal inflation of the upper bound and off-diagonal deflation of the
/// lower bound, using Gershgorin discs:
///   U_ii = ub_ii if ub_ii > min(row, col) abs sums, else that min + eps;
///   L_ij = f_ij lb_ij with f = 1 when row i of lb is diagonally dominant,
///          else min(lb_ii / l_row, lb_ii / l_col) - eps.
/// f_ij is taken as min(f_i, f_j) so L stays symmetric, and negative lb
/// diagonals are clamped to 0. This pass alone gives U, L PSD.
[[nodiscard]] inline GershgorinResult gershgorin_bounds_only(const Eigen::MatrixXd& lb, const Eigen::MatrixXd& ub, double eps) {
  const auto n = lb.rows();
  if (ub.rows() != n || lb.cols() != n || ub.cols() != n) throw DomainError("gershgorin: shape mismatch");
  if (!(eps > 0.0)) throw DomainError("gershgorin: epsilon must be positive");
  if ((lb.array() > ub.array() + 1e-12 * (1.0 + ub.array().abs())).any()) {
    throw DomainError("gershgorin: element-wise ordering lb <= ub violated");
  }
  GershgorinResult r;
  r.upper = ub;
  r.lower = lb;
  Eigen::VectorXd f = Eigen::VectorXd::Ones(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double u_row = ub.row(i).cwiseAbs().sum() - std::abs(ub(i, i));
    const double u_col = ub.col(i).cwiseAbs().sum() - std::abs(ub(i, i));
    const double u_min = std::min(u_row, u_col);
    if (!(ub(i, i) > u_min)) r.upper(i, i) = u_min + eps;

    const double lii = std::max(0.0, lb(i, i));
    r.lower(i, i) = lii;
    const double l_row = lb.row(i).cwiseAbs().sum() - std::abs(lb(i, i));
    const double l_col = lb.col(i).cwiseAbs().sum() - std::abs(lb(i, i));
    if (!(lii > std::min(l_row, l_col))) {
      const double lmax = std::max(l_row, l_col);
      f(i) = lmax > 0.0 ? std::max(0.0, lii / lmax - eps) : 0.0;
    }
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i != j) r.lower(i, j) = std::min(f(i), f(j)) * lb(i, j);
    }
  }
  return r;
}

/// Full sandwich: the disc pass above followed by an ordering pass that
/// raises U's diagonal until U - L is diagonally dominant, which gives
/// 0 <= L <= U in the PSD sense.
[[nodiscard]] inline GershgorinResult gershgorin_sandwich(const Eigen::MatrixXd& lb, const Eigen::MatrixXd& ub, double eps = 1e-6) {
  auto r = gershgorin_bounds_only(lb, ub, eps);
  const auto n = lb.rows();
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::VectorXd drow = (r.upper.row(i) - r.lower.row(i)).transpose();
    const double radius = drow.cwiseAbs().sum() - std::abs(drow(i));
    if (drow(i) < radius) {
      r.upper(i, i) += radius - drow(i) + eps;
      ++r.repaired_rows;
    }
  }
  return r;
}

// ------------------------------------------------------------ traces

[[nodiscard]] inline double position_trace_sqrt(const Eigen::MatrixXd& J) {
  Eigen::FullPivLU<Eigen::MatrixXd> lu(J);
  if (!lu.isInvertible()) return std::numeric_limits<double>::infinity();
  const Eigen::MatrixXd inv = lu.inverse();
  const double tr = inv(0, 0) + inv(1, 1);
  return tr >= 0.0 ? std::sqrt(tr) : std::numeric_limits<double>::quiet_NaN();
}

/// Measurement information H^T R^-1 H of [ranges; V; phi] at a true state.
[[nodiscard]] inline Mat4 measurement_information(const Vec4& p, const AnchorSet& anchors, const RangeNoiseModel& range,
                                                  const SensorNoiseModel& sensors) {
  Mat4 J = Mat4::Zero();
  J.topLeftCorner<2, 2>() = pi_at(p.head<2>(), anchors, range);
  J(2, 2) = 1 / (sensors.sigma_speed * sensors.sigma_speed);
  J(3, 3) = 1 / (sensors.sigma_heading * sensors.sigma_heading);
  return J;
}

/// Parametric bound along a known trajectory with zero process noise:
///   J_{k+1} = F_k^-T J_k F_k^-1 + H^T R^-1 H at p_{k+1},
/// F_k the transition Jacobian at the true p_k. J0 must be informative.
/// Returns sqrt(trace) of the position block of J_k^-1 for every step.
[[nodiscard]] inline std::vector<double> parcrlb_trace(std::span<const TruthState> trajectory, const AnchorSet& anchors,
                                                       const RangeNoiseModel& range, const SensorNoiseModel& sensors, double T,
                                                       const Mat4& J0, std::vector<Mat4>* information = nullptr) {
  std::vector<double> out;
  out.reserve(trajectory.size());
  Mat4 J = J0;
  for (std::size_t k = 0; k < trajectory.size(); ++k) {
    if (k > 0) {
      const Mat4 F = cv_jacobian(trajectory[k - 1].as_vector(), T);
      const Mat4 Finv = F.inverse();
      J = Finv.transpose() * J * Finv + measurement_information(trajectory[k].as_vector(), anchors, range, sensors);
      J = 0.5 * (J + J.transpose()).eval();
    }
    if (information) information->push_back(J);
    out.push_back(position_trace_sqrt(J));
  }
  return out;
}

/// J0 of the parametric bound: prior information plus the first frame.
[[nodiscard]] inline Mat4 parcrlb_initial(const TruthState& s0, const Mat4& prior_cov, const AnchorSet& anchors,
                                          const RangeNoiseModel& range, const SensorNoiseModel& sensors) {
  return prior_cov.inverse() + measurement_information(s0.as_vector(), anchors, range, sensors);
}

struct PcrlbStep {
  int k = 0;
  Mat4 J = Mat4::Zero();
  Eigen::MatrixXd J_lb_G, J_ub_G;
  Mat4 J_lb_elem = Mat4::Zero(), J_ub_elem = Mat4::Zero();
  double bound = 0, bound_lb = 0, bound_ub = 0;
  int repaired_rows = 0;
};

struct PcrlbConfig {
  std::size_t ensemble = 10000;
  double eps = 1e-6;
  D11Form d11_form = D11Form::corrected;
  std::uint64_t seed = 1;
};

/// Posterior bound for CV trajectories started at the deterministic `p0`.
/// Pi is estimated on an ensemble of CV rollouts; the element-wise bounds
/// replace Pi by its bounds in D22 with the common J_k and are then made
/// PSD-ordered. bound_lb uses J_ub_G, bound_ub uses J_lb_G.
[[nodiscard]] inline std::vector<PcrlbStep> pcrlb_cv(const Vec4& p0, const Mat4& prior_cov, int steps, const CvProcessModel& cv,
                                                     const AnchorSet& anchors, const RangeNoiseModel& range,
                                                     const SensorNoiseModel& sensors, const PcrlbConfig& cfg) {
  cv.validate();
  if (cfg.ensemble < 2) throw DomainError("pcrlb ensemble must have at least 2 members");
  std::mt19937_64 gen = RngStreams::make(cfg.seed, 0, RngStreams::kProcess);
  std::vector<Vec4> ens(cfg.ensemble, p0);
  const Vec4 sd = cv.variances().cwiseSqrt();
  std::vector<PcrlbStep> out;
  out.reserve(static_cast<std::size_t>(steps));
  Eigen::MatrixXd J = prior_cov.inverse() + measurement_information(p0, anchors, range, sensors);
  {
    PcrlbStep s;
    s.J = J;
    s.J_lb_G = J;
    s.J_ub_G = J;
    s.J_lb_elem = J;
    s.J_ub_elem = J;
    s.bound = s.bound_lb = s.bound_ub = position_trace_sqrt(J);
    out.push_back(s);
  }
  std::vector<Vec2> pos(cfg.ensemble);
  for (int k = 0; k + 1 < steps; ++k) {
    const auto t = trig_moments(p0(2), p0(3), cv.sigma3_sq, cv.sigma4_sq, k + 1);
    const Mat4 D11 = d11(t, cv, cfg.d11_form);
    const Mat4 D12 = d12(t, cv);
    for (std::size_t i = 0; i < ens.size(); ++i) {
      Vec4 nx = cv_transition(ens[i], cv.T);
      for (int j = 0; j < 4; ++j) nx(j) += gaussian(gen, sd(j));
      ens[i] = nx;
      pos[i] = nx.head<2>();
    }
    const auto pi = pi_expectation_mc(pos, anchors, range);
    Vec2 mean = Vec2::Zero();
    for (const auto& p : pos) mean += p;
    mean /= static_cast<double>(pos.size());
    Vec2 var = Vec2::Zero();
    for (const auto& p : pos) var += (p - mean).cwiseAbs2();
    var /= static_cast<double>(pos.size() - 1);
    const double sigma = std::sqrt(0.5 * (var(0) + var(1)));
    const auto pb = pi_bounds(mean, sigma, anchors, range);

    const Eigen::MatrixXd common = D12.transpose() * (J + D11).fullPivLu().solve(Eigen::MatrixXd(D12));
    PcrlbStep s;
    s.k = k + 1;
    s.J = pcrlb_recursion(J, D11, D12, d22(cv, pi.mean, sensors));
    s.J_lb_elem = d22(cv, pb.lb, sensors) - common;
    s.J_ub_elem = d22(cv, pb.ub, sensors) - common;
    s.J_lb_elem = 0.5 * (s.J_lb_elem + s.J_lb_elem.transpose()).eval();
    s.J_ub_elem = 0.5 * (s.J_ub_elem + s.J_ub_elem.transpose()).eval();
    const auto g = gershgorin_sandwich(s.J_lb_elem, s.J_ub_elem, cfg.eps);
    s.J_lb_G = g.lower;
    s.J_ub_G = g.upper;
    s.repaired_rows = g.repaired_rows;
    s.bound = position_trace_sqrt(s.J);
    s.bound_lb = position_trace_sqrt(s.J_ub_G);
    s.bound_ub = position_trace_sqrt(s.J_lb_G);
    J = s.J;
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace paretoloc
