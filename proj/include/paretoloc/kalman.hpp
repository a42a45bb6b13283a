#pragma once

// Kalman-type baselines. The 2-D filters (EKF, UKF, LC-KF) carry only the
// position and use the measured speed and heading as inputs; EKF-CV carries
// [x1 x2 V phi] with the stochastic constant-velocity model.

#include <cmath>
#include <functional>

#include <Eigen/Dense>

#include "paretoloc/core.hpp"
#include "paretoloc/ranging.hpp"

namespace paretoloc {

struct KfState {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  // Inputs measured at the current step, used by the next prediction.
  double pending_speed = 0.0;
  double pending_heading = 0.0;
  int k = 0;
};

struct KfModels {
  RangeNoiseModel range;
  SensorNoiseModel sensors;
  double T = 0.1;
  // Keeps the innovation covariance invertible when the noise is zero.
  double variance_floor = 1e-12;
};

inline void symmetrize(Eigen::MatrixXd& m) { m = 0.5 * (m + m.transpose()).eval(); }

[[nodiscard]] inline double min_eigenvalue(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

/// Joseph-form linear update. Throws NumericalError on a singular
/// innovation covariance.
inline void kf_update(Eigen::VectorXd& x, Eigen::MatrixXd& P, const Eigen::MatrixXd& H, const Eigen::VectorXd& innovation,
                      const Eigen::MatrixXd& R) {
  Eigen::MatrixXd S = H * P * H.transpose() + R;
  symmetrize(S);
  Eigen::LDLT<Eigen::MatrixXd> ldlt(S);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || ldlt.vectorD().minCoeff() <= 0.0) {
    throw NumericalError("innovation covariance is singular");
  }
  const Eigen::MatrixXd K = ldlt.solve(H * P).transpose();
  x += K * innovation;
  const Eigen::MatrixXd IKH = Eigen::MatrixXd::Identity(P.rows(), P.cols()) - K * H;
  P = IKH * P * IKH.transpose() + K * R * K.transpose();
  symmetrize(P);
}

// ---------------------------------------------------------------- helpers

namespace detail {

inline Eigen::VectorXd range_vector(const Vec2& p, const AnchorSet& anchors) {
  Eigen::VectorXd h(static_cast<Eigen::Index>(anchors.size()));
  for (std::size_t i = 0; i < anchors.size(); ++i) h(static_cast<Eigen::Index>(i)) = (p - anchors[i]).norm();
  return h;
}

/// Rows (x - s_i)^T / |x - s_i|; a zero range gives a zero row.
inline Eigen::MatrixXd range_jacobian(const Vec2& p, const AnchorSet& anchors) {
  Eigen::MatrixXd H(static_cast<Eigen::Index>(anchors.size()), 2);
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    const Vec2 d = p - anchors[i];
    const double r = d.norm();
    H.row(static_cast<Eigen::Index>(i)) = r > 0.0 ? Eigen::RowVector2d((d / r).transpose()) : Eigen::RowVector2d::Zero();
  }
  return H;
}

inline Eigen::VectorXd range_noise(const Eigen::VectorXd& ranges, const KfModels& m) {
  Eigen::VectorXd v(ranges.size());
  for (Eigen::Index i = 0; i < ranges.size(); ++i) v(i) = std::max(range_variance(std::max(ranges(i), 0.0), m.range), m.variance_floor);
  return v;
}

inline Eigen::VectorXd to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace detail

/// Position-only prediction with input-noise covariance B diag(sV^2, sphi^2) B^T.
inline void predict_position(KfState& s, const KfModels& m) {
  const double V = s.pending_speed;
  const double c = std::cos(s.pending_heading);
  const double sn = std::sin(s.pending_heading);
  s.mean += m.T * V * Eigen::Vector2d(c, sn);
  Eigen::Matrix2d B;
  B << m.T * c, -m.T * V * sn, m.T * sn, m.T * V * c;
  const Eigen::Vector2d q(m.sensors.sigma_speed * m.sensors.sigma_speed, m.sensors.sigma_heading * m.sensors.sigma_heading);
  s.cov += B * q.asDiagonal() * B.transpose();
  symmetrize(s.cov);
}

/// WLS position as a linear measurement with covariance from the closed-form
/// ranging moments at the predicted position, eigenvalue-floored at 1e-12.
[[nodiscard]] inline Mat2 lckf_measurement_cov(const RangingErrorMoments& mom, double floor = 1e-12) {
  Mat2 c = mom.covariance();
  c = 0.5 * (c + c.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Mat2> es(c);
  const Eigen::Vector2d ev = es.eigenvalues().cwiseMax(floor);
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

/// Common initialization of the 2-D filters: reweighted WLS fix.
[[nodiscard]] inline KfState kf2_init(const MeasurementFrame& frame, const AnchorSet& anchors, const RangingGeometry& g,
                                      const KfModels& m) {
  const auto n = g.rows();
  Vec2 p = wls_estimate(g, frame.ranges, Eigen::MatrixXd::Identity(n, n));
  const auto approx = true_ranges(p, anchors);
  auto vars = range_variances(approx, m.range);
  for (double& v : vars) v = std::max(v, m.variance_floor);
  const Eigen::MatrixXd W = noise_cov_inverse(approx, vars);
  p = wls_estimate(g, frame.ranges, W);
  KfState s;
  s.mean = p;
  // Start from the predicted covariance of the initial WLS fix.
  s.cov = lckf_measurement_cov(ranging_moments(g, W, approx, vars));
  s.pending_speed = frame.speed;
  s.pending_heading = frame.heading;
  s.k = frame.k;
  return s;
}

// ---------------------------------------------------------------- EKF

[[nodiscard]] inline KfState ekf_step(const KfState& state, const MeasurementFrame& frame, const AnchorSet& anchors,
                                      const KfModels& m) {
  KfState s = state;
  predict_position(s, m);
  const Vec2 p = s.mean.head<2>();
  const Eigen::VectorXd h = detail::range_vector(p, anchors);
  const Eigen::MatrixXd H = detail::range_jacobian(p, anchors);
  const Eigen::MatrixXd R = detail::range_noise(h, m).asDiagonal();
  kf_update(s.mean, s.cov, H, detail::to_vector(frame.ranges) - h, R);
  s.pending_speed = frame.speed;
  s.pending_heading = frame.heading;
  s.k = frame.k;
  return s;
}

// ---------------------------------------------------------------- UKF

struct UtParams {
  double alpha = 1.0;
  double beta = 2.0;
  double kappa = 0.0;
};

struct SigmaSet {
  Eigen::MatrixXd points;  // n x (2n+1)
  Eigen::VectorXd wm, wc;
};

/// Symmetric 2n+1 sigma-point set. A failed Cholesky is retried once with
/// 1e-12 I added; a second failure throws.
[[nodiscard]] inline SigmaSet sigma_points(const Eigen::VectorXd& x, const Eigen::MatrixXd& P, const UtParams& ut) {
  const auto n = x.size();
  const double nd = static_cast<double>(n);
  const double lambda = ut.alpha * ut.alpha * (nd + ut.kappa) - nd;
  Eigen::LLT<Eigen::MatrixXd> llt((nd + lambda) * P);
  if (llt.info() != Eigen::Success) {
    llt.compute((nd + lambda) * (P + 1e-12 * Eigen::MatrixXd::Identity(n, n)));
    if (llt.info() != Eigen::Success) throw NumericalError("UKF: covariance square root failed");
  }
  const Eigen::MatrixXd L = llt.matrixL();
  SigmaSet s;
  s.points.resize(n, 2 * n + 1);
  s.points.col(0) = x;
  for (Eigen::Index i = 0; i < n; ++i) {
    s.points.col(1 + i) = x + L.col(i);
    s.points.col(1 + n + i) = x - L.col(i);
  }
  s.wm = Eigen::VectorXd::Constant(2 * n + 1, 1.0 / (2.0 * (nd + lambda)));
  s.wc = s.wm;
  s.wm(0) = lambda / (nd + lambda);
  s.wc(0) = lambda / (nd + lambda) + (1.0 - ut.alpha * ut.alpha + ut.beta);
  return s;
}

using MeasurementFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

/// Unscented measurement update of (x, P) with z = h(x) + N(0, R).
inline void ut_update(Eigen::VectorXd& x, Eigen::MatrixXd& P, const MeasurementFn& h, const Eigen::VectorXd& z,
                      const Eigen::MatrixXd& R, const UtParams& ut = {}) {
  const auto sp = sigma_points(x, P, ut);
  const auto cols = sp.points.cols();
  Eigen::MatrixXd Y(z.size(), cols);
  for (Eigen::Index i = 0; i < cols; ++i) Y.col(i) = h(sp.points.col(i));
  const Eigen::VectorXd y_mean = Y * sp.wm;
  Eigen::MatrixXd S = R;
  Eigen::MatrixXd Pxy = Eigen::MatrixXd::Zero(x.size(), z.size());
  for (Eigen::Index i = 0; i < cols; ++i) {
    const Eigen::VectorXd dy = Y.col(i) - y_mean;
    S += sp.wc(i) * dy * dy.transpose();
    Pxy += sp.wc(i) * (sp.points.col(i) - x) * dy.transpose();
  }
  symmetrize(S);
  Eigen::LDLT<Eigen::MatrixXd> ldlt(S);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || ldlt.vectorD().minCoeff() <= 0.0) {
    throw NumericalError("UKF: innovation covariance is singular");
  }
  const Eigen::MatrixXd K = ldlt.solve(Pxy.transpose()).transpose();
  x += K * (z - y_mean);
  P -= K * S * K.transpose();
  symmetrize(P);
}

[[nodiscard]] inline KfState ukf_step(const KfState& state, const MeasurementFrame& frame, const AnchorSet& anchors,
                                      const KfModels& m, const UtParams& ut = {}) {
  KfState s = state;
  // Predict through the augmented state [x1 x2 dV dphi].
  Eigen::VectorXd xa = Eigen::VectorXd::Zero(4);
  xa.head(2) = s.mean;
  Eigen::MatrixXd Pa = Eigen::MatrixXd::Zero(4, 4);
  Pa.topLeftCorner(2, 2) = s.cov;
  Pa(2, 2) = m.sensors.sigma_speed * m.sensors.sigma_speed;
  Pa(3, 3) = m.sensors.sigma_heading * m.sensors.sigma_heading;
  const auto sp = sigma_points(xa, Pa, ut);
  Eigen::MatrixXd X(2, sp.points.cols());
  for (Eigen::Index i = 0; i < sp.points.cols(); ++i) {
    const double V = s.pending_speed + sp.points(2, i);
    const double phi = s.pending_heading + sp.points(3, i);
    X.col(i) = sp.points.col(i).head(2) + m.T * V * Eigen::Vector2d(std::cos(phi), std::sin(phi));
  }
  s.mean = X * sp.wm;
  s.cov = Eigen::MatrixXd::Zero(2, 2);
  for (Eigen::Index i = 0; i < X.cols(); ++i) {
    const Eigen::VectorXd d = X.col(i) - s.mean;
    s.cov += sp.wc(i) * d * d.transpose();
  }
  symmetrize(s.cov);

  const Eigen::VectorXd r_pred = detail::range_vector(s.mean.head<2>(), anchors);
  const Eigen::MatrixXd R = detail::range_noise(r_pred, m).asDiagonal();
  const MeasurementFn h = [&anchors](const Eigen::VectorXd& p) { return detail::range_vector(p.head<2>(), anchors); };
  ut_update(s.mean, s.cov, h, detail::to_vector(frame.ranges), R, ut);
  s.pending_speed = frame.speed;
  s.pending_heading = frame.heading;
  s.k = frame.k;
  return s;
}

// ---------------------------------------------------------------- LC-KF

[[nodiscard]] inline KfState lckf_step(const KfState& state, const MeasurementFrame& frame, const AnchorSet& anchors,
                                       const RangingGeometry& g, const KfModels& m) {
  KfState s = state;
  predict_position(s, m);
  const Vec2 p = s.mean.head<2>();
  const auto approx = true_ranges(p, anchors);
  auto vars = range_variances(approx, m.range);
  for (double& v : vars) v = std::max(v, m.variance_floor);
  const Eigen::MatrixXd W = noise_cov_inverse(approx, vars);
  const Vec2 z = wls_estimate(g, frame.ranges, W);
  const Mat2 R = lckf_measurement_cov(ranging_moments(g, W, approx, vars));
  kf_update(s.mean, s.cov, Eigen::MatrixXd::Identity(2, 2), z - p, R);
  s.pending_speed = frame.speed;
  s.pending_heading = frame.heading;
  s.k = frame.k;
  return s;
}

// ---------------------------------------------------------------- EKF-CV

[[nodiscard]] inline Vec4 cv_transition(const Vec4& p, double T) {
  return {p(0) + T * p(2) * std::cos(p(3)), p(1) + T * p(2) * std::sin(p(3)), p(2), p(3)};
}

/// Jacobian d f / d p (row i = d f_i). The transpose of the gradient matrix
/// written with rows indexed by the state.
[[nodiscard]] inline Mat4 cv_jacobian(const Vec4& p, double T) {
  Mat4 F = Mat4::Identity();
  F(0, 2) = T * std::cos(p(3));
  F(0, 3) = -T * p(2) * std::sin(p(3));
  F(1, 2) = T * std::sin(p(3));
  F(1, 3) = T * p(2) * std::cos(p(3));
  return F;
}

/// Central differences with h_j = max(1e-6, 1e-6 |p_j|).
template <class Fn>
[[nodiscard]] Eigen::MatrixXd numerical_jacobian(const Fn& f, const Eigen::VectorXd& p) {
  const Eigen::VectorXd f0 = f(p);
  Eigen::MatrixXd J(f0.size(), p.size());
  for (Eigen::Index j = 0; j < p.size(); ++j) {
    const double h = std::max(1e-6, 1e-6 * std::abs(p(j)));
    Eigen::VectorXd hi = p, lo = p;
    hi(j) += h;
    lo(j) -= h;
    J.col(j) = (f(hi) - f(lo)) / (2.0 * h);
  }
  return J;
}

[[nodiscard]] inline Eigen::VectorXd cv_measurement(const Vec4& p, const AnchorSet& anchors) {
  const auto m = static_cast<Eigen::Index>(anchors.size());
  Eigen::VectorXd h(m + 2);
  h.head(m) = detail::range_vector(p.head<2>(), anchors);
  h(m) = p(2);
  h(m + 1) = p(3);
  return h;
}

[[nodiscard]] inline KfState ekf_cv_init(const MeasurementFrame& frame, const AnchorSet& anchors, const RangingGeometry& g,
                                         const KfModels& m) {
  const KfState pos = kf2_init(frame, anchors, g, m);
  KfState s;
  s.mean = Eigen::VectorXd(4);
  s.mean << pos.mean(0), pos.mean(1), frame.speed, frame.heading;
  s.cov = Eigen::Vector4d(1.0, 1.0, 0.25, (kPi / 4) * (kPi / 4)).asDiagonal();
  s.k = frame.k;
  return s;
}

[[nodiscard]] inline KfState ekf_cv_step(const KfState& state, const MeasurementFrame& frame, const CvProcessModel& cv,
                                         const AnchorSet& anchors, const KfModels& m) {
  KfState s = state;
  const Vec4 p = s.mean;
  const auto f = [&cv](const Eigen::VectorXd& x) -> Eigen::VectorXd { return cv_transition(Vec4(x), cv.T); };
  const Eigen::MatrixXd F = numerical_jacobian(f, p);
  s.mean = cv_transition(p, cv.T);
  s.cov = F * s.cov * F.transpose() + Eigen::MatrixXd(cv.variances().asDiagonal());
  symmetrize(s.cov);

  const Vec4 pred = s.mean;
  const auto hfn = [&anchors](const Eigen::VectorXd& x) { return cv_measurement(Vec4(x), anchors); };
  const Eigen::VectorXd h = hfn(pred);
  const Eigen::MatrixXd H = numerical_jacobian(hfn, pred);
  const auto na = static_cast<Eigen::Index>(anchors.size());
  Eigen::VectorXd rdiag(na + 2);
  rdiag.head(na) = detail::range_noise(h.head(na), m);
  rdiag(na) = std::max(m.sensors.sigma_speed * m.sensors.sigma_speed, m.variance_floor);
  rdiag(na + 1) = std::max(m.sensors.sigma_heading * m.sensors.sigma_heading, m.variance_floor);
  Eigen::VectorXd z(na + 2);
  z.head(na) = detail::to_vector(frame.ranges);
  z(na) = frame.speed;
  z(na + 1) = frame.heading;
  kf_update(s.mean, s.cov, H, z - h, rdiag.asDiagonal());
  s.k = frame.k;
  return s;
}

}  // namespace paretoloc
