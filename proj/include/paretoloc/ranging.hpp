#pragma once

// Linearized weighted least squares trilateration and the closed-form
// moments of its error.
//
// Squaring r~_i = r_i + w_i and subtracting the reference (last) anchor
// gives the linear system A x = s~ with
//   A_l = 2 (s_l - s_M),  a_l = |s_l|^2 - |s_M|^2,  s~_l = r~_M^2 - r~_l^2 + a_l
// for l = 1..M-1. The error of the WLS solution is w_r = H B with
// H = (A^T W A)^{-1} A^T W and B_l = u_M - u_l, u_i = w_i^2 + 2 r_i w_i.

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "paretoloc/core.hpp"

namespace paretoloc {

struct RangingGeometry {
  Eigen::Matrix<double, Eigen::Dynamic, 2> design;  // A, (M-1) x 2
  Eigen::VectorXd offset;                           // a, M-1

  [[nodiscard]] Eigen::Index rows() const { return design.rows(); }
};

struct RangingErrorMoments {
  Vec2 mean = Vec2::Zero();         // E{w_r}
  Mat2 correlation = Mat2::Zero();  // E{w_r w_r^T}
  std::vector<double> link_variances;

  [[nodiscard]] Mat2 covariance() const { return correlation - mean * mean.transpose(); }
};

[[nodiscard]] inline RangingGeometry build_geometry(const AnchorSet& anchors) {
  const auto m = static_cast<Eigen::Index>(anchors.size());
  if (m < 3) throw GeometryError("need at least 3 anchors for planar WLS");
  RangingGeometry g;
  g.design.resize(m - 1, 2);
  g.offset.resize(m - 1);
  const Vec2& ref = anchors[anchors.size() - 1];
  for (Eigen::Index l = 0; l < m - 1; ++l) {
    const Vec2& s = anchors[static_cast<std::size_t>(l)];
    g.design.row(l) = 2.0 * (s - ref).transpose();
    g.offset(l) = s.squaredNorm() - ref.squaredNorm();
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(g.design);
  const auto sv = svd.singularValues();
  if (sv.size() < 2 || sv(1) <= 1e-9 * std::max(sv(0), 1.0)) {
    throw GeometryError("design matrix is rank deficient (collinear anchors)");
  }
  return g;
}

/// Diagonal entries 4 r^2 sigma^2 + 2 sigma^4 = Var(w^2 + 2 r w).
[[nodiscard]] inline double link_squared_error_variance(double r, double var) {
  return 4.0 * r * r * var + 2.0 * var * var;
}

/// Closed-form R^{-1} of the (M-1)x(M-1) covariance of w_s, R = D + p 1 1^T:
///   R^{-1} = (I - G 1 1^T / (1 + q)) D^{-1},  G = p D^{-1},  q = sum p / D_ll.
[[nodiscard]] inline Eigen::MatrixXd noise_cov_inverse(std::span<const double> ranges, std::span<const double> variances) {
  if (ranges.size() != variances.size() || ranges.size() < 2) {
    throw DomainError("noise_cov_inverse needs matching ranges/variances of length >= 2");
  }
  const auto n = static_cast<Eigen::Index>(ranges.size()) - 1;
  for (double v : variances) {
    if (!(v > 0.0)) throw NumericalError("noise_cov_inverse: link variances must be positive");
  }
  Eigen::VectorXd d(n);
  for (Eigen::Index l = 0; l < n; ++l) {
    d(l) = link_squared_error_variance(ranges[static_cast<std::size_t>(l)], variances[static_cast<std::size_t>(l)]);
  }
  const double p = link_squared_error_variance(ranges.back(), variances.back());
  const Eigen::VectorXd d_inv = d.cwiseInverse();
  const double q = p * d_inv.sum();
  // (I - p D^{-1} 1 1^T / (1+q)) D^{-1}
  Eigen::MatrixXd out = -(p / (1.0 + q)) * d_inv * d_inv.transpose();
  out.diagonal() += d_inv;
  return out;
}

/// Direct assembly of R = D + p 1 1^T; used to cross-check the inverse.
[[nodiscard]] inline Eigen::MatrixXd noise_cov(std::span<const double> ranges, std::span<const double> variances) {
  const auto n = static_cast<Eigen::Index>(ranges.size()) - 1;
  const double p = link_squared_error_variance(ranges.back(), variances.back());
  Eigen::MatrixXd r = Eigen::MatrixXd::Constant(n, n, p);
  for (Eigen::Index l = 0; l < n; ++l) {
    r(l, l) += link_squared_error_variance(ranges[static_cast<std::size_t>(l)], variances[static_cast<std::size_t>(l)]);
  }
  return r;
}

/// H = (A^T W A)^{-1} A^T W, the 2 x (M-1) map from s~ to the estimate.
[[nodiscard]] inline Eigen::Matrix<double, 2, Eigen::Dynamic> wls_gain(const RangingGeometry& g, const Eigen::MatrixXd& weight) {
  const Eigen::MatrixXd atw = g.design.transpose() * weight;
  const Mat2 normal = atw * g.design;
  Eigen::LDLT<Mat2> ldlt(normal);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || std::abs(normal.determinant()) <= 1e-14 * normal.squaredNorm()) {
    throw GeometryError("A^T W A is singular");
  }
  return ldlt.solve(atw);
}

[[nodiscard]] inline Eigen::VectorXd assemble_rhs(const RangingGeometry& g, std::span<const double> measured) {
  const Eigen::Index n = g.rows();
  if (static_cast<Eigen::Index>(measured.size()) != n + 1) throw DomainError("range count does not match geometry");
  const double rm2 = measured.back() * measured.back();
  Eigen::VectorXd s(n);
  for (Eigen::Index l = 0; l < n; ++l) {
    const double rl = measured[static_cast<std::size_t>(l)];
    s(l) = rm2 - rl * rl + g.offset(l);
  }
  return s;
}

[[nodiscard]] inline Vec2 wls_estimate(const RangingGeometry& g, std::span<const double> measured, const Eigen::MatrixXd& weight) {
  return wls_gain(g, weight) * assemble_rhs(g, measured);
}

/// E{w_r} = H (1 sigma_M^2 - [sigma_1^2 .. sigma_{M-1}^2]^T).
[[nodiscard]] inline Vec2 ranging_bias(const RangingGeometry& g, const Eigen::MatrixXd& weight, std::span<const double> variances) {
  const Eigen::Index n = g.rows();
  Eigen::VectorXd diff(n);
  for (Eigen::Index l = 0; l < n; ++l) diff(l) = variances.back() - variances[static_cast<std::size_t>(l)];
  return wls_gain(g, weight) * diff;
}

/// C = E{B B^T} with B_l = u_M - u_l. Off-diagonal entries as printed are
/// already symmetric in (l, j); the symmetrization below is a no-op kept so
/// any future change to the entries cannot break symmetry.
[[nodiscard]] inline Eigen::MatrixXd squared_error_correlation(std::span<const double> ranges, std::span<const double> variances) {
  const auto n = static_cast<Eigen::Index>(ranges.size()) - 1;
  const double rm = ranges.back();
  const double vm = variances.back();
  Eigen::MatrixXd c(n, n);
  for (Eigen::Index l = 0; l < n; ++l) {
    const double rl = ranges[static_cast<std::size_t>(l)];
    const double vl = variances[static_cast<std::size_t>(l)];
    for (Eigen::Index j = 0; j < n; ++j) {
      const double vj = variances[static_cast<std::size_t>(j)];
      if (l == j) {
        c(l, l) = 3 * vm * vm + 4 * rm * rm * vm + 3 * vl * vl + 4 * rl * rl * vl - 2 * vm * vl;
      } else {
        c(l, j) = 3 * vm * vm - vm * vj + 4 * rm * rm * vm - vl * vm + vl * vj;
      }
    }
  }
  return 0.5 * (c + c.transpose());
}

/// E{w_r w_r^T} = H C H^T.
[[nodiscard]] inline Mat2 ranging_second_moment(const RangingGeometry& g, const Eigen::MatrixXd& weight,
                                                std::span<const double> ranges, std::span<const double> variances) {
  const auto h = wls_gain(g, weight);
  const Mat2 out = h * squared_error_correlation(ranges, variances) * h.transpose();
  return 0.5 * (out + out.transpose());
}

[[nodiscard]] inline RangingErrorMoments ranging_moments(const RangingGeometry& g, const Eigen::MatrixXd& weight,
                                                         std::span<const double> ranges, std::span<const double> variances) {
  RangingErrorMoments m;
  m.mean = ranging_bias(g, weight, variances);
  m.correlation = ranging_second_moment(g, weight, ranges, variances);
  m.link_variances.assign(variances.begin(), variances.end());
  return m;
}

}  // namespace paretoloc
