#pragma once

// Expectations of ratios of squared Gaussians used for the ranging block of
// the posterior Fisher information: E{q^2/(q^2+z^2)}, E{qz/(q^2+z^2)},
// their bounds, and the supporting special functions.

#include <cmath>
#include <limits>
#include <random>
#include <utility>
#include <vector>

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/polygamma.hpp>

#include "paretoloc/core.hpp"

namespace paretoloc {

inline constexpr double kEulerGamma = 0.57721566490153286061;

/// dM/da (a, b, z) at a = 0 for z <= 0, M = Kummer's confluent
/// hypergeometric function.
///
/// Power series: sum_{n>=1} (n-1)! z^n / ((b)_n n!). For z < 0 it cancels
/// badly, so the equivalent Poisson mixture is used instead:
///   dM/da(0, b, z) = -E[psi(b + N) - psi(b)],  N ~ Poisson(-z).
[[nodiscard]] inline double kummer_da_at_zero(double b, double z) {
  if (!(b > 0.0)) throw DomainError("kummer_da_at_zero: b must be positive");
  if (z > 0.0) throw DomainError("kummer_da_at_zero: only z <= 0 is supported");
  const double lambda = -z;
  if (lambda == 0.0) return 0.0;
  const double psi_b = boost::math::digamma(b);
  if (lambda < 1.0) {
    double term = z / b;  // n = 1
    double sum = term;
    for (int n = 1; n < 200 && std::abs(term) > 1e-18 * std::abs(sum); ++n) {
      term *= n * z / ((b + n) * (n + 1));
      sum += term;
    }
    return sum;
  }
  if (lambda > 1e7) {
    // Second-order delta method around the Poisson mean.
    const double x = b + lambda;
    return -(boost::math::digamma(x) + 0.5 * lambda * boost::math::polygamma(2, x) - psi_b);
  }
  const double sd = std::sqrt(lambda);
  const auto lo = static_cast<long>(std::max(0.0, std::floor(lambda - 40.0 * sd - 40.0)));
  const auto hi = static_cast<long>(std::ceil(lambda + 40.0 * sd + 40.0));
  const double log_lambda = std::log(lambda);
  double weight_sum = 0.0;
  double acc = 0.0;
  for (long n = lo; n <= hi; ++n) {
    const double nd = static_cast<double>(n);
    const double w = std::exp(nd * log_lambda - lambda - std::lgamma(nd + 1.0));
    if (w == 0.0) continue;
    weight_sum += w;
    acc += w * (boost::math::digamma(b + nd) - psi_b);
  }
  return -acc / weight_sum;
}

enum class LogMomentForm { corrected, as_printed };

/// E{ln q^2} for q ~ N(mu, sigma^2): ln sigma^2 - gamma_e - ln 2 - dM/da(0, 1/2, -mu^2/(2 sigma^2)).
/// The as-printed variant carries -2 ln sigma instead of +2 ln sigma.
[[nodiscard]] inline double expected_log_square(double mu, double sigma, LogMomentForm form = LogMomentForm::corrected) {
  if (sigma < 0.0) throw DomainError("sigma must be non-negative");
  if (sigma == 0.0) {
    if (mu == 0.0) return -std::numeric_limits<double>::infinity();
    return std::log(mu * mu);
  }
  const double log_sigma_term = form == LogMomentForm::corrected ? 2.0 * std::log(sigma) : -2.0 * std::log(sigma);
  return log_sigma_term - kEulerGamma - std::log(2.0) - kummer_da_at_zero(0.5, -mu * mu / (2.0 * sigma * sigma));
}

struct ScalarBounds {
  double lb = 0.0;
  double ub = 0.0;
};

/// Bounds on E{q^2/(q^2+z^2)}: Jensen twice gives
/// exp(E ln q^2 - ln E(q^2 + z^2)) <= E <= 1.
[[nodiscard]] inline ScalarBounds diag_bounds(double mu_q, double sigma_q, double mu_z, double sigma_z,
                                              LogMomentForm form = LogMomentForm::corrected) {
  if (sigma_q < 0.0 || sigma_z < 0.0) throw DomainError("diag_bounds: standard deviations must be >= 0");
  const double total = sigma_q * sigma_q + mu_q * mu_q + sigma_z * sigma_z + mu_z * mu_z;
  if (!(total > 0.0)) throw DomainError("diag_bounds: q and z are both identically zero");
  const double alpha = expected_log_square(mu_q, sigma_q, form);
  return {std::exp(alpha - std::log(total)), 1.0};
}

[[nodiscard]] inline constexpr ScalarBounds offdiag_bounds() { return {-0.5, 0.5}; }

/// Central moments mu_1..mu_n of a noncentral chi-squared variable with one
/// degree of freedom and noncentrality lambda. Built from the cumulants
/// kappa_j = 2^{j-1} (j-1)! (1 + j lambda) with kappa_1 removed.
[[nodiscard]] inline std::vector<double> noncentral_chi2_central_moments(double lambda, int n) {
  if (lambda < 0.0) throw DomainError("noncentrality must be non-negative");
  std::vector<double> kappa(static_cast<std::size_t>(n + 1), 0.0);
  double fact = 1.0;  // (j-1)!
  for (int j = 1; j <= n; ++j) {
    if (j > 1) fact *= (j - 1);
    kappa[static_cast<std::size_t>(j)] = std::ldexp(fact, j - 1) * (1.0 + j * lambda);
  }
  kappa[1] = 0.0;
  // m_j = sum_{i=0}^{j-1} C(j-1, i) kappa_{i+1} m_{j-1-i}
  std::vector<double> m(static_cast<std::size_t>(n + 1), 0.0);
  m[0] = 1.0;
  for (int j = 1; j <= n; ++j) {
    double binom = 1.0;
    double s = 0.0;
    for (int i = 0; i <= j - 1; ++i) {
      if (i > 0) binom *= static_cast<double>(j - i) / i;
      s += binom * kappa[static_cast<std::size_t>(i + 1)] * m[static_cast<std::size_t>(j - 1 - i)];
    }
    m[static_cast<std::size_t>(j)] = s;
  }
  return {m.begin() + 1, m.end()};
}

struct SeriesValue {
  double value = 0.0;
  double error = 0.0;  // estimated absolute error
  int terms = 0;       // correction terms kept
};

namespace detail {

/// 1 + sum_{k>=1} (-1)^k c_k for an asymptotic series: terms are kept while
/// their magnitude keeps decreasing (optimal truncation); the error estimate
/// is the first omitted magnitude. The first term that is not below the
/// previous one ends the sum.
inline SeriesValue truncated_alternating_sum(const std::vector<double>& coeffs) {
  SeriesValue out;
  out.value = 1.0;
  double prev = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < coeffs.size(); ++i) {
    const double term = ((i + 1) % 2 == 0 ? 1.0 : -1.0) * coeffs[i];
    const double mag = std::abs(term);
    if (mag == 0.0) continue;
    if (mag >= prev) {
      out.error = mag;
      return out;
    }
    out.value += term;
    out.terms = static_cast<int>(i + 1);
    prev = mag;
    out.error = 0.0;
  }
  if (!coeffs.empty()) out.error = std::abs(coeffs.back());
  return out;
}

}  // namespace detail

struct DiagSeriesResult {
  double value = 0.0;
  double error = 0.0;
  double upsilon = 0.0;
  double upsilon_error = 0.0;
  int upsilon_terms = 0;
  int ratio_terms = 0;
};

/// Series evaluation of E{q^2/(q^2+z^2)} for sigma_q == sigma_z:
///   E = 1/(1+U) [1 + sum (-1)^k muF_k/(1+U)^k],
///   U = (mu_z^2+s^2)/(mu_q^2+s^2) [1 + sum (-1)^k mu_k/(1+lambda)^k]
/// with mu_k the noncentral chi-squared central moments (lambda =
/// mu_q^2/s^2) and muF_k the central moments of z^2/q^2 about U, estimated
/// from `mc_samples` draws. Both series are asymptotic; each is cut at its
/// smallest term. Throws NumericalError when the first correction of either
/// series already exceeds the leading term.
[[nodiscard]] inline DiagSeriesResult diag_expectation_series(double mu_q, double sigma_q, double mu_z, double sigma_z,
                                                              int truncation = 30, std::size_t mc_samples = 1000000,
                                                              std::uint64_t seed = 12345) {
  if (std::abs(sigma_q - sigma_z) > 1e-12 * std::max(sigma_q, sigma_z)) {
    throw DomainError("diag_expectation_series requires sigma_q == sigma_z");
  }
  if (!(sigma_q > 0.0)) throw DomainError("diag_expectation_series requires sigma > 0");
  const double s2 = sigma_q * sigma_q;
  const double lambda = mu_q * mu_q / s2;
  const auto mu = noncentral_chi2_central_moments(lambda, truncation);
  std::vector<double> c(mu.size());
  for (std::size_t k = 0; k < mu.size(); ++k) c[k] = mu[k] / std::pow(1.0 + lambda, static_cast<double>(k + 1));
  if (c.size() >= 2 && c[1] >= 1.0) throw NumericalError("ratio series diverges: use the Monte Carlo estimate instead");
  const auto ups = detail::truncated_alternating_sum(c);
  const double pre = (mu_z * mu_z + s2) / (mu_q * mu_q + s2);

  DiagSeriesResult r;
  r.upsilon = pre * ups.value;
  r.upsilon_error = pre * ups.error;
  r.upsilon_terms = ups.terms;

  // Central moments of F = z^2/q^2 about U, with per-moment standard errors.
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> nq(mu_q, sigma_q), nz(mu_z, sigma_z);
  const auto K = static_cast<std::size_t>(truncation);
  std::vector<double> sum(K, 0.0), sum_sq(K, 0.0);
  for (std::size_t i = 0; i < mc_samples; ++i) {
    const double q = nq(gen);
    const double z = nz(gen);
    const double d = z * z / (q * q) - r.upsilon;
    double p = 1.0;
    for (std::size_t k = 0; k < K; ++k) {
      p *= d;
      sum[k] += p;
      sum_sq[k] += p * p;
    }
  }
  const double n = static_cast<double>(mc_samples);
  const double scale = 1.0 + r.upsilon;
  std::vector<double> cf(K), se(K);
  for (std::size_t k = 0; k < K; ++k) {
    const double mean = sum[k] / n;
    const double var = std::max(0.0, sum_sq[k] / n - mean * mean);
    const double denom = std::pow(scale, static_cast<double>(k + 1));
    cf[k] = mean / denom;
    se[k] = std::sqrt(var / n) / denom;
  }
  if (!cf.empty() && std::abs(cf[0]) >= 1.0) throw NumericalError("F-moment series diverges: use the Monte Carlo estimate instead");
  const auto outer = detail::truncated_alternating_sum(cf);
  double mc_err_sq = 0.0;
  for (int k = 0; k < outer.terms; ++k) mc_err_sq += se[static_cast<std::size_t>(k)] * se[static_cast<std::size_t>(k)];

  r.ratio_terms = outer.terms;
  r.value = outer.value / scale;
  // Sensitivity of the leading 1/(1+U) to the error in U.
  const double upsilon_part = r.upsilon_error / (scale * scale);
  r.error = (outer.error + std::sqrt(mc_err_sq)) / scale + upsilon_part;
  return r;
}

struct McEstimate {
  double mean = 0.0;
  double se = 0.0;
};

/// Direct Monte Carlo of E{q^2/(q^2+z^2)} and E{qz/(q^2+z^2)}.
[[nodiscard]] inline std::pair<McEstimate, McEstimate> mc_ratio_moments(double mu_q, double sigma_q, double mu_z, double sigma_z,
                                                                      std::size_t samples, std::mt19937_64& gen) {
  std::normal_distribution<double> n01(0.0, 1.0);
  double s1 = 0, s1q = 0, s2 = 0, s2q = 0;
  for (std::size_t i = 0; i < samples; ++i) {
    const double q = mu_q + sigma_q * n01(gen);
    const double z = mu_z + sigma_z * n01(gen);
    const double den = q * q + z * z;
    if (den == 0.0) continue;
    const double a = q * q / den;
    const double b = q * z / den;
    s1 += a;
    s1q += a * a;
    s2 += b;
    s2q += b * b;
  }
  const double n = static_cast<double>(samples);
  auto finish = [n](double s, double sq) {
    const double m = s / n;
    return McEstimate{m, std::sqrt(std::max(0.0, sq / n - m * m) / n)};
  };
  return {finish(s1, s1q), finish(s2, s2q)};
}

}  // namespace paretoloc
