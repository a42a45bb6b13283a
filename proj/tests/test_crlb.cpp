#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "paretoloc/crlb.hpp"
#include "paretoloc/simulation.hpp"
#include "paretoloc/validation.hpp"

using namespace paretoloc;

namespace {

const CvProcessModel kCv(1e-4, 1e-4, 1e-3, 0.1);

/// Samples (V_k, phi_k) of the CV random walk started at (V0, phi0) at k = 1.
std::pair<double, double> sample_kinematics(std::mt19937_64& gen, double V0, double phi0, const CvProcessModel& cv, int k) {
  double V = V0, phi = phi0;
  for (int j = 1; j < k; ++j) {
    V += gaussian(gen, std::sqrt(cv.sigma3_sq));
    phi += gaussian(gen, std::sqrt(cv.sigma4_sq));
  }
  return {V, phi};
}

}  // namespace

TEST(ParCrlb, StaticNodeInformationIsSumOfBearingOuterProducts) {
  const auto anchors = AnchorSet::square(10);
  const RangeNoiseModel range;
  const Vec2 p(5, 5);
  Mat2 hand = Mat2::Zero();
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    const Vec2 d = (p - anchors[i]).normalized();
    hand += d * d.transpose() / range_variance((p - anchors[i]).norm(), range);
  }
  const Mat4 J = measurement_information(Vec4(p.x(), p.y(), 0, 0), anchors, range, {0.05, 0.4});
  EXPECT_TRUE((J.topLeftCorner<2, 2>().isApprox(hand, 1e-14)));
  EXPECT_TRUE(pi_at(p, anchors, range).isApprox(hand, 1e-14));
}

TEST(ParCrlb, DoublingVariancesHalvesInformation) {
  const auto anchors = AnchorSet::square(20);
  TrajectorySpec spec;
  spec.steps = 50;
  spec.initial = {{3, 9}, 0.5, 0.2, 0};
  const auto truth = gen_trajectory(spec, 1);
  const RangeNoiseModel r1{0.0625, 0.25}, r2{0.125, 0.25};
  const SensorNoiseModel s1{0.05, 0.3}, s2{0.05 * std::sqrt(2.0), 0.3 * std::sqrt(2.0)};
  std::vector<Mat4> i1, i2;
  const auto b1 = parcrlb_trace(truth, anchors, r1, s1, spec.T, measurement_information(truth[0].as_vector(), anchors, r1, s1), &i1);
  const auto b2 = parcrlb_trace(truth, anchors, r2, s2, spec.T, measurement_information(truth[0].as_vector(), anchors, r2, s2), &i2);
  for (std::size_t k = 0; k < truth.size(); ++k) {
    EXPECT_TRUE(i2[k].isApprox(0.5 * i1[k], 1e-10));
    EXPECT_NEAR(b2[k], std::sqrt(2.0) * b1[k], 1e-10);
  }
  for (std::size_t k = 1; k < b1.size(); ++k) EXPECT_LE(b1[k], b1[k - 1] * (1 + 1e-12));
}

TEST(TrigMoments, DeterministicLimits) {
  const auto t = trig_moments(0.5, 0.7, 1e-3, 0.0, 9);
  EXPECT_DOUBLE_EQ(t.eps, 1.0);
  EXPECT_NEAR(t.mean_cos(), std::cos(0.7), 1e-15);
  EXPECT_NEAR(t.mean_sin_cos(), std::sin(0.7) * std::cos(0.7), 1e-15);
  EXPECT_NEAR(t.mean_cos_sq(), std::cos(0.7) * std::cos(0.7), 1e-15);
  const auto t1 = trig_moments(0.5, 0.7, 1e-3, 0.2, 1);
  EXPECT_DOUBLE_EQ(t1.eps, 1.0);
  EXPECT_DOUBLE_EQ(t1.mean_speed_sq(), 0.25);
  EXPECT_THROW((void)trig_moments(0.5, 0.7, 1e-3, 0.2, 0), DomainError);
}

TEST(TrigMoments, MonteCarloAtStepTwenty) {
  const CvProcessModel cv(1e-4, 0.01, 0.05, 0.1);
  const double V0 = 0.5, phi0 = 0.6;
  const int k = 20, n = 1000000;
  std::mt19937_64 gen(3);
  double s[7] = {}, sq[7] = {};
  for (int i = 0; i < n; ++i) {
    const auto [V, phi] = sample_kinematics(gen, V0, phi0, cv, k);
    const double v[7] = {V, V * V, std::cos(phi), std::sin(phi), std::sin(phi) * std::cos(phi), std::pow(std::cos(phi), 2),
                         std::pow(std::sin(phi), 2)};
    for (int j = 0; j < 7; ++j) {
      s[j] += v[j];
      sq[j] += v[j] * v[j];
    }
  }
  const auto t = trig_moments(V0, phi0, cv.sigma3_sq, cv.sigma4_sq, k);
  const double pred[7] = {t.mean_speed(), t.mean_speed_sq(), t.mean_cos(), t.mean_sin(), t.mean_sin_cos(), t.mean_cos_sq(), t.mean_sin_sq()};
  for (int j = 0; j < 7; ++j) {
    const double m = s[j] / n, se = std::sqrt((sq[j] / n - m * m) / n);
    EXPECT_NEAR(m, pred[j], 3 * se) << "moment " << j;
  }
  const auto tp = trig_moments(V0, phi0, cv.sigma3_sq, cv.sigma4_sq, k, TrigMomentForm::as_printed);
  const double m4 = s[4] / n, se4 = std::sqrt((sq[4] / n - m4 * m4) / n);
  EXPECT_GT(std::abs(m4 - tp.mean_sin_cos()), 3 * se4);
}

TEST(D11, SymmetricAndOffDiagonalsVanishForLargeK) {
  const auto t = trig_moments(0.5, 0.4, kCv.sigma3_sq, kCv.sigma4_sq, 6);
  const Mat4 D = d11(t, kCv);
  EXPECT_EQ(D, D.transpose());
  const CvProcessModel noisy(1e-4, 1e-4, 0.1, 0.1);
  const Mat4 L = d11(trig_moments(0.5, 0.4, noisy.sigma3_sq, noisy.sigma4_sq, 1000), noisy);
  for (auto [i, j] : {std::pair{0, 2}, {0, 3}, {1, 2}, {1, 3}}) EXPECT_NEAR(L(i, j) * noisy.sigma1_sq, 0.0, 1e-15);
}

TEST(D11D12, MonteCarloOracle) {
  const CvProcessModel cv(1e-4, 0.01, 0.05, 0.1);
  const double V0 = 0.5, phi0 = 0.4;
  const int k = 6, n = 1000000;
  const Mat4 Qinv = cv.variances().cwiseInverse().asDiagonal();
  std::mt19937_64 gen(5);
  Mat4 s11 = Mat4::Zero(), q11 = Mat4::Zero(), s12 = Mat4::Zero(), q12 = Mat4::Zero();
  for (int i = 0; i < n; ++i) {
    const auto [V, phi] = sample_kinematics(gen, V0, phi0, cv, k);
    const Mat4 F = cv_jacobian(Vec4(0, 0, V, phi), cv.T);
    const Mat4 a = F.transpose() * Qinv * F;
    const Mat4 b = -F.transpose() * Qinv;
    s11 += a;
    q11 += a.cwiseProduct(a);
    s12 += b;
    q12 += b.cwiseProduct(b);
  }
  const auto t = trig_moments(V0, phi0, cv.sigma3_sq, cv.sigma4_sq, k);
  const Mat4 m11 = s11 / n, se11 = ((q11 / n - m11.cwiseProduct(m11)).cwiseMax(0.0) / n).cwiseSqrt();
  const Mat4 m12 = s12 / n, se12 = ((q12 / n - m12.cwiseProduct(m12)).cwiseMax(0.0) / n).cwiseSqrt();
  const Mat4 D11 = d11(t, cv), D12 = d12(t, cv), P11 = d11(t, cv, D11Form::as_printed);
  // Entries that vanish analytically carry per-sample rounding; floor the
  // tolerance at 1e-15 of the matrix scale.
  const double f11 = 1e-15 * D11.cwiseAbs().maxCoeff(), f12 = 1e-15 * D12.cwiseAbs().maxCoeff();
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      EXPECT_LE(std::abs(m11(i, j) - D11(i, j)), 3 * se11(i, j) + 1e-9 * std::abs(D11(i, j)) + f11) << i << "," << j;
      EXPECT_LE(std::abs(m12(i, j) - D12(i, j)), 3 * se12(i, j) + 1e-9 * std::abs(D12(i, j)) + f12) << i << "," << j;
    }
  }
  EXPECT_GT(std::abs(m11(3, 3) - P11(3, 3)), 3 * se11(3, 3));
}

TEST(D12, StructuralEntries) {
  const auto t = trig_moments(0.5, 0.4, kCv.sigma3_sq, kCv.sigma4_sq, 3);
  const Mat4 D = d12(t, kCv);
  EXPECT_DOUBLE_EQ(D(0, 0), -1 / kCv.sigma1_sq);
  EXPECT_DOUBLE_EQ(D(1, 1), -1 / kCv.sigma2_sq);
  EXPECT_EQ(D(0, 1), 0.0);
  const CvProcessModel wild(1e-4, 1e-4, 1e6, 0.1);
  const Mat4 W = d12(trig_moments(0.5, 0.4, wild.sigma3_sq, wild.sigma4_sq, 2), wild);
  for (int j = 0; j < 2; ++j) {
    EXPECT_EQ(W(2, j), 0.0);
    EXPECT_EQ(W(3, j), 0.0);
  }
  EXPECT_DOUBLE_EQ(W(2, 2), -1 / wild.sigma3_sq);
  EXPECT_DOUBLE_EQ(W(3, 3), -1 / wild.sigma4_sq);
}

TEST(DBlocks, RequirePositiveProcessNoise) {
  const CvProcessModel zero(0.0, 0.0, 0.0, 0.1);
  const auto t = trig_moments(0.5, 0, 0, 0, 1);
  EXPECT_THROW((void)d11(t, zero), NumericalError);
  EXPECT_THROW((void)d12(t, zero), NumericalError);
}

TEST(D22, ZeroPiSymmetryAndOrdering) {
  const SensorNoiseModel sensors{0.05, 0.3};
  const Mat4 D = d22(kCv, Mat2::Zero(), sensors);
  Mat4 expect = kCv.variances().cwiseInverse().asDiagonal();
  expect(2, 2) += 1 / (0.05 * 0.05);
  expect(3, 3) += 1 / (0.3 * 0.3);
  EXPECT_TRUE(D.isApprox(expect));
  Mat2 lo, hi;
  lo << 1.0, -0.5, -0.5, 2.0;
  hi << 3.0, 0.5, 0.5, 4.0;
  const auto t = trig_moments(0.5, 0.4, kCv.sigma3_sq, kCv.sigma4_sq, 4);
  const Mat4 J = 100 * Mat4::Identity();
  const Eigen::MatrixXd Jl = pcrlb_recursion(J, d11(t, kCv), d12(t, kCv), d22(kCv, lo, sensors));
  const Eigen::MatrixXd Ju = pcrlb_recursion(J, d11(t, kCv), d12(t, kCv), d22(kCv, hi, sensors));
  EXPECT_TRUE((Jl.array() <= Ju.array() + 1e-9).all());
  EXPECT_EQ(Jl, Jl.transpose());
  const Mat4 Dh = d22(kCv, hi, sensors);
  EXPECT_EQ(Dh, Dh.transpose());
}

TEST(PiExpectation, PointMassSymmetryAndBounds) {
  const auto anchors = AnchorSet::square(20);
  const RangeNoiseModel range;
  const std::vector<Vec2> point(10, Vec2(7, 12));
  const auto pm = pi_expectation_mc(point, anchors, range);
  EXPECT_TRUE(pm.mean.isApprox(pi_at(Vec2(7, 12), anchors, range), 1e-12));
  EXPECT_LT(pm.se.maxCoeff(), 1e-12);

  std::mt19937_64 gen(6);
  std::vector<Vec2> cloud;
  for (int i = 0; i < 200000; ++i) cloud.emplace_back(10 + gaussian(gen, 1.0), 10 + gaussian(gen, 1.0));
  const auto sym = pi_expectation_mc(cloud, anchors, range);
  EXPECT_NEAR(sym.mean(0, 1), 0.0, 3 * sym.se(0, 1));

  std::vector<Vec2> small;
  for (int i = 0; i < 200000; ++i) small.emplace_back(7 + gaussian(gen, 0.3), 12 + gaussian(gen, 0.3));
  const auto e = pi_expectation_mc(small, anchors, range);
  const auto b = pi_bounds(Vec2(7, 12), 0.3, anchors, range);
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      EXPECT_LE(b.lb(i, j), e.mean(i, j));
      EXPECT_LE(e.mean(i, j), b.ub(i, j));
    }
  }
}

TEST(Gershgorin, DominantInputUnchanged) {
  Eigen::MatrixXd J(3, 3);
  J << 10, 1, 2, 1, 12, -3, 2, -3, 15;
  const auto g = gershgorin_sandwich(J, J);
  EXPECT_EQ(g.lower, J);
  EXPECT_EQ(g.upper, J);
  EXPECT_EQ(g.repaired_rows, 0);
}

TEST(Gershgorin, TwoByTwoInflation) {
  Eigen::MatrixXd ub(2, 2), lb(2, 2);
  ub << 1, 5, 5, 1;
  lb << 0.5, 4, 4, 0.5;
  const double eps = 1e-6;
  const auto g = gershgorin_bounds_only(lb, ub, eps);
  EXPECT_DOUBLE_EQ(g.upper(0, 0), 5 + eps);
  EXPECT_DOUBLE_EQ(g.upper(1, 1), 5 + eps);
}

TEST(Gershgorin, RejectsBadInput) {
  const Eigen::MatrixXd a = Eigen::MatrixXd::Identity(2, 2);
  EXPECT_THROW((void)gershgorin_sandwich(2 * a, a), DomainError);
  EXPECT_THROW((void)gershgorin_bounds_only(a, a, 0.0), DomainError);
}

TEST(Gershgorin, RandomPairsArePsdOrdered) {
  ValidationOptions o;
  o.pcrlb_ensemble = 500;
  const auto r = check_gershgorin(o);
  EXPECT_TRUE(r.passed) << r.detail;
}

TEST(PcrlbRecursion, DecoupledAndScalarFixedPoint) {
  const auto r = check_pcrlb_sanity({});
  EXPECT_TRUE(r.passed) << r.detail;
  // a = 0.9, q = 0.5, h = 1, r = 0.2: P solves h^2 a^2 P^2 + (h^2 q + r(1-a^2)) P - r q = 0.
  const double P = (-(0.5 + 0.2 * 0.19) + std::sqrt(std::pow(0.5 + 0.2 * 0.19, 2) + 4 * 0.81 * 0.1)) / (2 * 0.81);
  EXPECT_NEAR(scalar_information_fixed_point(0.9, 0.5, 1.0, 0.2), 1 / P, 1e-12);
  // P is the fixed point of the covariance Riccati map.
  const double prior = 0.81 * P + 0.5;
  EXPECT_NEAR(1 / P, 1 / prior + 1 / 0.2, 1e-12);
}

TEST(PcrlbCv, BoundsOrderedAndFinite) {
  const auto cfg = scenario_config("CV");
  PcrlbConfig pc;
  pc.ensemble = 2000;
  const Mat4 prior = Vec4(0.01, 0.01, 0.0025, 0.0025).asDiagonal();
  const auto steps = pcrlb_cv(cfg.trajectory.initial.as_vector(), prior, 100, cfg.cv, AnchorSet(cfg.anchors), cfg.range, cfg.sensors, pc);
  ASSERT_EQ(steps.size(), 100u);
  for (const auto& s : steps) {
    EXPECT_TRUE(std::isfinite(s.bound));
    EXPECT_LE(s.bound_lb, s.bound_ub * (1 + 1e-12));
    EXPECT_EQ(s.J, s.J.transpose());
  }
}
