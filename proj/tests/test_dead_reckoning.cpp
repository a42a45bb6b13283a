#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "paretoloc/dead_reckoning.hpp"

using namespace paretoloc;

TEST(DrPredict, ZeroSpeedKeepsPosition) {
  const Vec2 p = dr_predict(Vec2(1, 2), 0.0, 1.3, 0.1);
  EXPECT_EQ(p, Vec2(1, 2));
}

TEST(DrPredict, AxisAlignedMotion) {
  MeasurementFrame f;
  f.speed = 1.0;
  f.heading = 0.0;
  const Vec2 p = dr_predict(Vec2(0, 0), f, 0.1);
  EXPECT_DOUBLE_EQ(p.x(), 0.1);
  EXPECT_DOUBLE_EQ(p.y(), 0.0);
  const Vec2 q = dr_predict(Vec2(0, 0), 1.0, kPi / 2, 0.1);
  EXPECT_NEAR(q.x(), 0.0, 1e-17);
  EXPECT_DOUBLE_EQ(q.y(), 0.1);
}

TEST(DrFirstMoment, NoiselessAndQuadrature) {
  EXPECT_DOUBLE_EQ(dr_first_moment(0.7, 0.4, 0.0), 0.7 * std::cos(0.4));
  EXPECT_NEAR(dr_first_moment(1.0, kPi / 2, 0.5), 0.0, 1e-16);
  EXPECT_NEAR(dr_first_moment(0.7, 0.4, 1e-8), 0.7 * std::cos(0.4), 1e-15);
}

TEST(DrFirstMoment, MonteCarloAtPiOverEight) {
  const double s = kPi / 8;
  EXPECT_NEAR(dr_first_moment(1.0, 0.0, s), std::exp(-s * s / 2), 1e-15);
  EXPECT_NEAR(dr_first_moment(1.0, 0.0, s), 0.925791, 1e-6);
  std::mt19937_64 gen(3);
  const int n = 1000000;
  double sum = 0, sq = 0;
  for (int i = 0; i < n; ++i) {
    const double c = std::cos(gaussian(gen, s));
    sum += c;
    sq += c * c;
  }
  const double m = sum / n, se = std::sqrt((sq / n - m * m) / n);
  EXPECT_NEAR(m, dr_first_moment(1.0, 0.0, s), 3 * se);
}

TEST(DrSecondMoment, NoiselessAndQuadrature) {
  EXPECT_NEAR(dr_second_moment(0.6, 0.0, 0.3, 0.0), 0.36 * std::cos(0.3) * std::cos(0.3), 1e-15);
  EXPECT_NEAR(dr_second_moment(0.6, 0.2, kPi / 4, 0.5), (0.36 + 0.04) / 2, 1e-15);
}

TEST(DrSecondMoment, MonteCarloDerivedFormAndPrintedFormFails) {
  const double V = 0.1, sV = 0.05, s = kPi / 8;
  std::mt19937_64 gen(4);
  const int n = 1000000;
  double sum = 0, sq = 0;
  for (int i = 0; i < n; ++i) {
    const double v = V + gaussian(gen, sV);
    const double c = std::cos(gaussian(gen, s));
    const double t = v * v * c * c;
    sum += t;
    sq += t * t;
  }
  const double m = sum / n, se = std::sqrt((sq / n - m * m) / n);
  EXPECT_NEAR(m, dr_second_moment(V, sV, 0.0, s), 3 * se);
  EXPECT_GT(std::abs(m - dr_second_moment(V, sV, 0.0, s, Axis::x1, DrSecondMomentForm::sigma_only)), 3 * se);
}

TEST(DrMoments, SinAxis) {
  const auto m = dr_moments(0.5, 0.3, {0.05, 0.2});
  EXPECT_NEAR(m.first(1), 0.5 * std::sin(0.3) * std::exp(-0.02), 1e-15);
  EXPECT_NEAR(m.second(1), (0.25 + 0.0025) * (0.5 - 0.5 * std::cos(0.6) * std::exp(-0.08)), 1e-15);
}

TEST(DrMoments, RejectsNegativeSigma) { EXPECT_THROW((void)dr_first_moment(1, 0, -0.1), DomainError); }
