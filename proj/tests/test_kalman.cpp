#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "paretoloc/kalman.hpp"
#include "paretoloc/simulation.hpp"

using namespace paretoloc;

namespace {

struct Fixture {
  AnchorSet anchors = AnchorSet::square(20);
  RangingGeometry g = build_geometry(anchors);
};

std::vector<MeasurementFrame> frames_for(const std::vector<TruthState>& truth, const AnchorSet& anchors, const RangeNoiseModel& range,
                                         const SensorNoiseModel& sensors, std::uint64_t seed) {
  RngStreams rng(seed, 0);
  std::vector<MeasurementFrame> out;
  for (const auto& s : truth) out.push_back(synthesize_measurements(s, anchors, rng, range, sensors));
  return out;
}

std::vector<TruthState> curved_truth(int steps) {
  TrajectorySpec spec;
  spec.kind = TrajectoryKind::pwl;
  spec.steps = steps;
  spec.initial = {{10, 10}, 0.5, 0.0, 0};
  return gen_trajectory(spec, 4);
}

}  // namespace

TEST(Ekf, ZeroNoiseTracksTruth) {
  Fixture f;
  const auto truth = curved_truth(200);
  const RangeNoiseModel range{0.0, 0.25};
  const SensorNoiseModel sensors{0.0, 0.0};
  const KfModels m{range, sensors, 0.1};
  const auto frames = frames_for(truth, f.anchors, range, sensors, 1);
  auto ekf = kf2_init(frames[0], f.anchors, f.g, m);
  auto ukf = ekf, lckf = ekf;
  for (std::size_t k = 1; k < frames.size(); ++k) {
    ekf = ekf_step(ekf, frames[k], f.anchors, m);
    ukf = ukf_step(ukf, frames[k], f.anchors, m);
    lckf = lckf_step(lckf, frames[k], f.anchors, f.g, m);
    EXPECT_LT((ekf.mean.head<2>() - truth[k].position).norm(), 1e-6);
    EXPECT_LT((ukf.mean.head<2>() - truth[k].position).norm(), 1e-6);
    EXPECT_LT((lckf.mean.head<2>() - truth[k].position).norm(), 1e-6);
  }
}

TEST(Kalman, CovarianceStaysPsdOverManySteps) {
  Fixture f;
  const auto truth = curved_truth(10000);
  const KfModels m{RangeNoiseModel{}, SensorNoiseModel{}, 0.1, 1e-20};
  const auto frames = frames_for(truth, f.anchors, m.range, m.sensors, 2);
  auto ekf = kf2_init(frames[0], f.anchors, f.g, m);
  auto ukf = ekf, lckf = ekf;
  double worst = INFINITY;
  for (std::size_t k = 1; k < frames.size(); ++k) {
    ekf = ekf_step(ekf, frames[k], f.anchors, m);
    ukf = ukf_step(ukf, frames[k], f.anchors, m);
    lckf = lckf_step(lckf, frames[k], f.anchors, f.g, m);
    worst = std::min({worst, min_eigenvalue(ekf.cov), min_eigenvalue(ukf.cov), min_eigenvalue(lckf.cov)});
  }
  EXPECT_GE(worst, 0.0);
}

TEST(Ukf, LinearMeasurementEqualsKalmanUpdate) {
  Eigen::VectorXd x(2);
  x << 1.0, -2.0;
  Eigen::MatrixXd P(2, 2);
  P << 0.5, 0.1, 0.1, 0.3;
  Eigen::MatrixXd H(3, 2);
  H << 1, 0, 0.5, 2, -1, 1;
  Eigen::MatrixXd R = Eigen::Vector3d(0.2, 0.1, 0.3).asDiagonal();
  Eigen::VectorXd z(3);
  z << 1.2, -3.0, -2.5;
  Eigen::VectorXd xk = x, xu = x;
  Eigen::MatrixXd Pk = P, Pu = P;
  kf_update(xk, Pk, H, z - H * x, R);
  ut_update(xu, Pu, [&H](const Eigen::VectorXd& s) -> Eigen::VectorXd { return H * s; }, z, R);
  EXPECT_LT((xk - xu).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LT((Pk - Pu).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Ukf, ScenarioBWithinThirtyPercentOfEkf) {
  auto cfg = scenario_config("B");
  cfg.estimators = {"ekf", "ukf"};
  const auto r = run_experiment(cfg);
  const double ekf = r.get("ekf").rmse, ukf = r.get("ukf").rmse;
  EXPECT_EQ(r.get("ekf").excluded + r.get("ukf").excluded, 0);
  EXPECT_NEAR(ukf / ekf, 1.0, 0.3) << "ekf " << ekf << " ukf " << ukf;
}

TEST(Lckf, MeasurementCovarianceFloored) {
  RangingErrorMoments mom;
  mom.mean = Vec2(0.3, 0.0);
  mom.correlation << 0.05, 0.0, 0.0, 0.01;  // covariance has a negative eigenvalue
  const Mat2 c = lckf_measurement_cov(mom);
  EXPECT_GE(Eigen::SelfAdjointEigenSolver<Mat2>(c).eigenvalues().minCoeff(), 1e-12 * (1 - 1e-9));
}

TEST(EkfCv, ZeroNoiseTracksTruth) {
  Fixture f;
  TrajectorySpec spec;
  spec.kind = TrajectoryKind::cv;
  spec.steps = 100;
  spec.initial = {{6, 10}, 0.5, 0.3, 0};
  spec.cv = CvProcessModel(0.0, 0.0, 0.0, 0.1);
  const auto truth = gen_trajectory(spec, 1);
  const RangeNoiseModel range{0.0, 0.25};
  const SensorNoiseModel sensors{0.0, 0.0};
  const KfModels m{range, sensors, 0.1};
  const auto frames = frames_for(truth, f.anchors, range, sensors, 1);
  auto s = ekf_cv_init(frames[0], f.anchors, f.g, m);
  for (std::size_t k = 1; k < frames.size(); ++k) {
    s = ekf_cv_step(s, frames[k], spec.cv, f.anchors, m);
    EXPECT_LT((s.mean.head<2>() - truth[k].position).norm(), 1e-6);
  }
}

TEST(EkfCv, AnalyticJacobianMatchesFiniteDifferences) {
  std::mt19937_64 gen(8);
  std::uniform_real_distribution<double> u(-5, 5);
  for (int trial = 0; trial < 100; ++trial) {
    const Vec4 p(u(gen), u(gen), u(gen) / 5, u(gen));
    const auto f = [](const Eigen::VectorXd& x) -> Eigen::VectorXd { return cv_transition(Vec4(x), 0.1); };
    const Eigen::MatrixXd num = numerical_jacobian(f, p);
    EXPECT_LE((num - cv_jacobian(p, 0.1)).cwiseAbs().maxCoeff(), 1e-6);
  }
}

TEST(KfUpdate, SingularInnovationThrows) {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(2);
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(2, 2);
  EXPECT_THROW(kf_update(x, P, Eigen::MatrixXd::Identity(2, 2), Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Zero(2, 2)), NumericalError);
}
