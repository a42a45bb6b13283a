// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "paretoloc/crlb.hpp"
#include "paretoloc/simulation.hpp"
#include "paretoloc/validation.hpp"

using namespace paretoloc;

namespace {

int failures = 0;

void report(int id, const std::string& name, bool ok, const std::string& detail) {
  std::printf("%s [%d] %s: %s\n", ok ? "PASS" : "FAIL", id, name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string f(const char* format, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, format, a, b, c, d);
  return buf;
}

void scenario_a() {
  auto c = scenario_config("A");
  c.estimators = {"pareto"};
  const auto& e = run_experiment(c).get("pareto");
  report(1, "scenario A fusion RMSE in [2.5, 6.0] cm", e.rmse >= 0.025 && e.rmse <= 0.06, f("rmse %.4f m over %.0f runs", e.rmse, e.runs));
  report(2, "scenario A fraction of errors below 7 cm >= 0.90", e.cdf_at_threshold >= 0.9, f("fraction %.4f", e.cdf_at_threshold));
}

void scenario_b() {
  auto c = scenario_config("B");
  c.estimators = {"pareto"};
  const auto& e = run_experiment(c).get("pareto");
  report(3, "scenario B fusion RMSE in [3.5, 8.5] cm", e.rmse >= 0.035 && e.rmse <= 0.085, f("rmse %.4f m over %.0f runs", e.rmse, e.runs));
}

/// Number of sweep points where the fusion RMSE beats every Kalman baseline.
int sweep_wins(const std::vector<SweepPoint>& pts, std::string& detail) {
  int wins = 0;
  for (const auto& p : pts) {
    const auto& r = p.result;
    const double best = std::min({r.get("ekf").rmse, r.get("ukf").rmse, r.get("lckf").rmse});
    const double fusion = r.get("pareto").rmse;
    if (fusion < best) ++wins;
    detail += f(" %.3g:%.4f/%.4f", p.value, fusion, best);
  }
  return wins;
}

void ordering_sweeps() {
  const std::vector<std::string> est{"pareto", "ekf", "ukf", "lckf"};
  auto a = scenario_config("A");
  a.estimators = est;
  a.trajectory.T = 0.5;
  a.cv.T = 0.5;
  a.trajectory.cv.T = 0.5;
  const std::vector<double> speeds{0.1, 0.25, 0.5, 0.75, 1.0};
  std::string da;
  const int wa = sweep_wins(sweep(a, SweepParameter::speed, speeds), da);

  auto b = scenario_config("B");
  b.estimators = est;
  const std::vector<double> amax{0.1, 0.3, 0.5, 0.75, 1.0};
  std::string db;
  const int wb = sweep_wins(sweep(b, SweepParameter::a_max, amax), db);

  const bool ok = wa == static_cast<int>(speeds.size()) && wb == static_cast<int>(amax.size());
  report(4, "fusion RMSE below min(EKF, UKF, LC-KF) at every swept value", ok,
         "speed (fusion/best)" + da + "; a_max" + db);
}

void ordering_cv() {
  auto c = scenario_config("CV");
  c.runs = 200;
  c.trajectory.steps = 200;
  c.estimators = {"pareto", "ekfcv", "lckf"};
  const auto r = run_experiment(c);
  const auto &p = r.get("pareto"), &e = r.get("ekfcv"), &l = r.get("lckf");
  int ok_steps = 0, total = 0;
  for (std::size_t k = 10; k < static_cast<std::size_t>(r.steps); ++k) {
    ++total;
    if (e.step_rmse(k) <= p.step_rmse(k) && p.step_rmse(k) <= l.step_rmse(k)) ++ok_steps;
  }
  const double frac = static_cast<double>(ok_steps) / total;
  report(5, "CV ordering EKF-CV <= fusion <= LC-KF at >= 80% of steps", frac >= 0.8,
         f("fraction %.3f; rmse ekfcv %.4f fusion %.4f lckf %.4f", frac, e.rmse, p.rmse, l.rmse));
}

void crlb_dominance() {
  int violations = 0, checked = 0;
  double worst = -INFINITY;
  for (double V : {0.5, 1.0}) {
    auto c = scenario_config("A");
    c.runs = 100;
    c.estimators = {"pareto", "mse", "wls", "dr", "ekf", "ukf", "lckf"};
    c = apply_sweep_value(c, SweepParameter::speed, V, c.trajectory.steps);
    const auto r = run_experiment(c);
    const auto truth = gen_trajectory(c.trajectory, c.seed, 0);
    const AnchorSet anchors(c.anchors);
    // Uninformative prior, so the bound rests on the measurements alone.
    const Mat4 prior = Mat4::Identity() * 1e8;
    const auto bound = parcrlb_trace(truth, anchors, c.range, c.sensors, c.trajectory.T,
                                     parcrlb_initial(truth.front(), prior, anchors, c.range, c.sensors));
    for (const auto& e : r.estimators) {
      for (std::size_t k = 0; k < bound.size(); ++k) {
        ++checked;
        const double slack = bound[k] - (e.step_rmse(k) + 2 * e.step_rmse_se(k));
        worst = std::max(worst, slack);
        if (slack > 0) ++violations;
      }
    }
  }
  report(6, "ParCRLB below every per-step RMSE within 2 SE", violations == 0,
         f("%.0f violations of %.0f step checks; max bound - (rmse + 2 SE) %.3g m", violations, checked, worst));
}

}  // namespace

int main() {
  scenario_a();
  scenario_b();
  ordering_sweeps();
  ordering_cv();
  crlb_dominance();
  for (const auto& r : run_validations(ValidationOptions{})) report(r.id, r.name, r.passed, r.detail);
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
