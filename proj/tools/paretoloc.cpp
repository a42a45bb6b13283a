// Command line front end: run, sweep, crlb, validate-lemmas.
//
// Exit codes: 0 success, 1 failed validation, 2 bad arguments or config,
// 3 runtime failure.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "paretoloc/config.hpp"
#include "paretoloc/csv.hpp"
#include "paretoloc/validation.hpp"

using namespace paretoloc;

namespace {

struct CommonOptions {
  std::string scenario;
  std::string estimators;
  std::optional<std::uint64_t> seed;
  std::optional<int> runs;
  std::optional<int> steps;
  std::optional<double> T;
  std::optional<double> speed;
  std::optional<double> amax;
  std::string config;
  std::string out;
};

void add_common(CLI::App* app, CommonOptions& o) {
  app->add_option("--scenario", o.scenario, "Scenario preset")->check(CLI::IsMember({"A", "B", "CV"}));
  app->add_option("--estimators", o.estimators, "Comma-separated estimators (pareto,mse,wls,dr,ekf,ukf,lckf,ekfcv or all)");
  app->add_option("--seed", o.seed, "Base RNG seed");
  app->add_option("--runs", o.runs, "Monte Carlo realizations");
  app->add_option("--steps", o.steps, "Steps per trajectory");
  app->add_option("--T", o.T, "Sampling period [s]");
  app->add_option("--speed", o.speed, "Initial / constant speed [m/s]");
  app->add_option("--amax", o.amax, "Maximum acceleration of the PWL trajectory [m/s^2]");
  app->add_option("--config", o.config, "JSON config file")->check(CLI::ExistingFile);
  app->add_option("--out", o.out, "Output CSV file (stdout if omitted)");
}

/// Config file (or scenario preset) with the command line overrides applied.
FullConfig resolve(const CommonOptions& o, const std::string& default_scenario) {
  FullConfig fc;
  if (!o.config.empty()) {
    fc = load_config_file(o.config);
    if (!o.scenario.empty() && o.scenario != fc.experiment.scenario) {
      throw ConfigError("--scenario " + o.scenario + " conflicts with the config file's scenario " + fc.experiment.scenario);
    }
  } else {
    nlohmann::json j = {{"scenario", o.scenario.empty() ? default_scenario : o.scenario}};
    fc = parse_config(j);
  }
  auto& c = fc.experiment;
  if (!o.estimators.empty()) c.estimators = parse_estimator_list(o.estimators);
  if (o.seed) c.seed = *o.seed;
  if (o.runs) c.runs = *o.runs;
  if (o.steps) c.trajectory.steps = *o.steps;
  if (o.T) {
    c.trajectory.T = *o.T;
    c.cv.T = *o.T;
  }
  c.trajectory.cv = c.cv;
  if (o.speed) c.trajectory.initial.speed = *o.speed;
  if (o.amax) c.trajectory.a_max = *o.amax;
  validate_config(c);
  return fc;
}

/// Writes through `fn` to the --out file, or stdout.
template <class Fn>
void emit(const std::string& path, Fn fn) {
  if (path.empty()) {
    fn(std::cout);
    return;
  }
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot open output file '" + path + "'");
  fn(f);
  if (!f) throw std::runtime_error("failed writing '" + path + "'");
}

void report_failures(const RunResult& r) {
  for (const auto& e : r.estimators) {
    for (const auto& f : e.failures) std::cerr << "excluded " << e.name << " " << f << "\n";
  }
}

int cmd_run(const CommonOptions& o, const std::string& summary_path) {
  const auto fc = resolve(o, "A");
  const auto& c = fc.experiment;
  const auto res = run_experiment(c);
  report_failures(res);
  emit(o.out, [&](std::ostream& os) { write_trace_csv(os, res, c.estimators); });
  if (!summary_path.empty()) {
    emit(summary_path, [&](std::ostream& os) { write_summary_csv(os, res); });
  } else {
    write_summary_csv(o.out.empty() ? std::cerr : std::cout, res);
  }
  return 0;
}

int cmd_sweep(const CommonOptions& o, const std::string& param, const std::vector<double>& values) {
  auto fc = resolve(o, "A");
  SweepSpec spec = fc.sweep.value_or(SweepSpec{});
  if (!param.empty()) {
    try {
      spec.parameter = parse_sweep_parameter(param);
    } catch (const DomainError& e) {
      throw ConfigError(e.what());
    }
    if (!fc.sweep || fc.sweep->parameter != spec.parameter) spec.values = default_sweep_values(spec.parameter);
  }
  if (spec.values.empty()) spec.values = default_sweep_values(spec.parameter);
  if (!values.empty()) spec.values = values;
  for (double v : spec.values) {
    if (!(v > 0) && !(spec.parameter == SweepParameter::a_max && v == 0)) throw ConfigError("sweep values must be positive");
  }
  const auto points = sweep(fc.experiment, spec.parameter, spec.values);
  for (const auto& p : points) report_failures(p.result);
  emit(o.out, [&](std::ostream& os) { write_sweep_csv(os, spec.parameter, points); });
  return 0;
}

int cmd_crlb(const CommonOptions& o, const std::string& model, std::optional<std::size_t> ensemble) {
  if (model != "cv") throw ConfigError("crlb: only --model cv is supported");
  auto fc = resolve(o, "CV");
  auto& c = fc.experiment;
  const int steps = o.steps ? *o.steps : fc.crlb.steps;
  if (steps < 2) throw ConfigError("crlb needs at least 2 steps");
  PcrlbConfig pc;
  pc.ensemble = ensemble.value_or(fc.crlb.ensemble);
  pc.eps = fc.crlb.eps;
  pc.d11_form = fc.crlb.d11_form;
  pc.seed = c.seed;
  if (pc.ensemble < 2) throw ConfigError("crlb ensemble must be >= 2");
  const AnchorSet anchors(c.anchors);
  const Mat4 prior = fc.crlb.prior_sd.cwiseAbs2().asDiagonal();
  const Vec4 p0 = c.trajectory.initial.as_vector();
  const auto post = pcrlb_cv(p0, prior, steps, c.cv, anchors, c.range, c.sensors, pc);

  // Parametric bound along the noise-free rollout from the same start.
  std::vector<TruthState> nominal;
  Vec4 p = p0;
  for (int k = 0; k < steps; ++k) {
    nominal.push_back({p.head<2>(), p(2), p(3), k});
    p = cv_transition(p, c.cv.T);
  }
  const auto par = parcrlb_trace(nominal, anchors, c.range, c.sensors, c.cv.T,
                                 parcrlb_initial(nominal.front(), prior, anchors, c.range, c.sensors));
  std::vector<CrlbRow> rows;
  for (int k = 0; k < steps; ++k) {
    const auto& s = post[static_cast<std::size_t>(k)];
    rows.push_back({k, par[static_cast<std::size_t>(k)], s.bound, s.bound_lb, s.bound_ub});
  }
  emit(o.out, [&](std::ostream& os) { write_crlb_csv(os, rows); });
  return 0;
}

int cmd_validate(std::optional<double> samples, std::optional<std::uint64_t> seed) {
  ValidationOptions vo;
  if (samples) {
    if (!(*samples >= 100)) throw ConfigError("--samples must be >= 100");
    vo = ValidationOptions::with_samples(static_cast<std::size_t>(*samples));
  }
  if (seed) vo.seed = *seed;
  bool all = true;
  for (const auto& r : run_validations(vo)) {
    std::cout << (r.passed ? "PASS" : "FAIL") << " [" << r.id << "] " << r.name << ": " << r.detail << "\n";
    all = all && r.passed;
  }
  return all ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pareto-weighted ranging / dead-reckoning fusion: simulation, bounds and oracle checks"};
  app.require_subcommand(1);

  CommonOptions run_opts, sweep_opts, crlb_opts;
  std::string summary_path;
  auto* run = app.add_subcommand("run", "Monte Carlo experiment; writes the per-step trace CSV and a summary CSV");
  add_common(run, run_opts);
  run->add_option("--summary", summary_path, "Summary CSV file (default: stdout, or stderr when the trace goes to stdout)");

  std::string sweep_param;
  std::vector<double> sweep_values;
  auto* sw = app.add_subcommand("sweep", "Parameter sweep with paired seeds; writes the sweep CSV");
  add_common(sw, sweep_opts);
  sw->add_option("--param", sweep_param, "speed, a_max or T");
  sw->add_option("--values", sweep_values, "Sweep values")->delimiter(',');

  std::string model = "cv";
  std::optional<std::size_t> ensemble;
  auto* cr = app.add_subcommand("crlb", "Parametric and posterior bounds for the CV model; writes the bound CSV");
  add_common(cr, crlb_opts);
  cr->add_option("--model", model, "Motion model (cv)");
  cr->add_option("--ensemble", ensemble, "Rollouts used for the Pi expectation");

  std::optional<double> samples;
  std::optional<std::uint64_t> vseed;
  auto* val = app.add_subcommand("validate-lemmas", "Monte Carlo oracle checks of the closed-form results");
  val->add_option("--samples", samples, "Samples per Monte Carlo oracle (accepts 1e6)");
  val->add_option("--seed", vseed, "Oracle RNG seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*run) return cmd_run(run_opts, summary_path);
    if (*sw) return cmd_sweep(sweep_opts, sweep_param, sweep_values);
    if (*cr) return cmd_crlb(crlb_opts, model, ensemble);
    if (*val) return cmd_validate(samples, vseed);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 2;
}
