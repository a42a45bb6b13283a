#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>
#include <sys/wait.h>

#include "paretoloc/config.hpp"

using namespace paretoloc;

namespace {

const std::string kCli = PARETOLOC_CLI_PATH;
const std::string kConfigs = PARETOLOC_CONFIG_DIR;

int run(const std::string& args, std::string* out = nullptr) {
  const std::string tmp = testing::TempDir() + "cli_stdout.txt";
  const int rc = std::system((kCli + " " + args + " > " + tmp + " 2>/dev/null").c_str());
  if (out) {
    std::ifstream f(tmp);
    std::stringstream ss;
    ss << f.rdbuf();
    *out = ss.str();
  }
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const std::string& path) {
  std::ifstream f(path);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::string first_line(const std::string& s) { return s.substr(0, s.find('\n')); }

int count_lines(const std::string& s) { return static_cast<int>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST(Cli, RunIsDeterministicWithExactHeaders) {
  const std::string a = testing::TempDir() + "a.csv", b = testing::TempDir() + "b.csv", s = testing::TempDir() + "s.csv";
  const std::string common = "run --scenario A --seed 7 --runs 2 --steps 60 --estimators pareto,ekf --summary " + s;
  ASSERT_EQ(run(common + " --out " + a), 0);
  const std::string summary = slurp(s);
  ASSERT_EQ(run(common + " --out " + b), 0);
  EXPECT_EQ(slurp(a), slurp(b));
  EXPECT_EQ(slurp(s), summary);
  EXPECT_EQ(first_line(slurp(a)), "k,truth_x1,truth_x2,pareto_x1,pareto_x2,pareto_err,ekf_x1,ekf_x2,ekf_err");
  EXPECT_EQ(count_lines(slurp(a)), 61);
  EXPECT_EQ(first_line(summary), "estimator,rmse_m,p95_err_m,runs,excluded");
  EXPECT_EQ(count_lines(summary), 3);
}

TEST(Cli, SweepHeader) {
  std::string out;
  ASSERT_EQ(run("sweep --scenario B --param a_max --values 0.3,0.6 --runs 1 --steps 40 --estimators pareto,ukf", &out), 0);
  EXPECT_EQ(first_line(out), "param,value,estimator,rmse_m,p95_err_m,runs,excluded");
  EXPECT_EQ(count_lines(out), 5);
  EXPECT_NE(out.find("a_max,0.3,pareto,"), std::string::npos);
}

TEST(Cli, CrlbEmitsFourBoundColumns) {
  std::string out;
  ASSERT_EQ(run("crlb --model cv --steps 200 --ensemble 500", &out), 0);
  EXPECT_EQ(first_line(out), "k,parcrlb,pcrlb,pcrlb_lb,pcrlb_ub");
  EXPECT_EQ(count_lines(out), 201);
}

TEST(Cli, BadArgumentsExitTwo) {
  EXPECT_EQ(run("run --scenario Q"), 2);
  EXPECT_EQ(run("run --estimators pareto,kalman"), 2);
  EXPECT_EQ(run("run --runs 0"), 2);
  EXPECT_EQ(run("crlb --model ar"), 2);
  EXPECT_EQ(run("sweep --param mass"), 2);
  EXPECT_EQ(run("bogus"), 2);
  EXPECT_EQ(run(""), 2);
  const std::string bad = testing::TempDir() + "bad.json";
  std::ofstream(bad) << R"({"scenario": "A", "runz": 4})";
  EXPECT_EQ(run("run --config " + bad), 2);
  std::ofstream(bad) << "{not json";
  EXPECT_EQ(run("run --config " + bad), 2);
}

TEST(Cli, ValidateExitCodeMatchesReport) {
  std::string out;
  const int rc = run("validate-lemmas --samples 2000", &out);
  EXPECT_EQ(count_lines(out), 8);
  const bool any_fail = out.find("FAIL") != std::string::npos;
  EXPECT_EQ(rc, any_fail ? 1 : 0);
}

TEST(Config, SampleConfigsLoad) {
  for (const char* f : {"scenario_a.json", "scenario_b.json", "cv.json", "sweep_speed.json", "sweep_amax.json"}) {
    EXPECT_NO_THROW((void)load_config_file(kConfigs + "/" + f)) << f;
  }
  const auto a = load_config_file(kConfigs + "/scenario_a.json");
  EXPECT_DOUBLE_EQ(a.experiment.range.sigma0_sq, 0.0625);
  EXPECT_EQ(a.experiment.trajectory.steps, 1000);
  const auto sw = load_config_file(kConfigs + "/sweep_speed.json");
  ASSERT_TRUE(sw.sweep.has_value());
  EXPECT_EQ(sw.sweep->parameter, SweepParameter::speed);
  EXPECT_DOUBLE_EQ(sw.experiment.trajectory.T, 0.5);
}

TEST(Config, RejectsInvalidContent) {
  using nlohmann::json;
  EXPECT_THROW((void)parse_config(json{{"scenario", "A"}, {"pareto", {{"beta_clip", 2.0}}}}), ConfigError);
  EXPECT_THROW((void)parse_config(json{{"anchors", {{0, 0}, {1, 1}, {2, 2}, {3, 3}}}}), ConfigError);
  EXPECT_THROW((void)parse_config(json{{"trajectory", {{"kind", "spiral"}}}}), ConfigError);
  EXPECT_THROW((void)parse_config(json{{"runs", "ten"}}), ConfigError);
  EXPECT_THROW((void)parse_config(json{{"cv", {{"sigma3_sq", -1.0}}}}), ConfigError);
  EXPECT_NO_THROW((void)parse_config(json{{"scenario", "CV"}, {"trajectory", {{"T", 0.2}}}}));
  EXPECT_DOUBLE_EQ(parse_config(json{{"scenario", "CV"}, {"trajectory", {{"T", 0.2}}}}).experiment.cv.T, 0.2);
}
