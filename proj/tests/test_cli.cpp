#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "cli.hpp"
#include "io.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

Run spa_cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  Run r;
  r.code = spa::cli::run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    std::random_device rd;
    dir_ = fs::temp_directory_path() / ("spa_cli_test_" + std::to_string(rd()));
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string out(const std::string& sub = "") const {
    const fs::path p = sub.empty() ? dir_ : dir_ / sub;
    fs::create_directories(p);
    return p.string();
  }

  fs::path dir_;
};

std::string first_line(const fs::path& p) {
  std::ifstream is(p);
  std::string line;
  std::getline(is, line);
  return line;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p);
  return {std::istreambuf_iterator<char>(is), {}};
}

TEST_F(Cli, SolveCatalyst) {
  const auto r = spa_cli({"solve", "--problem", "catalyst1", "--T", "1", "--s0", "0.1,0.7",
                          "--out", out()});
  ASSERT_EQ(r.code, spa::cli::kOk) << r.err;
  const json rep = spa::io::read_json(dir_ / "report.json");
  EXPECT_TRUE(rep["converged"].get<bool>());
  EXPECT_LE(rep["reference_errors"]["s1"].get<double>(), 1e-6);
  EXPECT_LE(rep["reference_errors"]["s2"].get<double>(), 1e-6);
  EXPECT_EQ(first_line(dir_ / "trajectory.csv"), "t,x1,x2,u1,p1,p2");
  const auto tab = spa::io::read_csv(dir_ / "trajectory.csv");
  ASSERT_FALSE(tab.rows.empty());
  EXPECT_EQ(tab.rows.front()[0], 0.0);
  EXPECT_DOUBLE_EQ(tab.rows.back()[0], 1.0);
  EXPECT_DOUBLE_EQ(tab.rows.back()[4], 1.0);  // p(T) = grad C
}

TEST_F(Cli, SolveCaseFlag) {
  const auto r = spa_cli({"solve", "--problem", "catalyst", "--case", "2", "--T", "1", "--s0",
                          "0.1,0.7", "--p0", "0.9,0.8", "--out", out()});
  ASSERT_EQ(r.code, spa::cli::kOk) << r.err;
  const json rep = spa::io::read_json(dir_ / "report.json");
  EXPECT_EQ(rep["p0"].size(), 2u);
  EXPECT_LE(rep["reference_errors"]["C"].get<double>(), 1e-8);
}

TEST_F(Cli, SolveBressanSecant) {
  const auto r =
      spa_cli({"solve", "--problem", "bressan", "--secant", "--bracket", "3,4", "--out", out()});
  ASSERT_EQ(r.code, spa::cli::kOk) << r.err;
  const json rep = spa::io::read_json(dir_ / "report.json");
  EXPECT_EQ(rep["method"], "secant");
  EXPECT_LE(rep["reference_errors"]["s1"].get<double>(), 1e-10);
}

TEST_F(Cli, SolveMisorderedIsConfigError) {
  const auto r = spa_cli({"solve", "--problem", "catalyst1", "--T", "1", "--s0", "0.7,0.1",
                          "--out", out()});
  EXPECT_EQ(r.code, spa::cli::kConfigError);
  EXPECT_NE(r.err.find("InvalidSwitchOrder"), std::string::npos) << r.err;
}

TEST_F(Cli, ConfigErrors) {
  EXPECT_EQ(spa_cli({"solve", "--problem", "rocket", "--out", out()}).code,
            spa::cli::kConfigError);
  EXPECT_EQ(spa_cli({"solve", "--problem", "catalyst1", "--bogus"}).code, spa::cli::kConfigError);
  EXPECT_EQ(spa_cli({"solve"}).code, spa::cli::kConfigError);
  EXPECT_EQ(spa_cli({}).code, spa::cli::kConfigError);
  EXPECT_EQ(spa_cli({"solve", "--problem", "catalyst1", "--s0", "0.1", "--out", out()}).code,
            spa::cli::kConfigError);
  EXPECT_EQ(spa_cli({"solve", "--problem", "catalyst", "--case", "3"}).code,
            spa::cli::kConfigError);
  EXPECT_EQ(spa_cli({"--help"}).code, spa::cli::kOk);
}

TEST_F(Cli, SolverFailureExitCode) {
  // The costate-feedback law blows up when p2/p1 is well above its optimum.
  const auto r = spa_cli({"solve", "--problem", "catalyst2", "--T", "1", "--s0", "0.1,0.7",
                          "--p0", "1,1", "--out", out()});
  EXPECT_EQ(r.code, spa::cli::kSolverFailure) << r.out;
  EXPECT_NE(r.err.find("StepUnderflow"), std::string::npos) << r.err;
}

TEST_F(Cli, ReportRoundTrips) {
  ASSERT_EQ(spa_cli({"solve", "--problem", "goddard", "--out", out()}).code, spa::cli::kOk);
  const std::string text = slurp(dir_ / "report.json");
  EXPECT_EQ(spa::io::dump_json(json::parse(text)), text);
  const json rep = json::parse(text);
  for (const char* key : {"problem", "method", "converged", "iterations", "gradient_evals",
                          "objective", "stationarity", "worst_margin", "s", "p0", "T",
                          "reference", "reference_errors", "trace", "final_gradient"}) {
    EXPECT_TRUE(rep.contains(key)) << key;
  }
  EXPECT_LE(rep["reference_errors"]["T"].get<double>(), 1e-5);
  EXPECT_EQ(first_line(dir_ / "trajectory.csv"), "t,x1,x2,x3,u1,p1,p2,p3");
}

TEST_F(Cli, SweepWritesOneDirectoryPerHorizon) {
  const auto r = spa_cli({"solve", "--problem", "catalyst1", "--T", "1,4", "--jobs", "2",
                          "--out", out()});
  ASSERT_EQ(r.code, spa::cli::kOk) << r.err;
  EXPECT_TRUE(fs::exists(dir_ / "catalyst1_T1" / "report.json"));
  EXPECT_TRUE(fs::exists(dir_ / "catalyst1_T4" / "report.json"));
}

TEST_F(Cli, OutputDirectoryFromEnvironment) {
  const std::string d = out("env");
  ::setenv("SPA_OUT_DIR", d.c_str(), 1);
  const auto r = spa_cli({"warmstart", "--problem", "catalyst1"});
  ::unsetenv("SPA_OUT_DIR");
  ASSERT_EQ(r.code, spa::cli::kOk) << r.err;
  EXPECT_TRUE(fs::exists(fs::path(d) / "structure.json"));
}

TEST_F(Cli, WarmStartStructure) {
  const auto r = spa_cli({"warmstart", "--problem", "catalyst1", "--T", "1", "--N", "100",
                          "--rho-tv", "1e-3", "--out", out()});
  ASSERT_EQ(r.code, spa::cli::kOk) << r.err;
  const json st = spa::io::read_json(dir_ / "structure.json");
  ASSERT_EQ(st["switch_times"].size(), 2u);
  EXPECT_NEAR(st["switch_times"][0].get<double>(), 0.136299034594555, 0.02);
  EXPECT_NEAR(st["switch_times"][1].get<double>(), 0.725230107591655, 0.02);
  EXPECT_EQ(st["phase_kinds"], json({"bang-high", "singular", "bang-low"}));
  EXPECT_FALSE(st["spurious"].get<bool>());
  EXPECT_EQ(first_line(dir_ / "u_profile.csv"), "t,u1");
  EXPECT_EQ(spa::io::read_csv(dir_ / "u_profile.csv").rows.size(), 100u);
}

TEST_F(Cli, WarmStartWithoutRegularizationHasNoStructure) {
  const auto r = spa_cli({"warmstart", "--problem", "catalyst1", "--rho-tv", "0", "--out", out()});
  EXPECT_EQ(r.code, spa::cli::kSolverFailure);
  EXPECT_NE(r.err.find("NoStructure"), std::string::npos);
  EXPECT_EQ(r.err.find("NoStructure: NoStructure"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir_ / "u_profile.csv"));
}

TEST_F(Cli, WarmStartWeakRegularizationIsFlagged) {
  const auto r =
      spa_cli({"warmstart", "--problem", "catalyst1", "--rho-tv", "1e-5", "--out", out()});
  ASSERT_EQ(r.code, spa::cli::kOk) << r.err;
  const json st = spa::io::read_json(dir_ / "structure.json");
  EXPECT_TRUE(st["spurious"].get<bool>());
}

TEST_F(Cli, SolveFromWarmStart) {
  const auto r = spa_cli({"solve", "--problem", "catalyst2", "--T", "1", "--warmstart", "--out",
                          out()});
  ASSERT_EQ(r.code, spa::cli::kOk) << r.err;
  const json rep = spa::io::read_json(dir_ / "report.json");
  EXPECT_EQ(rep["start"]["s_source"], "warmstart");
  EXPECT_EQ(rep["start"]["p0_source"], "warmstart");
  EXPECT_TRUE(fs::exists(dir_ / "structure.json"));
}

TEST_F(Cli, GradcheckPasses) {
  auto r = spa_cli({"gradcheck", "--problem", "catalyst1", "--s0", "0.15,0.7", "--out", out()});
  EXPECT_EQ(r.code, spa::cli::kOk) << r.out;
  r = spa_cli({"gradcheck", "--problem", "catalyst2", "--s0", "0.1,0.7", "--p0", "0.9,0.8"});
  EXPECT_EQ(r.code, spa::cli::kOk) << r.out;
  EXPECT_NE(r.out.find("d_p0"), std::string::npos);
  r = spa_cli({"gradcheck", "--problem", "goddard", "--s0", "13,21", "--T", "42"});
  EXPECT_EQ(r.code, spa::cli::kOk) << r.out;
  EXPECT_NE(r.out.find("d_T"), std::string::npos);
}

TEST_F(Cli, GradcheckMismatch) {
  // A loose integrator makes the finite differences meaningless.
  const auto r = spa_cli({"gradcheck", "--problem", "goddard", "--s0", "13,21", "--T", "42",
                          "--ode-tol", "1e-3"});
  EXPECT_EQ(r.code, spa::cli::kCheckFailure) << r.out;
}

TEST_F(Cli, ProfileBressan) {
  const auto r = spa_cli({"profile", "--problem", "bressan", "--grid", "3.0:3.7:71", "--out",
                          out()});
  ASSERT_EQ(r.code, spa::cli::kOk) << r.err;
  EXPECT_EQ(first_line(dir_ / "derivative_profile.csv"), "s,dC_ds,C,crossing");
  const auto tab = spa::io::read_csv(dir_ / "derivative_profile.csv");
  ASSERT_EQ(tab.rows.size(), 71u);
  int crossings = 0;
  for (const auto& row : tab.rows) {
    if (row[3] == 1.0) {
      ++crossings;
      EXPECT_LE(row[0], 10.0 / 3);
    }
  }
  EXPECT_EQ(crossings, 1);
}

TEST_F(Cli, ProfileSinglePoint) {
  const auto r = spa_cli({"profile", "--problem", "jacobson", "--grid", "1.4", "--out", out()});
  ASSERT_EQ(r.code, spa::cli::kOk) << r.err;
  EXPECT_EQ(spa::io::read_csv(dir_ / "derivative_profile.csv").rows.size(), 1u);
}

TEST_F(Cli, ProfileNeedsSingleSwitch) {
  EXPECT_EQ(spa_cli({"profile", "--problem", "catalyst1", "--grid", "0.1:0.2:3", "--out", out()})
                .code,
            spa::cli::kConfigError);
}

}  // namespace
