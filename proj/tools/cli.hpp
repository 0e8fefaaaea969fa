#pragma once

#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace spa::cli {

enum ExitCode : int {
  kOk = 0,
  kCheckFailure = 1,
  kSolverFailure = 2,
  kConfigError = 3,
};

struct RunConfig {
  std::string problem;
  std::optional<int> problem_case;
  std::vector<double> horizons;  // --T; several values form a sweep (solve only)
  std::vector<double> s0;
  std::vector<double> p0;
  std::optional<double> ode_tol;
  double opt_tol = 1e-8;
  bool secant = false;
  std::vector<double> bracket;
  bool warmstart = false;
  int N = 100;
  double rho_tv = 1e-3;
  std::string grid;
  std::string output_dir;
  int jobs = 1;
};

/// Runs one command line (without the program name). Diagnostics go to err.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace spa::cli
