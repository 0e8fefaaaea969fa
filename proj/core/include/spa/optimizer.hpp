#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "spa/error.hpp"
#include "spa/gradients.hpp"

namespace spa {

struct OptimizeSettings {
  // Converged when the projected-gradient infinity norm, divided by
  // max(1, |initial gradient|_inf), drops to stat_tol.
  double stat_tol = 1e-8;
  int max_iters = 200;
  double ls_shrink = 0.5;
  double ls_c1 = 1e-4;
  int memory = 8;
  std::optional<double> eps_gap;  // time units; default gap_fraction * T
  int max_backtracks = 60;
  // Also accept steps whose end slope satisfies the approximate Wolfe
  // conditions (delta = 0.1, sigma = 0.9) and whose objective rises by at most
  // noise_factor * ode.rel_tol * max(1, |C|), the integration noise level.
  // With approximate_wolfe off, accepted objectives never increase.
  bool approximate_wolfe = true;
  double noise_factor = 100.0;
  GradientSettings gradient;

  void validate() const;
};

struct IterationRecord {
  int iteration = 0;
  double objective = 0.0;
  double stationarity = 0.0;
  double step = 0.0;
  SwitchConfig cfg;  // accepted point
};

struct SolveReport {
  SwitchConfig final_cfg;
  double objective = 0.0;
  int iterations = 0;
  int gradient_evals = 0;
  bool converged = false;
  double stationarity = 0.0;  // relative projected-gradient norm (see OptimizeSettings)
  double worst_margin = 0.0;
  std::map<std::string, double> reference_errors;
  std::optional<ErrorCode> failure;  // MaxItersExceeded or LineSearchFailure when not converged
  std::vector<IterationRecord> trace;
  GradientBundle final_gradient;
};

/// Euclidean projection onto {eps <= s_1, s_j + eps <= s_{j+1}, s_k + eps <= T}.
Vec project_ordered(const Vec& v, double T, double eps_gap);

/// Projected L-BFGS over (s, p0, T). Free-time problems are optimized in the
/// switch fractions s / T, which keeps the ordering chain fixed on [0, 1].
/// Non-convergence is reported through SolveReport::failure.
SolveReport minimize(const ProblemDef& prob, const SwitchConfig& cfg0,
                     const OptimizeSettings& settings);

/// Throws the recorded failure of a non-converged report.
void require_converged(const SolveReport& report);

struct SecantResult {
  double s = 0.0;
  double derivative = 0.0;
  int iterations = 0;
  double slope = 0.0;          // secant slope of dC/ds at the last step
  bool local_maximum = false;  // slope < 0: the root is not a minimizer
  // Every evaluated switch point and its derivative, starting points first.
  std::vector<double> points;
  std::vector<double> derivatives;
};

/// Secant iteration on s -> dC/ds for single-switch fixed-time problems.
SecantResult secant_switch(const ProblemDef& prob, std::pair<double, double> bracket,
                           const OptimizeSettings& settings);

struct ProfilePoint {
  double s = 0.0;
  double derivative = 0.0;
  double objective = 0.0;
};

/// dC/ds over a grid; jobs > 1 evaluates grid points on worker threads.
std::vector<ProfilePoint> derivative_profile(const ProblemDef& prob, const std::vector<double>& grid,
                                             const GradientSettings& settings, int jobs = 1);

/// Indices i such that the derivative changes sign between points i and i + 1.
std::vector<std::size_t> sign_changes(const std::vector<ProfilePoint>& profile);

}  // namespace spa
