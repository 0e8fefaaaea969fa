#pragma once

#include <optional>
#include <string>
#include <vector>

#include "spa/error.hpp"
#include "spa/problem.hpp"

namespace spa {

/// Exact minimizer of 1/2 |z - signal|^2 + weight * sum |z_{j+1} - z_j|
/// (taut-string / direct 1-D TV denoising).
Vec tv_prox(const Vec& signal, double weight);

/// Euler discretization with TV-regularized control, u(:, j) acting on
/// [t_j, t_{j+1}], t_j = j h, h = T / N.
struct DiscreteControlProblem {
  int N = 0;
  double T = 0.0;
  double h = 0.0;
  double rho_tv = 0.0;
  Mat u;      // m x N
  Mat lower;  // m x N
  Mat upper;  // m x N
  Vec p0_estimate;
  double terminal_cost = 0.0;
  double objective = 0.0;  // terminal cost + rho_tv * total variation
  int iterations = 0;
  bool converged = false;
  std::optional<ErrorCode> warning;  // MaxItersExceeded when the iteration cap was hit
  std::vector<double> objective_history;

  double time(int j) const { return j * h; }
  double total_variation() const;
};

struct DiscreteEvaluation {
  std::vector<Vec> x;       // x_0 .. x_N
  std::vector<Vec> lambda;  // lambda_0 .. lambda_N, lambda_N = grad C(x_N)
  double cost = 0.0;
  Mat grad;  // m x N, dC/du_j = h lambda_{j+1} f_u(x_j, u_j)
};

/// Forward Euler rollout and the exact discrete adjoint
/// lambda_j = lambda_{j+1} (I + h f_x(x_j, u_j)).
DiscreteEvaluation evaluate_discrete(const ProblemDef& prob, const Mat& u, double h);

struct TvSettings {
  int max_iters = 20000;
  double rel_tol = 1e-8;
  int power_iters = 20;
  double step_growth = 1.5;  // step enlargement after an accepted step
};

/// Proximal gradient on the TV-regularized Euler problem, starting from the
/// midpoint control. Never throws on the iteration cap; see warning.
DiscreteControlProblem solve_tv_euler(const ProblemDef& prob, int N, double rho_tv,
                                      const TvSettings& settings = {});

enum class PhaseKind { BangLow, BangHigh, Singular };
std::string_view to_string(PhaseKind kind);

struct StructureEstimate {
  std::vector<double> switch_times;
  std::vector<PhaseKind> phase_kinds;
  Vec p0_estimate;
  Mat u_profile;
  std::vector<double> jump_sizes;  // relative to the control range
  // Short or repeated segments, or a switch count different from the
  // expected one, suggest extra jumps.
  bool spurious = false;
};

struct DetectSettings {
  double jump_tol = 0.1;   // fraction of the control range
  double bound_tol = 0.05;  // fraction of the control range
  int k_max = 6;
  std::optional<int> expected_switches;  // flag a different count as spurious
};

/// Switches at the midpoints of mesh edges whose relative jump exceeds
/// jump_tol. Throws NoStructure for zero or more than k_max jumps.
StructureEstimate detect_structure(const DiscreteControlProblem& dcp,
                                   const DetectSettings& settings = {});

}  // namespace spa
