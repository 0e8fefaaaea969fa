#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "spa/problem.hpp"

namespace spa {

// ---------------------------------------------------------------------------
// Catalyst mixing:  A <-> B -> C in a reactor of length T.
//   a' = -u (k1 a - k2 b),  b' = u (k1 a - k2 b) - (1 - u) k3 b,
//   min a(T) + b(T) - 1,  0 <= u <= 1,  control pattern bang / singular / off.
// ---------------------------------------------------------------------------
struct CatalystParams {
  double k1 = 1.0;
  double k2 = 10.0;
  double k3 = 1.0;
  double T = 1.0;
  ProblemCase problem_case = ProblemCase::StateFeedback;
  // Case 2 only: keep the constant singular control instead of the costate
  // feedback law (every phase p-independent).
  bool constant_singular_law = false;
};

/// Constant singular control alpha (1 + alpha) / (beta + (1 + alpha)^2),
/// alpha = sqrt(k3 / k2), beta = k1 / k2.
double catalyst_singular_control(const CatalystParams& params);

/// Singular control from setting the second derivative of the switching
/// function to zero; depends on state (a, b) and costate (p1, p2).
double catalyst_singular_feedback(const CatalystParams& params, const Vec& x, const Vec& p);

/// Switching function (p2 - p1)(k1 a - k2 b) + k3 p2 b.
double catalyst_switching_function(const CatalystParams& params, const Vec& x, const Vec& p);

ProblemDef build_catalyst(const CatalystParams& params);

// ---------------------------------------------------------------------------
// Jacobson: min 1/2 int_0^5 x1^2 + x2^2, x1' = x2, x2' = u, |u| <= 1, written
// in Mayer form with x3' = (x1^2 + x2^2) / 2. Phases: u = -1, then u = x1.
// ---------------------------------------------------------------------------
ProblemDef build_jacobson();

/// 1 - s^2/2 - e^{2s-10} (-1 + 2s - s^2/2); its root is the optimal switch.
long double jacobson_root_residual(long double s);

// ---------------------------------------------------------------------------
// Bressan: min int_0^T x1^2 - x2, x1' = u, x2' = -x1, |u| <= 1, Mayer form with
// x3' = x1^2 - x2. Phases: u = -1, then u = 1/2. Optimal switch T / 3.
// ---------------------------------------------------------------------------
ProblemDef build_bressan(double T = 10.0);

// ---------------------------------------------------------------------------
// Goddard rocket (free final time), state (h, v, m):
//   h' = v, v' = (u - sigma v^2 e^{-h/h0}) / m - g, m' = -u / c,
//   min -h(T) + beta (m(T) - 1) + rho/2 (m(T) - 1)^2.
// Phases: full thrust, singular thrust, coast.
// ---------------------------------------------------------------------------
struct GoddardParams {
  double u_max = 193.0;
  double g = 32.174;
  double sigma = 5.4915e-5;
  double c = 1580.9425;
  double h0 = 23800.0;
  double beta_pen = -2.31774080357308e4;
  double rho_pen = 1e5;
  double T_guess = 42.0;
};

/// Singular thrust D + m g + m g / (1 + 4k + 2k^2) [c^2/(h0 g) (1 + 1/k) - 1 - 2k],
/// k = c / v, D = sigma v^2 e^{-h/h0}.
double goddard_singular_thrust(const GoddardParams& params, const Vec& x);

ProblemDef build_goddard(const GoddardParams& params);

// ---------------------------------------------------------------------------
// Reference solutions and the name registry used by the CLI.
// ---------------------------------------------------------------------------
struct ReferenceSolution {
  Vec s_star;
  std::optional<double> T_star;
  std::optional<double> C_star;
  std::string u_sing;  // human-readable description of the singular control
};

ReferenceSolution catalyst_reference(const CatalystParams& params);
ReferenceSolution jacobson_reference();
ReferenceSolution bressan_reference(double T = 10.0);
ReferenceSolution goddard_reference();

/// Absolute errors keyed "s1".."sk", "T" and "C" (when the reference has them).
std::map<std::string, double> reference_errors(const ReferenceSolution& ref,
                                               const SwitchConfig& cfg, double objective);

struct NamedProblem {
  ProblemDef problem;
  std::optional<ReferenceSolution> reference;
  SwitchConfig start;                               // p0 may be missing (use warm start)
  std::optional<std::pair<double, double>> bracket;  // single-switch problems
};

/// Registered names: catalyst1, catalyst2, jacobson, bressan, goddard.
const std::vector<std::string>& problem_names();

/// `T` overrides the horizon (fixed-time problems) or the initial guess
/// (goddard). Throws InvalidArgument for unknown names.
NamedProblem make_named_problem(const std::string& name, std::optional<double> T = std::nullopt);

}  // namespace spa
