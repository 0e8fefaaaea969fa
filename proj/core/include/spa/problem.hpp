#pragma once

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "spa/odeint.hpp"

namespace spa {

enum class LawKind {
  Constant,              // u = const
  StateFeedback,         // u = phi(x, t)
  StateCostateFeedback,  // u = phi(x, p, t)
};

/// How the control is produced on one phase (s_j, s_{j+1}), together with
/// the box [lower(t), upper(t)] it is supposed to stay in.
struct ControlPhase {
  using Law = std::function<Vec(const Vec& x, const Vec& p, double t)>;
  using LawJacobian = std::function<Mat(const Vec& x, const Vec& p, double t)>;
  using Bound = std::function<Vec(double t)>;

  LawKind kind = LawKind::Constant;
  Law law;
  // d(phi)/dx, m x n. Optional for state feedback (central differences are
  // used when absent); unused for the other kinds.
  LawJacobian law_dx;
  Bound lower;
  Bound upper;

  static ControlPhase constant(Vec u, Bound lower, Bound upper);
  static ControlPhase state_feedback(Law law, LawJacobian law_dx, Bound lower, Bound upper);
  static ControlPhase costate_feedback(Law law, Bound lower, Bound upper);
};

ControlPhase::Bound constant_bound(Vec value);

enum class ProblemCase { StateFeedback = 1, CostateFeedback = 2 };

/// Analytic gradients of the generalized Hamiltonian
///   Hg_j(x, p, y1, y2, t) = y1 f_j(x, p, t) - p f_jx(x, p, t) y2^T
/// with respect to x and p.
using Case2Derivs = std::function<std::pair<Vec, Vec>(int phase, const Vec& x, const Vec& p,
                                                      const Vec& y1, const Vec& y2, double t)>;

/// Mayer-form control problem  min C(x(T)), x' = f(x, u), x(0) = x0, with the
/// control given phase by phase. Costates are stored as column vectors but
/// play the role of row vectors throughout (p f_x means f_x^T p).
struct ProblemDef {
  std::string name;
  int n = 0;
  int m = 0;
  Vec x0;
  double T = 1.0;          // horizon, or the initial guess when free_time
  bool free_time = false;
  ProblemCase problem_case = ProblemCase::StateFeedback;
  std::vector<ControlPhase> phases;

  std::function<Vec(const Vec& x, const Vec& u)> f;
  std::function<Mat(const Vec& x, const Vec& u)> f_x;  // n x n
  std::function<Mat(const Vec& x, const Vec& u)> f_u;  // n x m
  std::function<double(const Vec& x)> objective;
  std::function<Vec(const Vec& x)> objective_grad;
  Case2Derivs case2_derivs;  // optional

  int switch_count() const { return static_cast<int>(phases.size()) - 1; }
  bool is_case2() const { return problem_case == ProblemCase::CostateFeedback; }
  void validate() const;
};

/// Decision vector: switch points (physical time), plus the initial costate
/// in Case 2 and the terminal time for free-time problems.
struct SwitchConfig {
  Vec s;
  std::optional<Vec> p0;
  std::optional<double> T;
};

double horizon(const ProblemDef& prob, const SwitchConfig& cfg);

/// Default minimum switch separation: gap_fraction * T.
inline constexpr double kDefaultGapFraction = 1e-6;

/// Checks ordering (with minimum gap), and that p0/T are present exactly when
/// the problem needs them. Throws InvalidSwitchOrder or InvalidArgument.
void validate_config(const ProblemDef& prob, const SwitchConfig& cfg,
                     double gap_fraction = kDefaultGapFraction);

/// u = phi_j(x, p, t). Throws MissingCostate if the law needs p and p is empty.
Vec phase_control(const ProblemDef& prob, int j, double t, const Vec& x, const Vec& p = Vec());

/// f(x, phi_j(x, p, t)).
Vec phase_dynamics(const ProblemDef& prob, int j, double t, const Vec& x, const Vec& p = Vec());

/// Jacobian of the composed right-hand side x -> f(x, phi_j(x, t)), i.e.
/// f_x + f_u dphi/dx. Only meaningful for p-independent phases.
Mat phase_jacobian(const ProblemDef& prob, int j, double t, const Vec& x);

/// f_x(x, u) evaluated at u = phi_j(x, p, t) (no chain rule through phi).
Mat phase_fx(const ProblemDef& prob, int j, double t, const Vec& x, const Vec& p);

/// Componentwise min(u - lower, upper - u). Negative entries flag infeasible
/// controls; nothing is clipped.
Vec control_feasibility(const ProblemDef& prob, int j, double t, const Vec& x,
                        const Vec& p = Vec());

double generalized_hamiltonian(const ProblemDef& prob, int j, double t, const Vec& x,
                               const Vec& p, const Vec& y1, const Vec& y2);

/// Central differences of the generalized Hamiltonian with step
/// fd_rel * max(1, |component|). Returns (grad_x, grad_p).
std::pair<Vec, Vec> numeric_case2_derivs(const ProblemDef& prob, int j, double t, const Vec& x,
                                         const Vec& p, const Vec& y1, const Vec& y2,
                                         double fd_rel = 1e-6);

}  // namespace spa
