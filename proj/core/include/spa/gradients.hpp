#pragma once

#include <optional>
#include <vector>

#include "spa/odeint.hpp"
#include "spa/problem.hpp"

namespace spa {

struct GradientSettings {
  IntegratorSettings ode;
  double gap_fraction = kDefaultGapFraction;
  double fd_rel = 1e-6;  // step for numeric_case2_derivs
  int sample_count = 0;  // uniform re-sampling of stored trajectories (reports only)
  bool prefer_analytic_case2 = true;
};

/// Forward sweep output. Internally every evaluation runs on the rescaled
/// interval tau in [0, 1] (t = tau * T); everything stored here is converted
/// back to physical time.
struct TrajectoryRecord {
  double T = 0.0;
  int state_dim = 0;                // n, or 2n for the (x, p) system of Case 2
  std::vector<double> switch_times;  // 0, s_1, ..., s_k, T
  std::vector<Vec> checkpoints;      // generalized state at each switch time
  DenseTrajectory trajectory;        // generalized state, physical time
  Vec x_final;
  double objective = 0.0;
  std::vector<double> worst_margins;  // per phase, min over accepted steps
};

/// Backward sweep output: the costate p (Case 1) or the generalized costate
/// (y1, y2) (Case 2) at every switch time.
struct CostateRecord {
  std::vector<Vec> y1;
  std::vector<Vec> y2;  // identically zero in Case 1
  // Costate (y1, then y2 in Case 2) along the backward pass, physical time.
  DenseTrajectory trajectory;
  // Integral over tau in [0, 1] of the (generalized) Hamiltonian without the
  // factor T; this is dC/dT at fixed tau-switch points.
  double hamiltonian_integral = 0.0;
  bool analytic_case2 = false;
};

struct HamiltonianJump {
  double left = 0.0;   // H_{j-1} at s_j
  double right = 0.0;  // H_j at s_j
};

struct GradientBundle {
  double objective = 0.0;
  Vec d_s;                    // dC/ds_j, physical switch times, T held fixed
  std::optional<Vec> d_p0;    // Case 2 only
  std::optional<double> d_T;  // free-time only; switch fractions s_j / T held fixed
  std::vector<double> feasibility_margins;
  std::vector<HamiltonianJump> hamiltonian_jumps;
  bool analytic_case2 = false;
};

TrajectoryRecord forward_sweep(const ProblemDef& prob, const SwitchConfig& cfg,
                               const GradientSettings& settings);

/// Integrates the costate backward phase by phase, jointly with the state,
/// which is reset to the forward checkpoint at the right end of each phase.
CostateRecord backward_sweep(const ProblemDef& prob, const SwitchConfig& cfg,
                             const TrajectoryRecord& fwd, const GradientSettings& settings);

enum class TimeDerivative { IfFreeTime, Always };

/// Objective and its derivatives with respect to switch points, p0 and T
/// from one forward and one backward sweep. With TimeDerivative::Always the
/// T-derivative is reported for fixed-time problems as well.
GradientBundle evaluate_gradient(const ProblemDef& prob, const SwitchConfig& cfg,
                                 const GradientSettings& settings,
                                 TimeDerivative want_dT = TimeDerivative::IfFreeTime);

/// Objective only (forward sweep).
double evaluate_objective(const ProblemDef& prob, const SwitchConfig& cfg,
                          const GradientSettings& settings);

/// Evaluates the objective as a function of T with the switch fractions s / T
/// held fixed. Works for fixed-time problems too (T is overridden).
double objective_at_horizon(const ProblemDef& prob, const SwitchConfig& cfg, double T,
                            const GradientSettings& settings);

struct FreeTimeCheck {
  double analytic = 0.0;  // Hamiltonian quadrature
  double fd = 0.0;        // central difference of C(T)
};

/// Compares the quadrature dC/dT with a central difference of C(T) using
/// step fd_step * max(1, T).
FreeTimeCheck free_time_gradient_check(const ProblemDef& prob, const SwitchConfig& cfg,
                                       const GradientSettings& settings,
                                       double fd_step = 1e-6);

}  // namespace spa
