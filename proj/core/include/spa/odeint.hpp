#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <vector>

#include <Eigen/Dense>

namespace spa {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Tolerances and step bounds for the adaptive Dormand-Prince integrator.
/// `h_init <= 0` selects the automatic initial step (Hairer's estimate),
/// which is also what every segment restart uses.
struct IntegratorSettings {
  double rel_tol = 1e-8;
  double abs_tol = 1e-8;
  double h_init = 0.0;
  double h_min = 1e-13;
  double h_max = std::numeric_limits<double>::infinity();
  long max_steps = 200000;

  void validate() const;
};

enum class Direction { Forward, Backward };

/// A system whose right-hand side is smooth on each segment
/// [breakpoints[j], breakpoints[j+1]] and may jump across breakpoints.
struct PiecewiseOde {
  using Rhs = std::function<Vec(int segment, double t, const Vec& x)>;

  int dim = 0;
  std::vector<double> breakpoints;
  Rhs rhs;

  int segment_count() const { return static_cast<int>(breakpoints.size()) - 1; }
  double start() const { return breakpoints.front(); }
  double end() const { return breakpoints.back(); }
  void validate() const;
};

/// Accepted-step endpoint. Derivatives are with respect to physical time t,
/// also for backward integrations.
struct TrajectoryNode {
  double t = 0.0;
  Vec x;
  Vec dx;
  int segment = 0;
};

struct IntegratorStats {
  long accepted_steps = 0;
  long rejected_steps = 0;
  long rhs_evals = 0;
};

struct DenseTrajectory {
  std::vector<double> sample_times;
  std::vector<Vec> sample_states;
  // One entry per breakpoint, in breakpoint order regardless of direction.
  std::vector<Vec> breakpoint_states;
  // Accepted-step endpoints sorted by ascending t; a breakpoint appears once
  // for each adjacent segment.
  std::vector<TrajectoryNode> nodes;
  // State where the integration stopped (interval end when forward, start
  // when backward).
  Vec final_state;
  IntegratorStats stats;

  /// Cubic Hermite interpolation between accepted steps. At a breakpoint the
  /// stored breakpoint state is returned; `segment` picks the piece when the
  /// caller needs one-sided values near a jump in the derivative.
  Vec interpolate(double t) const;
  Vec interpolate(double t, int segment) const;
};

/// Adaptive RK(4,5) integration of a piecewise-smooth IVP. The integrator is
/// restarted at every breakpoint so no accepted step straddles one. Backward
/// integration starts from the interval end and is carried out on the
/// reflected time tau = end - t.
///
/// `sample_count == 0` keeps the accepted-step nodes as samples; otherwise the
/// trajectory is re-sampled on a uniform grid of `sample_count` points.
DenseTrajectory integrate_piecewise(const PiecewiseOde& ode, const Vec& x_start,
                                    Direction direction,
                                    const IntegratorSettings& settings,
                                    int sample_count = 0);

using Integrand = std::function<double(int segment, double t, const Vec& x)>;

struct QuadratureResult {
  DenseTrajectory trajectory;
  // Integral over [start, end] with the usual orientation, independent of the
  // integration direction.
  double integral = 0.0;
};

/// Same as integrate_piecewise, with one extra state accumulating
/// the integral of `integrand` along the solution. The quadrature state takes
/// part in error control.
QuadratureResult integrate_with_quadrature(const PiecewiseOde& ode, const Vec& x_start,
                                           const Integrand& integrand, Direction direction,
                                           const IntegratorSettings& settings,
                                           int sample_count = 0);

}  // namespace spa
