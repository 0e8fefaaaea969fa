#include "spa/gradients.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "spa/error.hpp"

namespace spa {
namespace {

// Scaled problem data shared by both sweeps.
struct Scaled {
  double T = 0.0;
  std::vector<double> tau_breaks;  // 0, s_1/T, ..., 1
  Vec p0;                          // empty in Case 1
};

Scaled scale_config(const ProblemDef& prob, const SwitchConfig& cfg, double T) {
  Scaled sc;
  sc.T = T;
  const int k = prob.switch_count();
  sc.tau_breaks.reserve(static_cast<std::size_t>(k) + 2);
  sc.tau_breaks.push_back(0.0);
  for (int j = 0; j < k; ++j) sc.tau_breaks.push_back(cfg.s[j] / T);
  sc.tau_breaks.push_back(1.0);
  if (cfg.p0) sc.p0 = *cfg.p0;
  return sc;
}

void to_physical_time(DenseTrajectory& tr, double T) {
  for (auto& t : tr.sample_times) t *= T;
  for (auto& nd : tr.nodes) {
    nd.t *= T;
    nd.dx /= T;
  }
}

TrajectoryRecord forward_impl(const ProblemDef& prob, const Scaled& sc,
                              const GradientSettings& settings) {
  const int n = prob.n;
  const bool case2 = prob.is_case2();
  const double T = sc.T;

  PiecewiseOde ode;
  ode.dim = case2 ? 2 * n : n;
  ode.breakpoints = sc.tau_breaks;
  if (case2) {
    ode.rhs = [&prob, n, T](int j, double tau, const Vec& z) {
      const Vec x = z.head(n);
      const Vec p = z.tail(n);
      const Vec u = phase_control(prob, j, tau * T, x, p);
      Vec dz(2 * n);
      dz.head(n) = T * prob.f(x, u);
      dz.tail(n) = -T * (prob.f_x(x, u).transpose() * p);
      return dz;
    };
  } else {
    ode.rhs = [&prob, T](int j, double tau, const Vec& x) -> Vec {
      return T * phase_dynamics(prob, j, tau * T, x);
    };
  }

  Vec z0(ode.dim);
  z0.head(n) = prob.x0;
  if (case2) z0.tail(n) = sc.p0;

  TrajectoryRecord rec;
  rec.T = T;
  rec.state_dim = ode.dim;
  rec.trajectory = integrate_piecewise(ode, z0, Direction::Forward, settings.ode,
                                       settings.sample_count);
  rec.checkpoints = rec.trajectory.breakpoint_states;
  for (double tb : sc.tau_breaks) rec.switch_times.push_back(tb * T);
  rec.switch_times.back() = T;
  rec.x_final = rec.checkpoints.back().head(n);
  rec.objective = prob.objective(rec.x_final);

  rec.worst_margins.assign(prob.phases.size(), std::numeric_limits<double>::infinity());
  for (const auto& nd : rec.trajectory.nodes) {
    const Vec x = nd.x.head(n);
    const Vec p = case2 ? Vec(nd.x.tail(n)) : Vec();
    const Vec margin = control_feasibility(prob, nd.segment, nd.t * T, x, p);
    auto& w = rec.worst_margins[static_cast<std::size_t>(nd.segment)];
    w = std::min(w, margin.minCoeff());
  }
  to_physical_time(rec.trajectory, T);
  return rec;
}

struct Case2Gradient {
  const ProblemDef& prob;
  double fd_rel;
  bool analytic;

  std::pair<Vec, Vec> operator()(int j, double t, const Vec& x, const Vec& p, const Vec& y1,
                                 const Vec& y2) const {
    if (analytic) return prob.case2_derivs(j, x, p, y1, y2, t);
    return numeric_case2_derivs(prob, j, t, x, p, y1, y2, fd_rel);
  }
};

// Hamiltonian of phase j at a switch time: p f_j (Case 1) or the generalized
// Hamiltonian (Case 2).
double phase_hamiltonian(const ProblemDef& prob, int j, double t, const Vec& z, const Vec& y1,
                         const Vec& y2) {
  const int n = prob.n;
  if (prob.is_case2()) {
    return generalized_hamiltonian(prob, j, t, z.head(n), z.tail(n), y1, y2);
  }
  return y1.dot(phase_dynamics(prob, j, t, z.head(n)));
}

CostateRecord backward_impl(const ProblemDef& prob, const Scaled& sc,
                            const TrajectoryRecord& fwd, const GradientSettings& settings) {
  const int n = prob.n;
  const int k = prob.switch_count();
  const bool case2 = prob.is_case2();
  const double T = sc.T;
  if (fwd.checkpoints.size() != static_cast<std::size_t>(k) + 2 || fwd.T != T) {
    throw Error(ErrorCode::InvalidArgument,
                "forward record does not belong to this problem/configuration");
  }

  CostateRecord rec;
  rec.analytic_case2 = case2 && settings.prefer_analytic_case2 && bool(prob.case2_derivs);
  const Case2Gradient hgrad{prob, settings.fd_rel, rec.analytic_case2};

  rec.y1.assign(static_cast<std::size_t>(k) + 2, Vec::Zero(n));
  rec.y2.assign(static_cast<std::size_t>(k) + 2, Vec::Zero(n));
  Vec y1 = prob.objective_grad(fwd.x_final);
  Vec y2 = Vec::Zero(n);
  rec.y1.back() = y1;

  const int ydim = case2 ? 2 * n : n;
  const int gdim = case2 ? 2 * n : n;  // generalized state (x) or (x, p)
  std::vector<TrajectoryNode> nodes;
  IntegratorStats stats;

  for (int j = k; j >= 0; --j) {
    PiecewiseOde ode;
    ode.dim = gdim + ydim;
    ode.breakpoints = {sc.tau_breaks[static_cast<std::size_t>(j)],
                       sc.tau_breaks[static_cast<std::size_t>(j) + 1]};
    Integrand integrand;
    if (case2) {
      ode.rhs = [&prob, &hgrad, n, T, j](int, double tau, const Vec& z) {
        const double t = tau * T;
        const Vec x = z.segment(0, n), p = z.segment(n, n);
        const Vec w1 = z.segment(2 * n, n), w2 = z.segment(3 * n, n);
        const Vec u = phase_control(prob, j, t, x, p);
        const auto [gx, gp] = hgrad(j, t, x, p, w1, w2);
        Vec dz(4 * n);
        dz.segment(0, n) = T * prob.f(x, u);
        dz.segment(n, n) = -T * (prob.f_x(x, u).transpose() * p);
        dz.segment(2 * n, n) = -T * gx;
        dz.segment(3 * n, n) = -T * gp;
        return dz;
      };
      integrand = [&prob, n, T, j](int, double tau, const Vec& z) {
        return generalized_hamiltonian(prob, j, tau * T, z.segment(0, n), z.segment(n, n),
                                       z.segment(2 * n, n), z.segment(3 * n, n));
      };
    } else {
      ode.rhs = [&prob, n, T, j](int, double tau, const Vec& z) {
        const double t = tau * T;
        const Vec x = z.head(n), p = z.tail(n);
        Vec dz(2 * n);
        dz.head(n) = T * phase_dynamics(prob, j, t, x);
        dz.tail(n) = -T * (phase_jacobian(prob, j, t, x).transpose() * p);
        return dz;
      };
      integrand = [&prob, n, T, j](int, double tau, const Vec& z) {
        return z.tail(n).dot(phase_dynamics(prob, j, tau * T, z.head(n)));
      };
    }

    Vec z_end(ode.dim);
    z_end.head(gdim) = fwd.checkpoints[static_cast<std::size_t>(j) + 1];
    z_end.segment(gdim, n) = y1;
    if (case2) z_end.tail(n) = y2;

    QuadratureResult q;
    try {
      q = integrate_with_quadrature(ode, z_end, integrand, Direction::Backward, settings.ode, 0);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::StepUnderflow) {
        throw Error(ErrorCode::StepUnderflow,
                    std::string("backward sweep diverged on phase ") + std::to_string(j) +
                        "; tighter integrator tolerances may help (" + e.what() + ")");
      }
      throw;
    }
    rec.hamiltonian_integral += q.integral;

    const Vec& z_start = q.trajectory.final_state;
    y1 = z_start.segment(gdim, n);
    if (case2) y2 = z_start.tail(n);
    rec.y1[static_cast<std::size_t>(j)] = y1;
    rec.y2[static_cast<std::size_t>(j)] = y2;

    stats.accepted_steps += q.trajectory.stats.accepted_steps;
    stats.rejected_steps += q.trajectory.stats.rejected_steps;
    stats.rhs_evals += q.trajectory.stats.rhs_evals;
    std::vector<TrajectoryNode> phase_nodes;
    for (const auto& nd : q.trajectory.nodes) {
      phase_nodes.push_back({nd.t * T, nd.x.tail(ydim), nd.dx.tail(ydim) / T, j});
    }
    nodes.insert(nodes.begin(), phase_nodes.begin(), phase_nodes.end());
  }

  DenseTrajectory& tr = rec.trajectory;
  tr.nodes = std::move(nodes);
  tr.stats = stats;
  for (int j = 0; j <= k + 1; ++j) {
    Vec y(ydim);
    y.head(n) = rec.y1[static_cast<std::size_t>(j)];
    if (case2) y.tail(n) = rec.y2[static_cast<std::size_t>(j)];
    tr.breakpoint_states.push_back(y);
  }
  tr.final_state = tr.breakpoint_states.front();
  if (settings.sample_count > 0) {
    for (int i = 0; i < settings.sample_count; ++i) {
      const double t = settings.sample_count == 1
                           ? 0.0
                           : (i + 1 == settings.sample_count
                                  ? T
                                  : T * i / (settings.sample_count - 1));
      tr.sample_times.push_back(t);
      tr.sample_states.push_back(tr.interpolate(t));
    }
  } else {
    for (const auto& nd : tr.nodes) {
      tr.sample_times.push_back(nd.t);
      tr.sample_states.push_back(nd.x);
    }
  }
  return rec;
}

GradientBundle assemble(const ProblemDef& prob, const TrajectoryRecord& fwd,
                        const CostateRecord& bwd, bool want_dT) {
  const int k = prob.switch_count();
  GradientBundle g;
  g.objective = fwd.objective;
  g.d_s.resize(k);
  g.hamiltonian_jumps.resize(static_cast<std::size_t>(k));
  for (int j = 1; j <= k; ++j) {
    const auto idx = static_cast<std::size_t>(j);
    const double t = fwd.switch_times[idx];
    const Vec& z = fwd.checkpoints[idx];
    HamiltonianJump jump;
    jump.left = phase_hamiltonian(prob, j - 1, t, z, bwd.y1[idx], bwd.y2[idx]);
    jump.right = phase_hamiltonian(prob, j, t, z, bwd.y1[idx], bwd.y2[idx]);
    g.hamiltonian_jumps[idx - 1] = jump;
    g.d_s[j - 1] = jump.left - jump.right;
  }
  if (prob.is_case2()) g.d_p0 = bwd.y2.front();
  if (want_dT) g.d_T = bwd.hamiltonian_integral;
  g.feasibility_margins = fwd.worst_margins;
  g.analytic_case2 = bwd.analytic_case2;
  return g;
}

}  // namespace

TrajectoryRecord forward_sweep(const ProblemDef& prob, const SwitchConfig& cfg,
                               const GradientSettings& settings) {
  validate_config(prob, cfg, settings.gap_fraction);
  return forward_impl(prob, scale_config(prob, cfg, horizon(prob, cfg)), settings);
}

CostateRecord backward_sweep(const ProblemDef& prob, const SwitchConfig& cfg,
                             const TrajectoryRecord& fwd, const GradientSettings& settings) {
  validate_config(prob, cfg, settings.gap_fraction);
  return backward_impl(prob, scale_config(prob, cfg, horizon(prob, cfg)), fwd, settings);
}

GradientBundle evaluate_gradient(const ProblemDef& prob, const SwitchConfig& cfg,
                                 const GradientSettings& settings, TimeDerivative want_dT) {
  validate_config(prob, cfg, settings.gap_fraction);
  const Scaled sc = scale_config(prob, cfg, horizon(prob, cfg));
  const TrajectoryRecord fwd = forward_impl(prob, sc, settings);
  const CostateRecord bwd = backward_impl(prob, sc, fwd, settings);
  return assemble(prob, fwd, bwd, prob.free_time || want_dT == TimeDerivative::Always);
}

double evaluate_objective(const ProblemDef& prob, const SwitchConfig& cfg,
                          const GradientSettings& settings) {
  GradientSettings quiet = settings;
  quiet.sample_count = 0;
  return forward_sweep(prob, cfg, quiet).objective;
}

double objective_at_horizon(const ProblemDef& prob, const SwitchConfig& cfg, double T,
                            const GradientSettings& settings) {
  validate_config(prob, cfg, settings.gap_fraction);
  const double T_cfg = horizon(prob, cfg);
  if (!(T > 0.0)) throw Error(ErrorCode::InvalidArgument, "terminal time must be positive");
  Scaled sc = scale_config(prob, cfg, T_cfg);
  sc.T = T;
  GradientSettings quiet = settings;
  quiet.sample_count = 0;
  return forward_impl(prob, sc, quiet).objective;
}

FreeTimeCheck free_time_gradient_check(const ProblemDef& prob, const SwitchConfig& cfg,
                                       const GradientSettings& settings, double fd_step) {
  FreeTimeCheck out;
  out.analytic = *evaluate_gradient(prob, cfg, settings, TimeDerivative::Always).d_T;
  const double T = horizon(prob, cfg);
  const double h = fd_step * std::max(1.0, T);
  out.fd = (objective_at_horizon(prob, cfg, T + h, settings) -
            objective_at_horizon(prob, cfg, T - h, settings)) /
           (2.0 * h);
  return out;
}

}  // namespace spa
