#include "spa/warmstart.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace spa {

Vec tv_prox(const Vec& signal, double weight) {
  if (!(weight >= 0.0)) throw Error(ErrorCode::InvalidArgument, "TV weight must be non-negative");
  const auto width = signal.size();
  Vec out(width);
  if (width == 0) return out;
  if (weight == 0.0 || width == 1) return signal;

  // Direct algorithm of Condat for 1-D TV denoising: grows the current
  // segment while tracking the range of admissible levels (vmin, vmax) and
  // the dual residuals (umin, umax), emitting segments when they are forced.
  const double lam = weight;
  const double twolam = 2.0 * lam;
  Eigen::Index k = 0, k0 = 0, kplus = 0, kminus = 0;
  double umin = lam, umax = -lam;
  double vmin = signal[0] - lam, vmax = signal[0] + lam;
  for (;;) {
    while (k == width - 1) {
      if (umin < 0.0) {
        do out[k0++] = vmin;
        while (k0 <= kminus);
        k = kminus = k0;
        vmin = signal[k];
        umin = lam;
        umax = vmin + umin - vmax;
      } else if (umax > 0.0) {
        do out[k0++] = vmax;
        while (k0 <= kplus);
        k = kplus = k0;
        vmax = signal[k];
        umax = -lam;
        umin = vmax + umax - vmin;
      } else {
        vmin += umin / static_cast<double>(k - k0 + 1);
        do out[k0++] = vmin;
        while (k0 <= k);
        return out;
      }
    }
    if ((umin += signal[k + 1] - vmin) < -lam) {
      do out[k0++] = vmin;
      while (k0 <= kminus);
      k = kplus = kminus = k0;
      vmin = signal[k];
      vmax = vmin + twolam;
      umin = lam;
      umax = -lam;
    } else if ((umax += signal[k + 1] - vmax) > lam) {
      do out[k0++] = vmax;
      while (k0 <= kplus);
      k = kplus = kminus = k0;
      vmax = signal[k];
      vmin = vmax - twolam;
      umin = lam;
      umax = -lam;
    } else {
      ++k;
      if (umin >= lam) {
        kminus = k;
        vmin += (umin - lam) / static_cast<double>(kminus - k0 + 1);
        umin = lam;
      }
      if (umax <= -lam) {
        kplus = k;
        vmax += (umax + lam) / static_cast<double>(kplus - k0 + 1);
        umax = -lam;
      }
    }
  }
}

double DiscreteControlProblem::total_variation() const {
  double tv = 0.0;
  for (Eigen::Index j = 1; j < u.cols(); ++j) tv += (u.col(j) - u.col(j - 1)).cwiseAbs().sum();
  return tv;
}

DiscreteEvaluation evaluate_discrete(const ProblemDef& prob, const Mat& u, double h) {
  const auto N = u.cols();
  DiscreteEvaluation ev;
  ev.x.resize(static_cast<std::size_t>(N + 1));
  ev.x[0] = prob.x0;
  for (Eigen::Index j = 0; j < N; ++j) {
    const auto jj = static_cast<std::size_t>(j);
    ev.x[jj + 1] = ev.x[jj] + h * prob.f(ev.x[jj], u.col(j));
    if (!ev.x[jj + 1].allFinite()) {
      throw Error(ErrorCode::NonFiniteState, "Euler rollout produced a non-finite state");
    }
  }
  ev.cost = prob.objective(ev.x.back());
  ev.lambda.resize(static_cast<std::size_t>(N + 1));
  ev.lambda.back() = prob.objective_grad(ev.x.back());
  ev.grad.resize(u.rows(), N);
  for (Eigen::Index j = N - 1; j >= 0; --j) {
    const auto jj = static_cast<std::size_t>(j);
    const Vec& lam_next = ev.lambda[jj + 1];
    ev.grad.col(j) = h * (prob.f_u(ev.x[jj], u.col(j)).transpose() * lam_next);
    ev.lambda[jj] = lam_next + h * (prob.f_x(ev.x[jj], u.col(j)).transpose() * lam_next);
  }
  return ev;
}

namespace {

Mat prox_step(const Mat& v, double weight, const Mat& lower, const Mat& upper) {
  Mat out(v.rows(), v.cols());
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    out.row(i) = tv_prox(v.row(i).transpose(), weight).transpose();
  }
  return out.cwiseMax(lower).cwiseMin(upper);
}

double tv_of(const Mat& u) {
  double tv = 0.0;
  for (Eigen::Index j = 1; j < u.cols(); ++j) tv += (u.col(j) - u.col(j - 1)).cwiseAbs().sum();
  return tv;
}

// Largest curvature of the discrete cost around u0, by power iteration on
// finite-difference Hessian-vector products.
double estimate_lipschitz(const ProblemDef& prob, const Mat& u0, double h, int iters) {
  const Mat g0 = evaluate_discrete(prob, u0, h).grad;
  Mat v = Mat::Ones(u0.rows(), u0.cols());
  v /= v.norm();
  double L = 0.0;
  for (int it = 0; it < iters; ++it) {
    const double eps = 1e-6 * (1.0 + u0.cwiseAbs().maxCoeff());
    const Mat hv = (evaluate_discrete(prob, u0 + eps * v, h).grad - g0) / eps;
    const double nrm = hv.norm();
    if (!(nrm > 0.0) || !std::isfinite(nrm)) break;
    L = nrm;
    v = hv / nrm;
  }
  return L > 0.0 ? L : 1.0;
}

}  // namespace

DiscreteControlProblem solve_tv_euler(const ProblemDef& prob, int N, double rho_tv,
                                      const TvSettings& settings) {
  if (N < 2) throw Error(ErrorCode::InvalidArgument, "need at least two mesh intervals");
  if (!(rho_tv >= 0.0)) throw Error(ErrorCode::InvalidArgument, "rho_tv must be non-negative");
  if (settings.max_iters < 1) throw Error(ErrorCode::InvalidArgument, "max_iters must be >= 1");

  DiscreteControlProblem dcp;
  dcp.N = N;
  dcp.T = prob.T;
  dcp.h = prob.T / N;
  dcp.rho_tv = rho_tv;
  dcp.lower.resize(prob.m, N);
  dcp.upper.resize(prob.m, N);
  for (int j = 0; j < N; ++j) {
    const double t = dcp.time(j);
    Vec lo = prob.phases.front().lower(t), hi = prob.phases.front().upper(t);
    for (const auto& ph : prob.phases) {
      lo = lo.cwiseMin(ph.lower(t));
      hi = hi.cwiseMax(ph.upper(t));
    }
    dcp.lower.col(j) = lo;
    dcp.upper.col(j) = hi;
  }

  Mat u = 0.5 * (dcp.lower + dcp.upper);
  DiscreteEvaluation ev = evaluate_discrete(prob, u, dcp.h);
  double phi = ev.cost + rho_tv * tv_of(u);
  dcp.objective_history.push_back(phi);
  double step = 1.0 / estimate_lipschitz(prob, u, dcp.h, settings.power_iters);

  int it = 0;
  for (; it < settings.max_iters; ++it) {
    Mat u_new;
    DiscreteEvaluation ev_new;
    double phi_new = 0.0;
    bool accepted = false;
    for (int bt = 0; bt < 60; ++bt) {
      u_new = prox_step(u - step * ev.grad, step * rho_tv, dcp.lower, dcp.upper);
      const Mat du = u_new - u;
      ev_new = evaluate_discrete(prob, u_new, dcp.h);
      const double model = ev.cost + (ev.grad.array() * du.array()).sum() + du.squaredNorm() / (2.0 * step);
      phi_new = ev_new.cost + rho_tv * tv_of(u_new);
      if (ev_new.cost <= model + 1e-15 * std::abs(ev.cost) && phi_new <= phi) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;  // no further decrease is representable
    const double change = std::abs(phi_new - phi);
    u = std::move(u_new);
    ev = std::move(ev_new);
    const double phi_old = phi;
    phi = phi_new;
    dcp.objective_history.push_back(phi);
    step *= settings.step_growth;
    if (change <= settings.rel_tol * std::max(std::abs(phi_old), 1e-300)) {
      dcp.converged = true;
      ++it;
      break;
    }
  }
  if (!dcp.converged && it >= settings.max_iters) dcp.warning = ErrorCode::MaxItersExceeded;
  if (!dcp.converged && it < settings.max_iters) dcp.converged = true;  // stalled at the optimum

  dcp.iterations = it;
  dcp.u = u;
  dcp.terminal_cost = ev.cost;
  dcp.objective = phi;
  // Multiplier of the first Euler constraint, i.e. lambda_1.
  dcp.p0_estimate = ev.lambda[1];
  return dcp;
}

std::string_view to_string(PhaseKind kind) {
  switch (kind) {
    case PhaseKind::BangLow:
      return "bang-low";
    case PhaseKind::BangHigh:
      return "bang-high";
    case PhaseKind::Singular:
      return "singular";
  }
  return "unknown";
}

StructureEstimate detect_structure(const DiscreteControlProblem& dcp,
                                   const DetectSettings& settings) {
  if (dcp.u.cols() != dcp.N || dcp.N < 2) {
    throw Error(ErrorCode::InvalidArgument, "discrete problem has no converged control");
  }
  const Mat range = (dcp.upper - dcp.lower).cwiseMax(std::numeric_limits<double>::min());
  StructureEstimate est;
  est.u_profile = dcp.u;
  est.p0_estimate = dcp.p0_estimate;

  std::vector<int> edges;  // jump between u_j and u_{j+1}
  for (int j = 0; j + 1 < dcp.N; ++j) {
    const double rel =
        ((dcp.u.col(j + 1) - dcp.u.col(j)).cwiseAbs().cwiseQuotient(range.col(j))).maxCoeff();
    if (rel > settings.jump_tol) {
      edges.push_back(j);
      est.jump_sizes.push_back(rel);
    }
  }
  if (edges.empty()) {
    throw Error(ErrorCode::NoStructure, "no control jumps above the detection threshold");
  }
  if (static_cast<int>(edges.size()) > settings.k_max) {
    throw Error(ErrorCode::NoStructure,
                std::to_string(edges.size()) + " jumps detected (limit " +
                    std::to_string(settings.k_max) + "); the control oscillates");
  }

  int start = 0;
  std::vector<int> lengths;
  for (std::size_t e = 0; e <= edges.size(); ++e) {
    const int stop = e < edges.size() ? edges[e] + 1 : dcp.N;  // segment [start, stop)
    const int len = stop - start;
    const Vec mean = dcp.u.middleCols(start, len).rowwise().mean();
    const Vec lo = dcp.lower.middleCols(start, len).rowwise().mean();
    const Vec hi = dcp.upper.middleCols(start, len).rowwise().mean();
    const Vec r = (hi - lo).cwiseMax(std::numeric_limits<double>::min());
    const bool at_low = ((mean - lo).cwiseQuotient(r).array() <= settings.bound_tol).all();
    const bool at_high = ((hi - mean).cwiseQuotient(r).array() <= settings.bound_tol).all();
    est.phase_kinds.push_back(at_low ? PhaseKind::BangLow
                                     : (at_high ? PhaseKind::BangHigh : PhaseKind::Singular));
    lengths.push_back(len);
    if (e < edges.size()) est.switch_times.push_back((edges[e] + 0.5) * dcp.h);
    start = stop;
  }
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    if (lengths[i] < 3) est.spurious = true;
    if (i > 0 && est.phase_kinds[i] == est.phase_kinds[i - 1]) est.spurious = true;
  }
  if (settings.expected_switches &&
      static_cast<int>(est.switch_times.size()) != *settings.expected_switches) {
    est.spurious = true;
  }
  return est;
}

}  // namespace spa
