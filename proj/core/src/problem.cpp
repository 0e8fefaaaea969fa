#include "spa/problem.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "spa/error.hpp"

namespace spa {

ControlPhase ControlPhase::constant(Vec u, Bound lower, Bound upper) {
  ControlPhase ph;
  ph.kind = LawKind::Constant;
  ph.law = [u = std::move(u)](const Vec&, const Vec&, double) { return u; };
  ph.lower = std::move(lower);
  ph.upper = std::move(upper);
  return ph;
}

ControlPhase ControlPhase::state_feedback(Law law, LawJacobian law_dx, Bound lower,
                                          Bound upper) {
  ControlPhase ph;
  ph.kind = LawKind::StateFeedback;
  ph.law = std::move(law);
  ph.law_dx = std::move(law_dx);
  ph.lower = std::move(lower);
  ph.upper = std::move(upper);
  return ph;
}

ControlPhase ControlPhase::costate_feedback(Law law, Bound lower, Bound upper) {
  ControlPhase ph;
  ph.kind = LawKind::StateCostateFeedback;
  ph.law = std::move(law);
  ph.lower = std::move(lower);
  ph.upper = std::move(upper);
  return ph;
}

ControlPhase::Bound constant_bound(Vec value) {
  return [v = std::move(value)](double) { return v; };
}

void ProblemDef::validate() const {
  auto fail = [this](const std::string& what) {
    throw Error(ErrorCode::InvalidArgument, "problem '" + name + "': " + what);
  };
  if (n <= 0 || m <= 0) fail("state and control dimensions must be positive");
  if (x0.size() != n) fail("x0 has the wrong dimension");
  if (phases.empty()) fail("at least one phase is required");
  if (!f || !f_x || !f_u || !objective || !objective_grad) fail("missing callback");
  if (!(T > 0.0)) fail("horizon must be positive");
  for (std::size_t j = 0; j < phases.size(); ++j) {
    const auto& ph = phases[j];
    if (!ph.law || !ph.lower || !ph.upper) fail("phase " + std::to_string(j) + " incomplete");
    if (ph.kind == LawKind::StateCostateFeedback && !is_case2()) {
      fail("phase " + std::to_string(j) + " depends on the costate in a Case-1 problem");
    }
  }
}

double horizon(const ProblemDef& prob, const SwitchConfig& cfg) {
  return prob.free_time && cfg.T ? *cfg.T : prob.T;
}

void validate_config(const ProblemDef& prob, const SwitchConfig& cfg, double gap_fraction) {
  const int k = prob.switch_count();
  if (cfg.s.size() != k) {
    throw Error(ErrorCode::InvalidArgument, "expected " + std::to_string(k) +
                                                " switch points, got " +
                                                std::to_string(cfg.s.size()));
  }
  if (prob.is_case2() != cfg.p0.has_value()) {
    throw Error(ErrorCode::InvalidArgument,
                prob.is_case2() ? "Case-2 problems need an initial costate p0"
                                : "p0 given for a Case-1 problem");
  }
  if (cfg.p0 && cfg.p0->size() != prob.n) {
    throw Error(ErrorCode::InvalidArgument, "p0 has the wrong dimension");
  }
  if (prob.free_time != cfg.T.has_value()) {
    throw Error(ErrorCode::InvalidArgument, prob.free_time
                                                ? "free-time problems need a terminal time T"
                                                : "T given for a fixed-time problem");
  }
  const double T = horizon(prob, cfg);
  if (!(T > 0.0) || !std::isfinite(T)) {
    throw Error(ErrorCode::InvalidArgument, "terminal time must be positive");
  }
  const double gap = gap_fraction * T;
  double prev = 0.0;
  for (int j = 0; j <= k; ++j) {
    const double cur = j < k ? cfg.s[j] : T;
    if (!std::isfinite(cur) || cur - prev < gap || !(cur > prev)) {
      throw Error(ErrorCode::InvalidSwitchOrder,
                  "switch points must satisfy 0 < s_1 < ... < s_k < T with minimum gap " +
                      std::to_string(gap));
    }
    prev = cur;
  }
}

Vec phase_control(const ProblemDef& prob, int j, double t, const Vec& x, const Vec& p) {
  const auto& ph = prob.phases.at(static_cast<std::size_t>(j));
  if (ph.kind == LawKind::StateCostateFeedback) {
    if (p.size() != prob.n) {
      throw Error(ErrorCode::MissingCostate,
                  "phase " + std::to_string(j) + " needs the costate but none was supplied");
    }
    return ph.law(x, p, t);
  }
  return ph.law(x, Vec(), t);
}

Vec phase_dynamics(const ProblemDef& prob, int j, double t, const Vec& x, const Vec& p) {
  return prob.f(x, phase_control(prob, j, t, x, p));
}

namespace {

Mat fd_law_jacobian(const ProblemDef& prob, int j, double t, const Vec& x) {
  Mat J(prob.m, prob.n);
  Vec xp = x, xm = x;
  for (int i = 0; i < prob.n; ++i) {
    const double h = 1e-6 * std::max(1.0, std::abs(x[i]));
    xp[i] = x[i] + h;
    xm[i] = x[i] - h;
    J.col(i) = (phase_control(prob, j, t, xp) - phase_control(prob, j, t, xm)) / (2.0 * h);
    xp[i] = xm[i] = x[i];
  }
  return J;
}

}  // namespace

Mat phase_jacobian(const ProblemDef& prob, int j, double t, const Vec& x) {
  const auto& ph = prob.phases.at(static_cast<std::size_t>(j));
  const Vec u = phase_control(prob, j, t, x);
  Mat J = prob.f_x(x, u);
  switch (ph.kind) {
    case LawKind::Constant:
      break;
    case LawKind::StateFeedback: {
      const Mat dphi = ph.law_dx ? ph.law_dx(x, Vec(), t) : fd_law_jacobian(prob, j, t, x);
      J += prob.f_u(x, u) * dphi;
      break;
    }
    case LawKind::StateCostateFeedback:
      throw Error(ErrorCode::InvalidArgument,
                  "phase_jacobian is undefined for costate-feedback phases");
  }
  return J;
}

Mat phase_fx(const ProblemDef& prob, int j, double t, const Vec& x, const Vec& p) {
  return prob.f_x(x, phase_control(prob, j, t, x, p));
}

Vec control_feasibility(const ProblemDef& prob, int j, double t, const Vec& x, const Vec& p) {
  const auto& ph = prob.phases.at(static_cast<std::size_t>(j));
  const Vec u = phase_control(prob, j, t, x, p);
  return (u - ph.lower(t)).cwiseMin(ph.upper(t) - u);
}

double generalized_hamiltonian(const ProblemDef& prob, int j, double t, const Vec& x,
                               const Vec& p, const Vec& y1, const Vec& y2) {
  const Vec u = phase_control(prob, j, t, x, p);
  return y1.dot(prob.f(x, u)) - p.dot(prob.f_x(x, u) * y2);
}

std::pair<Vec, Vec> numeric_case2_derivs(const ProblemDef& prob, int j, double t, const Vec& x,
                                         const Vec& p, const Vec& y1, const Vec& y2,
                                         double fd_rel) {
  const int n = prob.n;
  Vec gx(n), gp(n);
  Vec xv = x, pv = p;
  for (int i = 0; i < n; ++i) {
    const double h = fd_rel * std::max(1.0, std::abs(x[i]));
    xv[i] = x[i] + h;
    const double hp = generalized_hamiltonian(prob, j, t, xv, p, y1, y2);
    xv[i] = x[i] - h;
    const double hm = generalized_hamiltonian(prob, j, t, xv, p, y1, y2);
    xv[i] = x[i];
    gx[i] = (hp - hm) / (2.0 * h);
  }
  for (int i = 0; i < n; ++i) {
    const double h = fd_rel * std::max(1.0, std::abs(p[i]));
    pv[i] = p[i] + h;
    const double hp = generalized_hamiltonian(prob, j, t, x, pv, y1, y2);
    pv[i] = p[i] - h;
    const double hm = generalized_hamiltonian(prob, j, t, x, pv, y1, y2);
    pv[i] = p[i];
    gp[i] = (hp - hm) / (2.0 * h);
  }
  if (!gx.allFinite() || !gp.allFinite()) {
    throw Error(ErrorCode::NonFiniteDerivative,
                "generalized Hamiltonian gradient is not finite in phase " + std::to_string(j));
  }
  return {gx, gp};
}

}  // namespace spa
