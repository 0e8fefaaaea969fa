#include "spa/benchmarks.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "spa/error.hpp"

namespace spa {
namespace {

Vec vec1(double v) {
  Vec out(1);
  out << v;
  return out;
}

Vec vec2(double a, double b) {
  Vec out(2);
  out << a, b;
  return out;
}

Vec vec3(double a, double b, double c) {
  Vec out(3);
  out << a, b, c;
  return out;
}

// --- catalyst -------------------------------------------------------------

struct CatalystModel {
  double k1, k2, k3;

  Vec f(const Vec& x, double u) const {
    const double r = k1 * x[0] - k2 * x[1];
    return vec2(-u * r, u * r - (1.0 - u) * k3 * x[1]);
  }
  // f_x = A0 + u A1 with constant A0, A1.
  Mat A0() const {
    Mat m(2, 2);
    m << 0.0, 0.0, 0.0, -k3;
    return m;
  }
  Mat A1() const {
    Mat m(2, 2);
    m << -k1, k2, k1, -k2 + k3;
    return m;
  }
  Mat f_x(double u) const { return A0() + u * A1(); }
  Vec f_u(const Vec& x) const {
    const double r = k1 * x[0] - k2 * x[1];
    return vec2(-r, r + k3 * x[1]);
  }

  // Numerator / denominator of the costate-dependent singular control.
  double num(const Vec& x, const Vec& p) const {
    return -k3 * (k1 * x[0] * p[1] + k2 * x[1] * p[0]);
  }
  double den(const Vec& x, const Vec& p) const {
    const double kk = k2 - k3 - k1;
    return p[0] * (k2 * x[1] * kk - 2.0 * k1 * k2 * x[0]) +
           p[1] * (k1 * x[0] * kk + 2.0 * k1 * k2 * x[1]);
  }
  double phi(const Vec& x, const Vec& p) const { return num(x, p) / den(x, p); }

  // d(phi)/dx and d(phi)/dp by the quotient rule.
  std::pair<Vec, Vec> phi_grad(const Vec& x, const Vec& p) const {
    const double kk = k2 - k3 - k1;
    const double N = num(x, p), D = den(x, p);
    const Vec dN_dx = vec2(-k3 * k1 * p[1], -k3 * k2 * p[0]);
    const Vec dN_dp = vec2(-k3 * k2 * x[1], -k3 * k1 * x[0]);
    const Vec dD_dx = vec2(-2.0 * k1 * k2 * p[0] + k1 * kk * p[1],
                           k2 * kk * p[0] + 2.0 * k1 * k2 * p[1]);
    const Vec dD_dp = vec2(k2 * x[1] * kk - 2.0 * k1 * k2 * x[0],
                           k1 * x[0] * kk + 2.0 * k1 * k2 * x[1]);
    const double phi = N / D;
    return {(dN_dx - phi * dD_dx) / D, (dN_dp - phi * dD_dp) / D};
  }
};

}  // namespace

double catalyst_singular_control(const CatalystParams& params) {
  const double alpha = std::sqrt(params.k3 / params.k2);
  const double beta = params.k1 / params.k2;
  return alpha * (1.0 + alpha) / (beta + (1.0 + alpha) * (1.0 + alpha));
}

double catalyst_singular_feedback(const CatalystParams& params, const Vec& x, const Vec& p) {
  return CatalystModel{params.k1, params.k2, params.k3}.phi(x, p);
}

double catalyst_switching_function(const CatalystParams& params, const Vec& x, const Vec& p) {
  return (p[1] - p[0]) * (params.k1 * x[0] - params.k2 * x[1]) + params.k3 * p[1] * x[1];
}

ProblemDef build_catalyst(const CatalystParams& params) {
  if (!(params.k1 > 0.0 && params.k2 > 0.0 && params.k3 > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "catalyst rate constants must be positive");
  }
  const CatalystModel model{params.k1, params.k2, params.k3};
  const bool case2 = params.problem_case == ProblemCase::CostateFeedback;

  ProblemDef prob;
  prob.name = case2 ? "catalyst2" : "catalyst1";
  prob.n = 2;
  prob.m = 1;
  prob.x0 = vec2(1.0, 0.0);
  prob.T = params.T;
  prob.problem_case = params.problem_case;
  prob.f = [model](const Vec& x, const Vec& u) { return model.f(x, u[0]); };
  prob.f_x = [model](const Vec&, const Vec& u) { return model.f_x(u[0]); };
  prob.f_u = [model](const Vec& x, const Vec&) -> Mat { return model.f_u(x); };
  prob.objective = [](const Vec& x) { return x[0] + x[1] - 1.0; };
  prob.objective_grad = [](const Vec&) { return vec2(1.0, 1.0); };

  auto lo = constant_bound(vec1(0.0));
  auto hi = constant_bound(vec1(1.0));
  prob.phases.push_back(ControlPhase::constant(vec1(1.0), lo, hi));
  if (case2 && !params.constant_singular_law) {
    prob.phases.push_back(ControlPhase::costate_feedback(
        [model](const Vec& x, const Vec& p, double) { return vec1(model.phi(x, p)); }, lo, hi));
  } else {
    prob.phases.push_back(
        ControlPhase::constant(vec1(catalyst_singular_control(params)), lo, hi));
  }
  prob.phases.push_back(ControlPhase::constant(vec1(0.0), lo, hi));

  if (case2) {
    const bool feedback = !params.constant_singular_law;
    const double u_const = catalyst_singular_control(params);
    // Hg_j = y1 f(x, u) - p^T (A0 + u A1) y2 with u = u_j(x, p). The x-part of
    // f_x is constant, so x and p enter the second term only through u.
    prob.case2_derivs = [model, feedback, u_const](int j, const Vec& x, const Vec& p,
                                                   const Vec& y1, const Vec& y2, double) {
      double u = j == 0 ? 1.0 : (j == 2 ? 0.0 : u_const);
      if (j == 1 && feedback) u = model.phi(x, p);
      const Mat fx = model.f_x(u);
      Vec gx = fx.transpose() * y1;
      Vec gp = -(fx * y2);
      if (j == 1 && feedback) {
        const double dH_du = y1.dot(model.f_u(x)) - p.dot(model.A1() * y2);
        const auto [dphi_dx, dphi_dp] = model.phi_grad(x, p);
        gx += dH_du * dphi_dx;
        gp += dH_du * dphi_dp;
      }
      return std::pair<Vec, Vec>{gx, gp};
    };
  }
  prob.validate();
  return prob;
}

ReferenceSolution catalyst_reference(const CatalystParams& params) {
  const double alpha = std::sqrt(params.k3 / params.k2);
  const double beta = params.k1 / params.k2;
  const double s1 = std::log((1.0 + alpha + beta) / alpha) / (params.k2 * (1.0 + beta));
  const double s2 = params.T - std::log(1.0 + alpha) / params.k3;
  ReferenceSolution ref;
  ref.s_star = vec2(s1, s2);
  char buf[48];
  std::snprintf(buf, sizeof buf, "constant %.15g", catalyst_singular_control(params));
  ref.u_sing = buf;
  const bool literature_params = params.k1 == 1.0 && params.k2 == 10.0 && params.k3 == 1.0;
  if (literature_params) {
    if (params.T == 1.0) ref.C_star = -0.048055685860877;
    if (params.T == 4.0) ref.C_star = -0.191814356325161;
    if (params.T == 12.0) ref.C_star = -0.477712020050041;
  }
  return ref;
}

// --- Jacobson ---------------------------------------------------------------

ProblemDef build_jacobson() {
  ProblemDef prob;
  prob.name = "jacobson";
  prob.n = 3;
  prob.m = 1;
  prob.x0 = vec3(0.0, 1.0, 0.0);
  prob.T = 5.0;
  prob.f = [](const Vec& x, const Vec& u) {
    return vec3(x[1], u[0], 0.5 * (x[0] * x[0] + x[1] * x[1]));
  };
  prob.f_x = [](const Vec& x, const Vec&) {
    Mat J = Mat::Zero(3, 3);
    J(0, 1) = 1.0;
    J(2, 0) = x[0];
    J(2, 1) = x[1];
    return J;
  };
  prob.f_u = [](const Vec&, const Vec&) {
    Mat B = Mat::Zero(3, 1);
    B(1, 0) = 1.0;
    return B;
  };
  prob.objective = [](const Vec& x) { return x[2]; };
  prob.objective_grad = [](const Vec&) { return vec3(0.0, 0.0, 1.0); };

  auto lo = constant_bound(vec1(-1.0));
  auto hi = constant_bound(vec1(1.0));
  prob.phases.push_back(ControlPhase::constant(vec1(-1.0), lo, hi));
  prob.phases.push_back(ControlPhase::state_feedback(
      [](const Vec& x, const Vec&, double) { return vec1(x[0]); },
      [](const Vec&, const Vec&, double) {
        Mat J = Mat::Zero(1, 3);
        J(0, 0) = 1.0;
        return J;
      },
      lo, hi));
  prob.validate();
  return prob;
}

long double jacobson_root_residual(long double s) {
  return 1.0L - s * s / 2.0L - std::exp(2.0L * s - 10.0L) * (-1.0L + 2.0L * s - s * s / 2.0L);
}

ReferenceSolution jacobson_reference() {
  ReferenceSolution ref;
  ref.s_star = vec1(1.41376408763006415924);
  ref.u_sing = "u = x1";
  return ref;
}

// --- Bressan ----------------------------------------------------------------

ProblemDef build_bressan(double T) {
  if (!(T > 0.0)) throw Error(ErrorCode::InvalidArgument, "Bressan horizon must be positive");
  ProblemDef prob;
  prob.name = "bressan";
  prob.n = 3;
  prob.m = 1;
  prob.x0 = Vec::Zero(3);
  prob.T = T;
  prob.f = [](const Vec& x, const Vec& u) { return vec3(u[0], -x[0], x[0] * x[0] - x[1]); };
  prob.f_x = [](const Vec& x, const Vec&) {
    Mat J = Mat::Zero(3, 3);
    J(1, 0) = -1.0;
    J(2, 0) = 2.0 * x[0];
    J(2, 1) = -1.0;
    return J;
  };
  prob.f_u = [](const Vec&, const Vec&) {
    Mat B = Mat::Zero(3, 1);
    B(0, 0) = 1.0;
    return B;
  };
  prob.objective = [](const Vec& x) { return x[2]; };
  prob.objective_grad = [](const Vec&) { return vec3(0.0, 0.0, 1.0); };
  auto lo = constant_bound(vec1(-1.0));
  auto hi = constant_bound(vec1(1.0));
  prob.phases.push_back(ControlPhase::constant(vec1(-1.0), lo, hi));
  prob.phases.push_back(ControlPhase::constant(vec1(0.5), lo, hi));
  prob.validate();
  return prob;
}

ReferenceSolution bressan_reference(double T) {
  ReferenceSolution ref;
  ref.s_star = vec1(T / 3.0);
  ref.u_sing = "u = 1/2";
  return ref;
}

// --- Goddard ----------------------------------------------------------------

namespace {

struct GoddardModel {
  GoddardParams p;

  double drag(double h, double v) const { return p.sigma * v * v * std::exp(-h / p.h0); }

  // With k = c / v the bracket term is rewritten over v^2 so that v = 0 is
  // harmless:  Q(v) = [a (v^2 + v^3/c) - v^2 - 2 c v] / (v^2 + 4 c v + 2 c^2).
  double q(double v) const {
    const double a = p.c * p.c / (p.h0 * p.g);
    const double num = a * (v * v + v * v * v / p.c) - v * v - 2.0 * p.c * v;
    const double den = v * v + 4.0 * p.c * v + 2.0 * p.c * p.c;
    return num / den;
  }
  double dq(double v) const {
    const double a = p.c * p.c / (p.h0 * p.g);
    const double num = a * (v * v + v * v * v / p.c) - v * v - 2.0 * p.c * v;
    const double den = v * v + 4.0 * p.c * v + 2.0 * p.c * p.c;
    const double dnum = a * (2.0 * v + 3.0 * v * v / p.c) - 2.0 * v - 2.0 * p.c;
    const double dden = 2.0 * v + 4.0 * p.c;
    return (dnum * den - num * dden) / (den * den);
  }
  double u_sing(const Vec& x) const {
    const double mg = x[2] * p.g;
    return drag(x[0], x[1]) + mg + mg * q(x[1]);
  }
  Mat u_sing_dx(const Vec& x) const {
    const double e = std::exp(-x[0] / p.h0);
    Mat J(1, 3);
    J(0, 0) = -drag(x[0], x[1]) / p.h0;
    J(0, 1) = 2.0 * p.sigma * x[1] * e + x[2] * p.g * dq(x[1]);
    J(0, 2) = p.g * (1.0 + q(x[1]));
    return J;
  }
};

}  // namespace

double goddard_singular_thrust(const GoddardParams& params, const Vec& x) {
  return GoddardModel{params}.u_sing(x);
}

ProblemDef build_goddard(const GoddardParams& params) {
  if (!(params.u_max > 0 && params.g > 0 && params.sigma > 0 && params.c > 0 && params.h0 > 0)) {
    throw Error(ErrorCode::InvalidArgument, "Goddard physical constants must be positive");
  }
  const GoddardModel model{params};
  ProblemDef prob;
  prob.name = "goddard";
  prob.n = 3;
  prob.m = 1;
  prob.x0 = vec3(0.0, 0.0, 3.0);
  prob.T = params.T_guess;
  prob.free_time = true;
  prob.f = [model](const Vec& x, const Vec& u) {
    const double D = model.drag(x[0], x[1]);
    return vec3(x[1], (u[0] - D) / x[2] - model.p.g, -u[0] / model.p.c);
  };
  prob.f_x = [model](const Vec& x, const Vec& u) {
    const double D = model.drag(x[0], x[1]);
    const double e = std::exp(-x[0] / model.p.h0);
    Mat J = Mat::Zero(3, 3);
    J(0, 1) = 1.0;
    J(1, 0) = D / (model.p.h0 * x[2]);
    J(1, 1) = -2.0 * model.p.sigma * x[1] * e / x[2];
    J(1, 2) = -(u[0] - D) / (x[2] * x[2]);
    return J;
  };
  prob.f_u = [model](const Vec& x, const Vec&) {
    Mat B(3, 1);
    B << 0.0, 1.0 / x[2], -1.0 / model.p.c;
    return B;
  };
  const double beta = params.beta_pen, rho = params.rho_pen;
  prob.objective = [beta, rho](const Vec& x) {
    const double dm = x[2] - 1.0;
    return -x[0] + beta * dm + 0.5 * rho * dm * dm;
  };
  prob.objective_grad = [beta, rho](const Vec& x) {
    return vec3(-1.0, 0.0, beta + rho * (x[2] - 1.0));
  };
  auto lo = constant_bound(vec1(0.0));
  auto hi = constant_bound(vec1(params.u_max));
  prob.phases.push_back(ControlPhase::constant(vec1(params.u_max), lo, hi));
  prob.phases.push_back(ControlPhase::state_feedback(
      [model](const Vec& x, const Vec&, double) { return vec1(model.u_sing(x)); },
      [model](const Vec& x, const Vec&, double) { return model.u_sing_dx(x); }, lo, hi));
  prob.phases.push_back(ControlPhase::constant(vec1(0.0), lo, hi));
  prob.validate();
  return prob;
}

ReferenceSolution goddard_reference() {
  ReferenceSolution ref;
  ref.s_star = vec2(13.75532627577406, 21.98890645593362);
  ref.T_star = 42.88910958027504;
  ref.u_sing = "singular thrust law of (h, v, m)";
  return ref;
}

// --- registry ---------------------------------------------------------------

std::map<std::string, double> reference_errors(const ReferenceSolution& ref,
                                               const SwitchConfig& cfg, double objective) {
  std::map<std::string, double> out;
  const auto k = std::min(ref.s_star.size(), cfg.s.size());
  for (Eigen::Index j = 0; j < k; ++j) {
    out["s" + std::to_string(j + 1)] = std::abs(cfg.s[j] - ref.s_star[j]);
  }
  if (ref.T_star && cfg.T) out["T"] = std::abs(*cfg.T - *ref.T_star);
  if (ref.C_star) out["C"] = std::abs(objective - *ref.C_star);
  return out;
}

const std::vector<std::string>& problem_names() {
  static const std::vector<std::string> names{"catalyst1", "catalyst2", "jacobson", "bressan",
                                              "goddard"};
  return names;
}

NamedProblem make_named_problem(const std::string& name, std::optional<double> T) {
  NamedProblem out;
  if (name == "catalyst1" || name == "catalyst2") {
    CatalystParams cp;
    cp.T = T.value_or(1.0);
    cp.problem_case =
        name == "catalyst2" ? ProblemCase::CostateFeedback : ProblemCase::StateFeedback;
    out.problem = build_catalyst(cp);
    out.reference = catalyst_reference(cp);
    // One-significant-digit guesses in the spirit of (0.1, 0.7) for T = 1.
    out.start.s = vec2(0.1, cp.T - 0.3);
    if (cp.problem_case == ProblemCase::CostateFeedback) {
      if (cp.T == 1.0) {
        out.start.p0 = vec2(0.9, 0.8);
      } else {
        // The costate-feedback law blows up if the singular arc is entered
        // before the optimal first switch, and the arc is long for T > 1.
        out.start.s[0] = 0.2;
      }
    }
  } else if (name == "jacobson") {
    if (T && *T != 5.0) throw Error(ErrorCode::InvalidArgument, "jacobson has fixed T = 5");
    out.problem = build_jacobson();
    out.reference = jacobson_reference();
    out.start.s = vec1(1.41);
    out.bracket = std::pair{1.41, 1.42};
  } else if (name == "bressan") {
    const double TT = T.value_or(10.0);
    out.problem = build_bressan(TT);
    out.reference = bressan_reference(TT);
    out.start.s = vec1(0.3 * TT);
    out.bracket = std::pair{0.3 * TT, 0.4 * TT};
  } else if (name == "goddard") {
    GoddardParams gp;
    if (T) gp.T_guess = *T;
    out.problem = build_goddard(gp);
    out.reference = goddard_reference();
    out.start.s = vec2(13.0, 21.0);
    out.start.T = gp.T_guess;
  } else {
    throw Error(ErrorCode::InvalidArgument, "unknown problem '" + name + "'");
  }
  return out;
}

}  // namespace spa
