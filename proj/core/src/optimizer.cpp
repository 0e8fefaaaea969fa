#include "spa/optimizer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <deque>
#include <limits>
#include <thread>

namespace spa {

void OptimizeSettings::validate() const {
  if (!(ls_shrink > 0.0 && ls_shrink < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "ls_shrink must lie in (0, 1)");
  }
  if (!(ls_c1 > 0.0 && ls_c1 < 0.5)) {
    throw Error(ErrorCode::InvalidArgument, "ls_c1 must lie in (0, 1/2)");
  }
  if (!(stat_tol > 0.0)) throw Error(ErrorCode::InvalidArgument, "stat_tol must be positive");
  if (memory < 1) throw Error(ErrorCode::InvalidArgument, "memory must be at least 1");
  if (max_iters < 1) throw Error(ErrorCode::InvalidArgument, "max_iters must be at least 1");
  if (max_backtracks < 1) throw Error(ErrorCode::InvalidArgument, "max_backtracks must be >= 1");
  if (!(noise_factor >= 0.0)) throw Error(ErrorCode::InvalidArgument, "noise_factor must be >= 0");
  if (eps_gap && !(*eps_gap >= 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "eps_gap must be non-negative");
  }
  gradient.ode.validate();
}

Vec project_ordered(const Vec& v, double T, double eps_gap) {
  const auto k = v.size();
  if (!(eps_gap >= 0.0) || !(T > 0.0) || T <= static_cast<double>(k + 1) * eps_gap) {
    throw Error(ErrorCode::InfeasiblePolytope,
                "horizon too short for " + std::to_string(k) + " switch points with the given gap");
  }
  if (k == 0) return v;
  // Shift out the gaps: w_j = v_j - j * eps must be nondecreasing in [0, hi].
  const double hi = T - static_cast<double>(k + 1) * eps_gap;
  std::vector<double> level;
  std::vector<Eigen::Index> count;
  level.reserve(static_cast<std::size_t>(k));
  count.reserve(static_cast<std::size_t>(k));
  for (Eigen::Index j = 0; j < k; ++j) {
    double w = v[j] - static_cast<double>(j + 1) * eps_gap;
    Eigen::Index c = 1;
    while (!level.empty() && level.back() > w) {
      w = (level.back() * static_cast<double>(count.back()) + w * static_cast<double>(c)) /
          static_cast<double>(count.back() + c);
      c += count.back();
      level.pop_back();
      count.pop_back();
    }
    level.push_back(w);
    count.push_back(c);
  }
  Vec out(k);
  Eigen::Index j = 0;
  for (std::size_t b = 0; b < level.size(); ++b) {
    const double w = std::clamp(level[b], 0.0, hi);
    for (Eigen::Index c = 0; c < count[b]; ++c, ++j) {
      out[j] = w + static_cast<double>(j + 1) * eps_gap;
    }
  }
  return out;
}

namespace {

// Optimization variables z = (chain, p0, T). The chain holds the switch
// times (fixed horizon) or the switch fractions s / T (free time).
struct Layout {
  const ProblemDef& prob;
  int k = 0;
  int np = 0;
  bool free_time = false;
  double T_fixed = 0.0;
  double chain_horizon = 1.0;
  double chain_gap = 0.0;

  int size() const { return k + np + (free_time ? 1 : 0); }

  Vec pack(const SwitchConfig& cfg) const {
    Vec z(size());
    const double T = horizon(prob, cfg);
    z.head(k) = free_time ? Vec(cfg.s / T) : cfg.s;
    if (np > 0) z.segment(k, np) = *cfg.p0;
    if (free_time) z[k + np] = *cfg.T;
    return z;
  }

  SwitchConfig unpack(const Vec& z) const {
    SwitchConfig cfg;
    const double T = free_time ? z[k + np] : T_fixed;
    cfg.s = free_time ? Vec(z.head(k) * T) : Vec(z.head(k));
    if (np > 0) cfg.p0 = z.segment(k, np);
    if (free_time) cfg.T = T;
    return cfg;
  }

  Vec gradient(const GradientBundle& b, const Vec& z) const {
    Vec g(size());
    const double T = free_time ? z[k + np] : T_fixed;
    g.head(k) = free_time ? Vec(b.d_s * T) : b.d_s;
    if (np > 0) g.segment(k, np) = *b.d_p0;
    if (free_time) g[k + np] = *b.d_T;
    return g;
  }

  Vec project(const Vec& z) const {
    Vec out = z;
    out.head(k) = project_ordered(z.head(k), chain_horizon, chain_gap);
    return out;
  }
};

struct Evaluation {
  Vec z;
  Vec g;
  GradientBundle bundle;
};

std::optional<Evaluation> try_evaluate(const ProblemDef& prob, const Layout& lay, const Vec& z,
                                       const GradientSettings& gs) {
  try {
    Evaluation e;
    e.z = z;
    e.bundle = evaluate_gradient(prob, lay.unpack(z), gs);
    if (!std::isfinite(e.bundle.objective)) return std::nullopt;
    e.g = lay.gradient(e.bundle, z);
    if (!e.g.allFinite()) return std::nullopt;
    return e;
  } catch (const Error& err) {
    // Trial points outside the integrable region count as no decrease.
    switch (err.code()) {
      case ErrorCode::StepLimitExceeded:
      case ErrorCode::StepUnderflow:
      case ErrorCode::NonFiniteState:
      case ErrorCode::NonFiniteDerivative:
      case ErrorCode::InvalidSwitchOrder:
      case ErrorCode::InvalidArgument:
        return std::nullopt;
      default:
        throw;
    }
  }
}

double worst_of(const std::vector<double>& v) {
  double w = std::numeric_limits<double>::infinity();
  for (double x : v) w = std::min(w, x);
  return w;
}

}  // namespace

SolveReport minimize(const ProblemDef& prob, const SwitchConfig& cfg0,
                     const OptimizeSettings& settings) {
  settings.validate();
  Layout lay{prob};
  lay.k = prob.switch_count();
  lay.np = prob.is_case2() ? prob.n : 0;
  lay.free_time = prob.free_time;
  lay.T_fixed = horizon(prob, cfg0);
  const double T0 = horizon(prob, cfg0);
  const double frac = settings.gradient.gap_fraction;
  // Projection uses a slightly inflated gap so projected points pass the
  // strict ordering check after rounding.
  if (lay.free_time) {
    lay.chain_horizon = 1.0;
    lay.chain_gap = std::max(settings.eps_gap.value_or(0.0) / T0, frac) * (1.0 + 1e-6);
  } else {
    lay.chain_horizon = T0;
    lay.chain_gap = std::max(settings.eps_gap.value_or(0.0), frac * T0) * (1.0 + 1e-6);
  }
  if (cfg0.s.size() != lay.k) {
    throw Error(ErrorCode::InvalidArgument, "expected " + std::to_string(lay.k) +
                                                " switch points, got " +
                                                std::to_string(cfg0.s.size()));
  }
  if (lay.np > 0 && (!cfg0.p0 || cfg0.p0->size() != lay.np)) {
    throw Error(ErrorCode::InvalidArgument, "Case-2 problems need an initial costate p0");
  }
  if (lay.free_time && !cfg0.T) {
    throw Error(ErrorCode::InvalidArgument, "free-time problems need a terminal time T");
  }

  const GradientSettings& gs = settings.gradient;
  auto first = try_evaluate(prob, lay, lay.project(lay.pack(cfg0)), gs);
  if (!first) {
    // Re-run unguarded so the caller sees the underlying error.
    evaluate_gradient(prob, lay.unpack(lay.project(lay.pack(cfg0))), gs);
    throw Error(ErrorCode::NonFiniteState, "objective is not finite at the starting point");
  }
  Evaluation cur = std::move(*first);

  SolveReport rep;
  rep.gradient_evals = 1;
  const double g_scale = std::max(1.0, cur.g.lpNorm<Eigen::Infinity>());
  auto stationarity = [&](const Evaluation& e) {
    return (lay.project(e.z - e.g) - e.z).lpNorm<Eigen::Infinity>() / g_scale;
  };

  auto noise = [&](const Evaluation& e) {
    return settings.noise_factor * gs.ode.rel_tol * std::max(1.0, std::abs(e.bundle.objective));
  };

  // Blockwise diagonal scaling z = D w from the first gradient. A unit step
  // along -g_w then moves each block by its own characteristic length.
  const int n = lay.size();
  Vec D = Vec::Ones(n);
  auto block_scale = [&](int start, int len, double length) {
    if (len == 0) return;
    const double gn = cur.g.segment(start, len).lpNorm<Eigen::Infinity>();
    const double d = gn > 0.0 ? std::sqrt(length / gn) : 1.0;
    D.segment(start, len).setConstant(d);
  };
  block_scale(0, lay.k, lay.chain_horizon);
  if (lay.np > 0) {
    block_scale(lay.k, lay.np, std::max(1.0, cur.z.segment(lay.k, lay.np).lpNorm<Eigen::Infinity>()));
  }
  if (lay.free_time) block_scale(lay.k + lay.np, 1, T0);
  auto to_w = [&](const Vec& z) { return Vec(z.cwiseQuotient(D)); };
  auto to_z = [&](const Vec& w) { return Vec(w.cwiseProduct(D)); };

  std::deque<std::pair<Vec, Vec>> memory;  // (step, gradient change) in w coordinates
  double stat = stationarity(cur);
  rep.trace.push_back({0, cur.bundle.objective, stat, 0.0, lay.unpack(cur.z)});
  const double first_step = 0.1;

  int it = 0;
  for (; it < settings.max_iters && stat > settings.stat_tol; ++it) {
    const Vec w = to_w(cur.z);
    const Vec gw = cur.g.cwiseProduct(D);

    auto direction = [&](bool steepest) {
      if (steepest || memory.empty()) return Vec(-gw * first_step / std::max(1e-300, gw.lpNorm<Eigen::Infinity>()));
      Vec q = gw;
      std::vector<double> alpha(memory.size());
      for (std::size_t i = memory.size(); i-- > 0;) {
        const auto& [s, y] = memory[i];
        alpha[i] = s.dot(q) / y.dot(s);
        q -= alpha[i] * y;
      }
      const auto& [s_last, y_last] = memory.back();
      q *= s_last.dot(y_last) / y_last.dot(y_last);
      for (std::size_t i = 0; i < memory.size(); ++i) {
        const auto& [s, y] = memory[i];
        const double beta = y.dot(q) / y.dot(s);
        q += (alpha[i] - beta) * s;
      }
      return Vec(-q);
    };

    std::optional<Evaluation> next;
    double step_taken = 0.0;
    for (int attempt = 0; attempt < 2 && !next; ++attempt) {
      const bool steepest = attempt == 1 || memory.empty();
      const Vec d = direction(steepest);
      double a = 1.0;
      for (int bt = 0; bt < settings.max_backtracks; ++bt, a *= settings.ls_shrink) {
        const Vec z_trial = lay.project(to_z(w + a * d));
        const Vec dz_w = to_w(z_trial) - w;
        if (dz_w.lpNorm<Eigen::Infinity>() <= 1e-15 * (1.0 + w.lpNorm<Eigen::Infinity>())) break;
        const double decrease = gw.dot(dz_w);
        if (decrease >= 0.0) {
          if (steepest) continue;
          break;  // not a descent arc; fall back to steepest descent
        }
        auto trial = try_evaluate(prob, lay, z_trial, gs);
        ++rep.gradient_evals;
        if (!trial) continue;
        const double f_trial = trial->bundle.objective;
        bool accept = f_trial <= cur.bundle.objective + settings.ls_c1 * decrease;
        if (!accept && settings.approximate_wolfe && f_trial <= cur.bundle.objective + noise(cur)) {
          // Near the optimum the objective decrease drowns in integration
          // error; the slope along the arc is still reliable.
          const double slope_end = trial->g.cwiseProduct(D).dot(dz_w);
          accept = slope_end >= 0.9 * decrease && slope_end <= -0.8 * decrease;
        }
        if (accept) {
          next = std::move(trial);
          step_taken = a;
          break;
        }
      }
      if (!next) memory.clear();
      if (steepest) break;
    }
    if (!next) {
      rep.failure = ErrorCode::LineSearchFailure;
      break;
    }

    const Vec sw = to_w(next->z) - w;
    const Vec yw = next->g.cwiseProduct(D) - gw;
    if (sw.dot(yw) > 1e-12 * sw.norm() * yw.norm()) {
      memory.emplace_back(sw, yw);
      if (static_cast<int>(memory.size()) > settings.memory) memory.pop_front();
    }
    cur = std::move(*next);
    stat = stationarity(cur);
    rep.trace.push_back({it + 1, cur.bundle.objective, stat, step_taken, lay.unpack(cur.z)});
  }

  rep.iterations = it;
  rep.stationarity = stat;
  rep.converged = stat <= settings.stat_tol;
  if (!rep.converged && !rep.failure) rep.failure = ErrorCode::MaxItersExceeded;
  rep.final_cfg = lay.unpack(cur.z);
  rep.objective = cur.bundle.objective;
  rep.worst_margin = worst_of(cur.bundle.feasibility_margins);
  rep.final_gradient = cur.bundle;
  return rep;
}

void require_converged(const SolveReport& report) {
  if (report.converged) return;
  const ErrorCode code = report.failure.value_or(ErrorCode::MaxItersExceeded);
  throw Error(code, "optimizer stopped after " + std::to_string(report.iterations) +
                        " iterations with stationarity " + std::to_string(report.stationarity));
}

SecantResult secant_switch(const ProblemDef& prob, std::pair<double, double> bracket,
                           const OptimizeSettings& settings) {
  settings.validate();
  if (prob.switch_count() != 1) {
    throw Error(ErrorCode::InvalidArgument, "secant_switch needs a single-switch problem");
  }
  if (prob.free_time || prob.is_case2()) {
    throw Error(ErrorCode::InvalidArgument, "secant_switch handles fixed-time Case-1 problems");
  }
  const double T = prob.T;
  auto deriv = [&](double s) {
    SwitchConfig cfg;
    cfg.s = Vec::Constant(1, s);
    return evaluate_gradient(prob, cfg, settings.gradient).d_s[0];
  };
  auto inside = [&](double s) { return std::isfinite(s) && s > 0.0 && s < T; };
  if (!inside(bracket.first) || !inside(bracket.second) || bracket.first == bracket.second) {
    throw Error(ErrorCode::InvalidArgument, "secant start points must be distinct and inside (0, T)");
  }

  SecantResult res;
  double s0 = bracket.first, s1 = bracket.second;
  double g0 = deriv(s0), g1 = deriv(s1);
  res.points = {s0, s1};
  res.derivatives = {g0, g1};
  res.slope = (g1 - g0) / (s1 - s0);
  while (std::abs(g1) > settings.stat_tol) {
    if (res.iterations >= settings.max_iters) {
      throw Error(ErrorCode::SecantDivergence,
                  "no root after " + std::to_string(res.iterations) + " secant steps");
    }
    const double dg = g1 - g0;
    if (dg == 0.0) throw Error(ErrorCode::SecantDivergence, "flat secant: equal derivatives");
    const double s2 = s1 - g1 * (s1 - s0) / dg;
    ++res.iterations;
    if (!inside(s2)) {
      throw Error(ErrorCode::SecantDivergence,
                  "secant iterate " + std::to_string(s2) + " left (0, T)");
    }
    res.slope = dg / (s1 - s0);
    s0 = s1;
    g0 = g1;
    s1 = s2;
    try {
      g1 = deriv(s1);
    } catch (const Error& err) {
      if (err.code() == ErrorCode::InvalidSwitchOrder) {
        throw Error(ErrorCode::SecantDivergence, "secant iterate too close to the boundary");
      }
      throw;
    }
    res.points.push_back(s1);
    res.derivatives.push_back(g1);
    if (std::abs(s1 - s0) <= 1e-14 * T) break;
  }
  if (s1 != s0 && g1 != g0) res.slope = (g1 - g0) / (s1 - s0);
  res.s = s1;
  res.derivative = g1;
  res.local_maximum = res.slope < 0.0;
  return res;
}

std::vector<ProfilePoint> derivative_profile(const ProblemDef& prob, const std::vector<double>& grid,
                                             const GradientSettings& settings, int jobs) {
  if (prob.switch_count() != 1) {
    throw Error(ErrorCode::InvalidArgument, "derivative profiles need a single-switch problem");
  }
  std::vector<ProfilePoint> out(grid.size());
  auto eval = [&](std::size_t i) {
    SwitchConfig cfg;
    cfg.s = Vec::Constant(1, grid[i]);
    if (prob.free_time) cfg.T = prob.T;
    const auto b = evaluate_gradient(prob, cfg, settings);
    out[i] = {grid[i], b.d_s[0], b.objective};
  };
  const std::size_t workers =
      std::min<std::size_t>(grid.size(), static_cast<std::size_t>(std::max(1, jobs)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < grid.size(); ++i) eval(i);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < grid.size() && !failed; i = next++) {
        try {
          eval(i);
        } catch (...) {
          if (!failed.exchange(true)) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
  return out;
}

std::vector<std::size_t> sign_changes(const std::vector<ProfilePoint>& profile) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i + 1 < profile.size(); ++i) {
    const double a = profile[i].derivative, b = profile[i + 1].derivative;
    if ((a < 0.0 && b >= 0.0) || (a > 0.0 && b <= 0.0)) out.push_back(i);
  }
  return out;
}

}  // namespace spa
