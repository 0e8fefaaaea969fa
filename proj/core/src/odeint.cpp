#include "spa/odeint.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "spa/error.hpp"

namespace spa {
namespace {

// Dormand-Prince 5(4) tableau.
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                 a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                 a64 = 49.0 / 176, a65 = -5103.0 / 18656;
constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192,
                 a75 = -2187.0 / 6784, a76 = 11.0 / 84;
// b5 - b4, used for the embedded error estimate.
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                 e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;

// PI controller constants (Hairer & Wanner, dopri5).
constexpr double kSafety = 0.9;
constexpr double kBeta = 0.04;
constexpr double kAlpha = 0.2 - 0.75 * kBeta;
constexpr double kFacMin = 0.2;
constexpr double kFacMax = 10.0;

using SegmentRhs = std::function<Vec(double s, const Vec& y)>;

bool all_finite(const Vec& v) { return v.allFinite(); }

double scaled_norm(const Vec& v, const Vec& y0, const Vec& y1, const IntegratorSettings& st) {
  const auto n = v.size();
  if (n == 0) return 0.0;
  double acc = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double sk = st.abs_tol + st.rel_tol * std::max(std::abs(y0[i]), std::abs(y1[i]));
    const double r = v[i] / sk;
    acc += r * r;
  }
  return std::sqrt(acc / static_cast<double>(n));
}

struct StepSink {
  // (s, y, dy/ds) in integration time for every accepted step endpoint,
  // including the segment start.
  std::function<void(double, const Vec&, const Vec&)> emit;
};

// Integrates one smooth segment [a, b] in integration time, in place.
class SegmentRunner {
 public:
  SegmentRunner(const IntegratorSettings& st, IntegratorStats& stats) : st_(st), stats_(stats) {}

  void run(const SegmentRhs& g, double a, double b, Vec& y, const StepSink& sink) {
    double s = a;
    Vec k1 = eval(g, s, y);
    if (!all_finite(y) || !all_finite(k1)) {
      throw Error(ErrorCode::NonFiniteState, describe("non-finite state at segment start", s));
    }
    sink.emit(s, y, k1);
    if (b <= a) return;

    double h = st_.h_init > 0.0 ? st_.h_init : initial_step(g, s, y, k1, b - a);
    h = std::min({h, st_.h_max, b - a});
    double err_old = 1e-4;
    bool last_rejected = false;
    bool nonfinite_seen = false;

    Vec k2, k3, k4, k5, k6, k7, ytmp, ynew, err;
    while (s < b) {
      if (stats_.accepted_steps + stats_.rejected_steps >= st_.max_steps) {
        throw Error(ErrorCode::StepLimitExceeded,
                    describe("max_steps reached (" + std::to_string(st_.max_steps) + ")", s));
      }
      // Clip to the segment end; absorb slivers into the final step.
      if (s + h >= b || b - (s + h) < 1e-2 * h) h = b - s;
      if (h < st_.h_min || s + h == s) {
        if (nonfinite_seen) {
          throw Error(ErrorCode::NonFiniteState,
                      describe("non-finite derivative could not be avoided by step reduction", s));
        }
        throw Error(ErrorCode::StepUnderflow,
                    describe("step size below h_min; the problem may be stiff or blowing up; "
                             "try tighter tolerances",
                             s));
      }

      ytmp = y + h * (a21 * k1);
      k2 = eval(g, s + c2 * h, ytmp);
      ytmp = y + h * (a31 * k1 + a32 * k2);
      k3 = eval(g, s + c3 * h, ytmp);
      ytmp = y + h * (a41 * k1 + a42 * k2 + a43 * k3);
      k4 = eval(g, s + c4 * h, ytmp);
      ytmp = y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
      k5 = eval(g, s + c5 * h, ytmp);
      ytmp = y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
      const double s_new = (h == b - s) ? b : s + h;
      k6 = eval(g, s_new, ytmp);
      ynew = y + h * (a71 * k1 + a73 * k3 + a74 * k4 + a75 * k5 + a76 * k6);
      k7 = eval(g, s_new, ynew);

      if (!all_finite(ynew) || !all_finite(k7) || !all_finite(k2) || !all_finite(k3) ||
          !all_finite(k4) || !all_finite(k5) || !all_finite(k6)) {
        nonfinite_seen = true;
        ++stats_.rejected_steps;
        h *= kFacMin;
        last_rejected = true;
        continue;
      }

      err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
      const double en = scaled_norm(err, y, ynew, st_);

      if (en <= 1.0) {
        ++stats_.accepted_steps;
        s = s_new;
        y = ynew;
        k1 = k7;
        sink.emit(s, y, k1);
        nonfinite_seen = false;
        double fac = kSafety * std::pow(std::max(en, 1e-10), -kAlpha) * std::pow(err_old, kBeta);
        fac = std::clamp(fac, kFacMin, last_rejected ? 1.0 : kFacMax);
        err_old = std::max(en, 1e-4);
        h = std::min(h * fac, st_.h_max);
        last_rejected = false;
      } else {
        ++stats_.rejected_steps;
        h *= std::max(kFacMin, kSafety * std::pow(en, -kAlpha));
        last_rejected = true;
      }
    }
  }

 private:
  Vec eval(const SegmentRhs& g, double s, const Vec& y) {
    ++stats_.rhs_evals;
    return g(s, y);
  }

  // Starting step heuristic from Hairer, Norsett & Wanner (II.4).
  double initial_step(const SegmentRhs& g, double s, const Vec& y, const Vec& f0, double span) {
    const double d0 = scaled_norm(y, y, y, st_);
    const double d1 = scaled_norm(f0, y, y, st_);
    double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
    h0 = std::min({h0, span, st_.h_max});
    const Vec y1 = y + h0 * f0;
    const Vec f1 = eval(g, s + h0, y1);
    if (!all_finite(f1)) return std::max(st_.h_min, h0 * 1e-3);
    const double d2 = scaled_norm(f1 - f0, y, y, st_) / h0;
    const double dm = std::max(d1, d2);
    const double h1 = dm <= 1e-15 ? std::max(1e-6, h0 * 1e-3) : std::pow(0.01 / dm, 0.2);
    return std::max(st_.h_min, std::min({100.0 * h0, h1, span, st_.h_max}));
  }

  std::string describe(const std::string& what, double s) const {
    std::ostringstream os;
    os << what << " (integration time " << s << ")";
    return os.str();
  }

  const IntegratorSettings& st_;
  IntegratorStats& stats_;
};

Vec hermite(const TrajectoryNode& n0, const TrajectoryNode& n1, double t) {
  const double h = n1.t - n0.t;
  if (h <= 0.0) return n0.x;
  const double th = (t - n0.t) / h;
  const double th2 = th * th, th3 = th2 * th;
  const double h00 = 2 * th3 - 3 * th2 + 1;
  const double h10 = th3 - 2 * th2 + th;
  const double h01 = -2 * th3 + 3 * th2;
  const double h11 = th3 - th2;
  return h00 * n0.x + h10 * h * n0.dx + h01 * n1.x + h11 * h * n1.dx;
}

void resample(DenseTrajectory& traj, double t0, double t1, int sample_count) {
  traj.sample_times.clear();
  traj.sample_states.clear();
  if (sample_count <= 0) {
    for (const auto& node : traj.nodes) {
      traj.sample_times.push_back(node.t);
      traj.sample_states.push_back(node.x);
    }
    return;
  }
  if (sample_count == 1) {
    traj.sample_times.push_back(t1);
    traj.sample_states.push_back(traj.interpolate(t1));
    return;
  }
  for (int i = 0; i < sample_count; ++i) {
    const double t = (i + 1 == sample_count) ? t1 : t0 + (t1 - t0) * i / (sample_count - 1);
    traj.sample_times.push_back(t);
    traj.sample_states.push_back(traj.interpolate(t));
  }
}

DenseTrajectory integrate_impl(const PiecewiseOde& ode, const Vec& x_start, Direction direction,
                               const IntegratorSettings& settings, int sample_count) {
  settings.validate();
  ode.validate();
  if (x_start.size() != ode.dim) {
    throw Error(ErrorCode::InvalidArgument, "initial state dimension " +
                                                std::to_string(x_start.size()) +
                                                " does not match ode.dim " +
                                                std::to_string(ode.dim));
  }

  const auto& bp = ode.breakpoints;
  const int nseg = ode.segment_count();
  const double t_end = ode.end();

  DenseTrajectory traj;
  traj.breakpoint_states.assign(bp.size(), Vec());
  SegmentRunner runner(settings, traj.stats);
  Vec y = x_start;

  if (direction == Direction::Forward) {
    traj.breakpoint_states.front() = y;
    for (int j = 0; j < nseg; ++j) {
      const double lo = bp[j], hi = bp[j + 1];
      SegmentRhs g = [&, j, lo, hi](double t, const Vec& x) {
        return ode.rhs(j, std::clamp(t, lo, hi), x);
      };
      StepSink sink{[&, j](double t, const Vec& x, const Vec& dx) {
        traj.nodes.push_back({t, x, dx, j});
      }};
      runner.run(g, lo, hi, y, sink);
      traj.nodes.back().t = hi;
      traj.breakpoint_states[j + 1] = y;
    }
  } else {
    traj.breakpoint_states.back() = y;
    std::vector<TrajectoryNode> rev;
    for (int j = nseg - 1; j >= 0; --j) {
      const double lo = bp[j], hi = bp[j + 1];
      const double tau_a = t_end - hi, tau_b = t_end - lo;
      SegmentRhs g = [&, j, lo, hi](double tau, const Vec& x) -> Vec {
        return -ode.rhs(j, std::clamp(t_end - tau, lo, hi), x);
      };
      StepSink sink{[&, j, lo, hi](double tau, const Vec& x, const Vec& dx) {
        rev.push_back({std::clamp(t_end - tau, lo, hi), x, -dx, j});
      }};
      runner.run(g, tau_a, tau_b, y, sink);
      rev.back().t = lo;
      traj.breakpoint_states[j] = y;
    }
    traj.nodes.assign(rev.rbegin(), rev.rend());
  }
  traj.final_state = y;
  resample(traj, ode.start(), ode.end(), sample_count);
  return traj;
}

}  // namespace

void IntegratorSettings::validate() const {
  if (!(rel_tol > 0.0) || !(abs_tol > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "integrator tolerances must be positive");
  }
  if (!(h_min > 0.0) || !(h_min <= h_max)) {
    throw Error(ErrorCode::InvalidArgument, "integrator step bounds require 0 < h_min <= h_max");
  }
  if (max_steps < 1) {
    throw Error(ErrorCode::InvalidArgument, "max_steps must be at least 1");
  }
}

void PiecewiseOde::validate() const {
  if (dim < 0) throw Error(ErrorCode::InvalidArgument, "negative ODE dimension");
  if (breakpoints.size() < 2) {
    throw Error(ErrorCode::InvalidArgument, "a piecewise ODE needs at least two breakpoints");
  }
  for (std::size_t i = 1; i < breakpoints.size(); ++i) {
    if (!(breakpoints[i] > breakpoints[i - 1])) {
      throw Error(ErrorCode::InvalidArgument, "breakpoints must be strictly increasing");
    }
  }
  if (!rhs) throw Error(ErrorCode::InvalidArgument, "missing right-hand side");
}

Vec DenseTrajectory::interpolate(double t) const {
  if (nodes.empty()) throw Error(ErrorCode::InvalidArgument, "empty trajectory");
  if (t <= nodes.front().t) return nodes.front().x;
  if (t >= nodes.back().t) return nodes.back().x;
  // First node with time > t; its predecessor starts the bracketing step.
  auto it = std::upper_bound(nodes.begin(), nodes.end(), t,
                             [](double v, const TrajectoryNode& n) { return v < n.t; });
  const auto& n1 = *it;
  const auto& n0 = *(it - 1);
  if (n0.segment != n1.segment) return n0.x;  // exactly on a breakpoint
  return hermite(n0, n1, t);
}

Vec DenseTrajectory::interpolate(double t, int segment) const {
  if (nodes.empty()) throw Error(ErrorCode::InvalidArgument, "empty trajectory");
  auto first = std::find_if(nodes.begin(), nodes.end(),
                            [segment](const TrajectoryNode& n) { return n.segment == segment; });
  if (first == nodes.end()) throw Error(ErrorCode::InvalidArgument, "unknown segment");
  auto last = std::find_if(first, nodes.end(),
                           [segment](const TrajectoryNode& n) { return n.segment != segment; });
  if (t <= first->t) return first->x;
  if (t >= (last - 1)->t) return (last - 1)->x;
  auto it = std::upper_bound(first, last, t,
                             [](double v, const TrajectoryNode& n) { return v < n.t; });
  return hermite(*(it - 1), *it, t);
}

DenseTrajectory integrate_piecewise(const PiecewiseOde& ode, const Vec& x_start,
                                    Direction direction, const IntegratorSettings& settings,
                                    int sample_count) {
  return integrate_impl(ode, x_start, direction, settings, sample_count);
}

QuadratureResult integrate_with_quadrature(const PiecewiseOde& ode, const Vec& x_start,
                                           const Integrand& integrand, Direction direction,
                                           const IntegratorSettings& settings,
                                           int sample_count) {
  if (!integrand) throw Error(ErrorCode::InvalidArgument, "missing integrand");
  const int n = ode.dim;
  PiecewiseOde aug;
  aug.dim = n + 1;
  aug.breakpoints = ode.breakpoints;
  aug.rhs = [&ode, &integrand, n](int j, double t, const Vec& z) {
    const Vec x = z.head(n);
    Vec dz(n + 1);
    dz.head(n) = ode.rhs(j, t, x);
    dz[n] = integrand(j, t, x);
    return dz;
  };
  Vec z0(n + 1);
  z0.head(n) = x_start;
  z0[n] = 0.0;
  if (x_start.size() != n) {
    throw Error(ErrorCode::InvalidArgument, "initial state dimension does not match ode.dim");
  }

  DenseTrajectory full = integrate_impl(aug, z0, direction, settings, sample_count);

  QuadratureResult out;
  // Forward: q(end) = int g dt. Backward: the reflected system accumulates
  // -int g dt in physical orientation, so q(start) = -int g dt.
  const double q_final = full.final_state[n];
  out.integral = direction == Direction::Forward ? q_final : -q_final;

  auto strip = [n](const Vec& v) -> Vec { return v.head(n); };
  DenseTrajectory& tr = out.trajectory;
  tr.stats = full.stats;
  tr.final_state = strip(full.final_state);
  for (const auto& b : full.breakpoint_states) tr.breakpoint_states.push_back(strip(b));
  tr.nodes.reserve(full.nodes.size());
  for (const auto& nd : full.nodes) tr.nodes.push_back({nd.t, strip(nd.x), strip(nd.dx), nd.segment});
  tr.sample_times = full.sample_times;
  for (const auto& sx : full.sample_states) tr.sample_states.push_back(strip(sx));
  return out;
}

}  // namespace spa
