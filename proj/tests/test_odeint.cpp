#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "oracles/oracles.hpp"
#include "spa/error.hpp"
#include "spa/odeint.hpp"

namespace {

using spa::Direction;
using spa::IntegratorSettings;
using spa::PiecewiseOde;
using spa::Vec;

Vec v1(double a) { return Vec::Constant(1, a); }

PiecewiseOde exponential(std::vector<double> breaks = {0.0, 1.0}) {
  PiecewiseOde ode;
  ode.dim = 1;
  ode.breakpoints = std::move(breaks);
  ode.rhs = [](int, double, const Vec& x) { return x; };
  return ode;
}

IntegratorSettings tol(double t) {
  IntegratorSettings s;
  s.rel_tol = s.abs_tol = t;
  return s;
}

TEST(Odeint, ExponentialGrowth) {
  const auto s = tol(1e-8);
  const auto tr = spa::integrate_piecewise(exponential(), v1(1.0), Direction::Forward, s);
  EXPECT_NEAR(tr.final_state[0], std::exp(1.0), 10 * s.rel_tol);
}

TEST(Odeint, ConstantDynamicsAcrossSegments) {
  PiecewiseOde ode;
  ode.dim = 1;
  ode.breakpoints = {0.0, 1.0, 2.5, 5.0};
  ode.rhs = [](int, double, const Vec&) { return Vec::Zero(1); };
  const auto tr = spa::integrate_piecewise(ode, v1(3.25), Direction::Forward, tol(1e-8));
  EXPECT_EQ(tr.final_state[0], 3.25);
  ASSERT_EQ(tr.breakpoint_states.size(), 4u);
  for (const auto& x : tr.breakpoint_states) EXPECT_EQ(x[0], 3.25);
}

TEST(Odeint, CatalystBangArcMatchesRk4) {
  const double k1 = 1.0, k2 = 10.0;
  auto rhs = [&](double, const Vec& x) {
    Vec d(2);
    const double r = k1 * x[0] - k2 * x[1];
    d << -r, r;
    return d;
  };
  PiecewiseOde ode;
  ode.dim = 2;
  ode.breakpoints = {0.0, 0.1363};
  ode.rhs = [&](int, double t, const Vec& x) { return rhs(t, x); };
  Vec x0(2);
  x0 << 1.0, 0.0;
  const auto tr = spa::integrate_piecewise(ode, x0, Direction::Forward, tol(1e-10));
  const Vec ref = oracle::rk4(rhs, x0, 0.0, 0.1363, 1e-5);
  EXPECT_LT((tr.final_state - ref).cwiseAbs().maxCoeff(), 1e-7);
}

TEST(Odeint, BackwardIntegrationReflectsTime) {
  const auto tr = spa::integrate_piecewise(exponential({0.0, 0.5, 1.0}), v1(std::exp(1.0)),
                                           Direction::Backward, tol(1e-10));
  EXPECT_NEAR(tr.final_state[0], 1.0, 1e-9);
  ASSERT_EQ(tr.breakpoint_states.size(), 3u);
  EXPECT_NEAR(tr.breakpoint_states[1][0], std::exp(0.5), 1e-9);
  EXPECT_NEAR(tr.breakpoint_states[2][0], std::exp(1.0), 1e-15);
}

TEST(Odeint, RoundTripReturnsToStart) {
  // Harmonic oscillator over a few segments.
  PiecewiseOde ode;
  ode.dim = 2;
  ode.breakpoints = {0.0, 0.7, 1.9, 3.0};
  ode.rhs = [](int, double, const Vec& x) {
    Vec d(2);
    d << x[1], -x[0];
    return d;
  };
  Vec x0(2);
  x0 << 0.3, -1.2;
  const auto s = tol(1e-9);
  const auto fwd = spa::integrate_piecewise(ode, x0, Direction::Forward, s);
  const auto bwd = spa::integrate_piecewise(ode, fwd.final_state, Direction::Backward, s);
  EXPECT_LE((bwd.final_state - x0).norm(), 100 * s.rel_tol * x0.norm());
}

TEST(Odeint, TighterToleranceNeverWorse) {
  double prev = 1.0;
  for (double t : {1e-4, 5e-5, 2.5e-5, 1.25e-5, 6.25e-6, 3.125e-6, 1.5625e-6}) {
    const auto tr = spa::integrate_piecewise(exponential(), v1(1.0), Direction::Forward, tol(t));
    const double err = std::abs(tr.final_state[0] - std::exp(1.0));
    EXPECT_LE(err, prev) << "tol " << t;
    prev = err;
  }
}

TEST(Odeint, NoStepStraddlesABreakpoint) {
  PiecewiseOde ode = exponential({0.0, 0.123, 0.5, 0.77, 1.0});
  std::vector<std::pair<int, double>> calls;
  ode.rhs = [&](int j, double t, const Vec& x) {
    calls.emplace_back(j, t);
    return Vec(x * (j + 1.0));
  };
  for (auto dir : {Direction::Forward, Direction::Backward}) {
    calls.clear();
    const auto tr = spa::integrate_piecewise(ode, v1(1.0), dir, tol(1e-8));
    for (auto [j, t] : calls) {
      EXPECT_GE(t, ode.breakpoints[j] - 1e-15);
      EXPECT_LE(t, ode.breakpoints[j + 1] + 1e-15);
    }
    for (std::size_t i = 0; i + 1 < tr.nodes.size(); ++i) {
      const auto& a = tr.nodes[i];
      const auto& b = tr.nodes[i + 1];
      if (a.segment != b.segment) continue;
      EXPECT_GE(a.t, ode.breakpoints[a.segment]);
      EXPECT_LE(b.t, ode.breakpoints[a.segment + 1]);
    }
  }
}

TEST(Odeint, TinyNonzeroStateWithLargeDerivative) {
  // The automatic initial step estimate falls below h_min here.
  PiecewiseOde ode;
  ode.dim = 2;
  ode.breakpoints = {0.5, 1.0};
  ode.rhs = [](int, double, const Vec&) {
    Vec d(2);
    d << -4.0, 0.0;
    return d;
  };
  Vec z(2);
  z << -2.220446049250313e-16, 2.220446049250313e-16;
  const auto tr = spa::integrate_piecewise(ode, z, Direction::Backward, tol(1e-12));
  EXPECT_NEAR(tr.final_state[0], 2.0, 1e-12);
  EXPECT_EQ(tr.final_state[1], z[1]);
}

TEST(Odeint, DenseOutputIsAccurate) {
  const auto tr = spa::integrate_piecewise(exponential(), v1(1.0), Direction::Forward, tol(1e-10));
  // Cubic Hermite between accepted steps: |err| <= h^4 / 384 times the max
  // fourth derivative on the bracketing step, plus the error at the nodes.
  for (double t : {0.05, 0.31, 0.5, 0.93}) {
    const auto& nodes = tr.nodes;
    auto it = std::upper_bound(nodes.begin(), nodes.end(), t,
                               [](double v, const spa::TrajectoryNode& n) { return v < n.t; });
    ASSERT_NE(it, nodes.begin());
    ASSERT_NE(it, nodes.end());
    const double h = it->t - (it - 1)->t;
    const double bound = std::pow(h, 4) / 384.0 * std::exp(it->t) + 1e-9;
    EXPECT_NEAR(tr.interpolate(t)[0], std::exp(t), bound) << t;
  }
  const auto sampled =
      spa::integrate_piecewise(exponential(), v1(1.0), Direction::Forward, tol(1e-10), 11);
  ASSERT_EQ(sampled.sample_times.size(), 11u);
  ASSERT_EQ(sampled.sample_states.size(), 11u);
  EXPECT_DOUBLE_EQ(sampled.sample_times.back(), 1.0);
  double h_max = 0.0;
  for (std::size_t i = 1; i < sampled.nodes.size(); ++i) {
    h_max = std::max(h_max, sampled.nodes[i].t - sampled.nodes[i - 1].t);
  }
  EXPECT_NEAR(sampled.sample_states[5][0], std::exp(0.5),
              std::pow(h_max, 4) / 384.0 * std::exp(1.0) + 1e-9);
}

TEST(Odeint, QuadratureUnitIntegrand) {
  const auto s = tol(1e-8);
  const auto q = spa::integrate_with_quadrature(
      exponential(), v1(1.0), [](int, double, const Vec&) { return 1.0; }, Direction::Forward, s);
  EXPECT_NEAR(q.integral, 1.0, s.abs_tol);
}

TEST(Odeint, QuadratureLinearIntegrandBothDirections) {
  PiecewiseOde ode;
  ode.dim = 1;
  ode.breakpoints = {0.0, 0.8, 2.0};
  ode.rhs = [](int, double, const Vec&) { return Vec::Zero(1); };
  const auto s = tol(1e-8);
  for (auto dir : {Direction::Forward, Direction::Backward}) {
    const auto q = spa::integrate_with_quadrature(
        ode, v1(0.0), [](int, double t, const Vec&) { return t; }, dir, s);
    EXPECT_NEAR(q.integral, 2.0, 10 * s.abs_tol);
  }
}

TEST(Odeint, QuadratureAgreesWithSimpson) {
  const auto s = tol(1e-11);
  auto integrand = [](int, double t, const Vec& x) { return x[0] * std::sin(3 * t); };
  const auto q = spa::integrate_with_quadrature(exponential({0.0, 0.4, 1.0}), v1(1.0), integrand,
                                                Direction::Forward, s, 2001);
  std::vector<double> y;
  for (std::size_t i = 0; i < q.trajectory.sample_times.size(); ++i) {
    y.push_back(integrand(0, q.trajectory.sample_times[i], q.trajectory.sample_states[i]));
  }
  EXPECT_NEAR(q.integral, oracle::simpson(y, 1.0 / 2000), 1e-9);
}

TEST(Odeint, ErrorsAreReported) {
  PiecewiseOde blowup;
  blowup.dim = 1;
  blowup.breakpoints = {0.0, 2.0};
  blowup.rhs = [](int, double, const Vec& x) { return Vec(x.array().square()); };
  try {
    spa::integrate_piecewise(blowup, v1(1.0), Direction::Forward, tol(1e-8));
    FAIL() << "expected an integration failure";
  } catch (const spa::Error& e) {
    EXPECT_TRUE(e.code() == spa::ErrorCode::StepUnderflow ||
                e.code() == spa::ErrorCode::NonFiniteState ||
                e.code() == spa::ErrorCode::StepLimitExceeded);
  }

  auto s = tol(1e-10);
  s.max_steps = 3;
  try {
    spa::integrate_piecewise(exponential({0.0, 50.0}), v1(1.0), Direction::Forward, s);
    FAIL() << "expected StepLimitExceeded";
  } catch (const spa::Error& e) {
    EXPECT_EQ(e.code(), spa::ErrorCode::StepLimitExceeded);
  }

  PiecewiseOde nan = exponential();
  nan.rhs = [](int, double, const Vec&) { return v1(std::nan("")); };
  try {
    spa::integrate_piecewise(nan, v1(1.0), Direction::Forward, tol(1e-8));
    FAIL() << "expected NonFiniteState";
  } catch (const spa::Error& e) {
    EXPECT_EQ(e.code(), spa::ErrorCode::NonFiniteState);
  }
}

TEST(Odeint, SettingsValidation) {
  IntegratorSettings s;
  s.rel_tol = 0.0;
  EXPECT_THROW(s.validate(), spa::Error);
  s = IntegratorSettings{};
  s.h_min = 1.0;
  s.h_max = 0.5;
  EXPECT_THROW(s.validate(), spa::Error);
  PiecewiseOde bad = exponential({0.0, 0.5, 0.5, 1.0});
  EXPECT_THROW(spa::integrate_piecewise(bad, v1(1.0), Direction::Forward, tol(1e-8)), spa::Error);
}

}  // namespace
