#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "oracles/oracles.hpp"
#include "spa/benchmarks.hpp"
#include "spa/error.hpp"
#include "spa/gradients.hpp"

namespace {

using spa::Vec;

Vec vec(std::initializer_list<double> v) {
  Vec out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double a : v) out[i++] = a;
  return out;
}

spa::GradientSettings tight(double tol = 1e-11) {
  spa::GradientSettings gs;
  gs.ode.rel_tol = gs.ode.abs_tol = tol;
  return gs;
}

spa::ProblemDef catalyst(double T = 1.0, spa::ProblemCase c = spa::ProblemCase::StateFeedback,
                         bool constant_law = false) {
  spa::CatalystParams cp;
  cp.T = T;
  cp.problem_case = c;
  cp.constant_singular_law = constant_law;
  return spa::build_catalyst(cp);
}

spa::SwitchConfig config(Vec s, std::optional<Vec> p0 = {}, std::optional<double> T = {}) {
  spa::SwitchConfig c;
  c.s = std::move(s);
  c.p0 = std::move(p0);
  c.T = T;
  return c;
}

TEST(ForwardSweep, CatalystOptimalObjective) {
  for (auto [T, C] : {std::pair{1.0, -0.048055685860877}, std::pair{4.0, -0.191814356325161}}) {
    spa::CatalystParams cp;
    cp.T = T;
    const auto ref = spa::catalyst_reference(cp);
    const auto fwd = spa::forward_sweep(catalyst(T), config(ref.s_star), tight());
    EXPECT_NEAR(fwd.objective, C, 1e-9) << "T=" << T;
    ASSERT_EQ(fwd.checkpoints.size(), 4u);
    EXPECT_DOUBLE_EQ(fwd.switch_times.back(), T);
  }
}

TEST(ForwardSweep, CollapsingSingularPhaseIsContinuous) {
  const auto prob = catalyst();
  const double eps = 1e-6;  // default gap at T = 1
  const double s1 = 0.4;
  const double c_short = spa::evaluate_objective(prob, config(vec({s1, s1 + 2 * eps})), tight());
  const double c_shorter =
      spa::evaluate_objective(prob, config(vec({s1, s1 + 1.01 * eps})), tight());
  EXPECT_LT(std::abs(c_short - c_shorter), 10 * eps);
}

TEST(ForwardSweep, RejectsDegenerateConfig) {
  try {
    spa::forward_sweep(catalyst(), config(vec({0.5, 0.5})), tight());
    FAIL();
  } catch (const spa::Error& e) {
    EXPECT_EQ(e.code(), spa::ErrorCode::InvalidSwitchOrder);
  }
}

TEST(BackwardSweep, CatalystTerminalCostate) {
  const auto prob = catalyst();
  const auto cfg = config(vec({0.15, 0.7}));
  const auto fwd = spa::forward_sweep(prob, cfg, tight());
  const auto bwd = spa::backward_sweep(prob, cfg, fwd, tight());
  ASSERT_EQ(bwd.y1.size(), 4u);
  EXPECT_DOUBLE_EQ(bwd.y1.back()[0], 1.0);
  EXPECT_DOUBLE_EQ(bwd.y1.back()[1], 1.0);
  for (const auto& y2 : bwd.y2) EXPECT_EQ(y2.cwiseAbs().maxCoeff(), 0.0);
}

TEST(BackwardSweep, BressanLinearCostate) {
  const double T = 10.0;
  const auto prob = spa::build_bressan(T);
  const double s = 3.1;
  const auto cfg = config(vec({s}));
  auto gs = tight();
  const auto fwd = spa::forward_sweep(prob, cfg, gs);
  const auto bwd = spa::backward_sweep(prob, cfg, fwd, gs);
  EXPECT_NEAR(bwd.y1[0][1], -T, 1e-9);
  EXPECT_NEAR(bwd.y1[1][1], s - T, 1e-9);
  for (double t : {0.5, 2.0, 5.0, 9.0}) {
    EXPECT_NEAR(bwd.trajectory.interpolate(t)[1], t - T, 1e-8) << t;
  }
}

TEST(BackwardSweep, Case2WithoutCostateFeedbackHasZeroY2) {
  const auto prob = catalyst(1.0, spa::ProblemCase::CostateFeedback, true);
  const auto gs = tight(1e-10);
  const auto cfg = config(vec({0.15, 0.7}), vec({0.9, 0.8}));
  const auto fwd = spa::forward_sweep(prob, cfg, gs);
  const auto bwd = spa::backward_sweep(prob, cfg, fwd, gs);
  for (const auto& y2 : bwd.y2) EXPECT_LE(y2.cwiseAbs().maxCoeff(), 10 * gs.ode.abs_tol);
}

TEST(EvaluateGradient, CatalystStationaryAtAnalyticSwitches) {
  const auto ref = spa::catalyst_reference({});
  const auto g = spa::evaluate_gradient(catalyst(), config(ref.s_star), tight());
  EXPECT_LE(g.d_s.cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_FALSE(g.d_p0);
  EXPECT_FALSE(g.d_T);
}

TEST(EvaluateGradient, BressanStationaryAtThird) {
  const auto g = spa::evaluate_gradient(spa::build_bressan(10.0), config(vec({10.0 / 3})), tight());
  EXPECT_LE(std::abs(g.d_s[0]), 1e-8);
}

TEST(EvaluateGradient, CatalystMatchesFiniteDifferences) {
  const auto prob = catalyst();
  const auto gs = tight(1e-12);
  const Vec s = vec({0.15, 0.70});
  const auto g = spa::evaluate_gradient(prob, config(s), gs);
  for (int j = 0; j < 2; ++j) {
    const double fd = oracle::central_difference(
        [&](double v) {
          Vec t = s;
          t[j] = v;
          return spa::evaluate_objective(prob, config(t), gs);
        },
        s[j], 1e-6);
    EXPECT_NEAR(g.d_s[j], fd, 1e-5 * std::max(std::abs(fd), 1e-3)) << j;
  }
}

TEST(EvaluateGradient, JumpBookkeepingIsExact) {
  for (const auto& prob : {catalyst(), spa::build_bressan(10.0), spa::build_jacobson()}) {
    const Vec s = prob.switch_count() == 2 ? vec({0.2, 0.6}) : vec({prob.T * 0.31});
    const auto g = spa::evaluate_gradient(prob, config(s), tight(1e-9));
    ASSERT_EQ(g.hamiltonian_jumps.size(), static_cast<std::size_t>(s.size()));
    for (Eigen::Index j = 0; j < s.size(); ++j) {
      EXPECT_EQ(g.d_s[j], g.hamiltonian_jumps[j].left - g.hamiltonian_jumps[j].right);
    }
  }
  const auto c2 = catalyst(1.0, spa::ProblemCase::CostateFeedback);
  const auto g = spa::evaluate_gradient(c2, config(vec({0.15, 0.7}), vec({0.9, 0.8})), tight(1e-9));
  for (int j = 0; j < 2; ++j) {
    EXPECT_EQ(g.d_s[j], g.hamiltonian_jumps[j].left - g.hamiltonian_jumps[j].right);
  }
}

TEST(EvaluateGradient, CaseReduction) {
  const auto gs = tight(1e-11);
  const Vec s = vec({0.17, 0.66});
  const auto g1 = spa::evaluate_gradient(catalyst(), config(s), gs);
  const auto g2 = spa::evaluate_gradient(catalyst(1.0, spa::ProblemCase::CostateFeedback, true),
                                         config(s, vec({0.9, 0.8})), gs);
  ASSERT_TRUE(g2.d_p0);
  EXPECT_LE(g2.d_p0->cwiseAbs().maxCoeff(), 10 * gs.ode.abs_tol);
  EXPECT_LE((g1.d_s - g2.d_s).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_NEAR(g1.objective, g2.objective, 1e-12);
}

TEST(EvaluateGradient, Case2AnalyticAndNumericPathsAgree) {
  const auto prob = catalyst(1.0, spa::ProblemCase::CostateFeedback);
  auto gs = tight(1e-11);
  const auto cfg = config(vec({0.1, 0.7}), vec({0.9, 0.8}));
  const auto ga = spa::evaluate_gradient(prob, cfg, gs);
  gs.prefer_analytic_case2 = false;
  const auto gn = spa::evaluate_gradient(prob, cfg, gs);
  EXPECT_TRUE(ga.analytic_case2);
  EXPECT_FALSE(gn.analytic_case2);
  EXPECT_LE((ga.d_s - gn.d_s).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LE((*ga.d_p0 - *gn.d_p0).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(FreeTime, ConstantDynamicsHasZeroTimeDerivative) {
  spa::ProblemDef prob;
  prob.name = "still";
  prob.n = 1;
  prob.m = 1;
  prob.x0 = vec({2.0});
  prob.free_time = true;
  prob.T = 3.0;
  prob.f = [](const Vec&, const Vec&) { return Vec(Vec::Zero(1)); };
  prob.f_x = [](const Vec&, const Vec&) { return spa::Mat(spa::Mat::Zero(1, 1)); };
  prob.f_u = [](const Vec&, const Vec&) { return spa::Mat(spa::Mat::Zero(1, 1)); };
  prob.objective = [](const Vec& x) { return x[0] * x[0]; };
  prob.objective_grad = [](const Vec& x) { return Vec(2 * x); };
  const auto b = spa::constant_bound(vec({1.0}));
  prob.phases = {spa::ControlPhase::constant(vec({0.0}), spa::constant_bound(vec({0.0})), b),
                 spa::ControlPhase::constant(vec({1.0}), spa::constant_bound(vec({0.0})), b)};
  prob.validate();
  const auto chk = spa::free_time_gradient_check(prob, config(vec({1.0}), {}, 3.0), tight());
  EXPECT_EQ(chk.analytic, 0.0);
  EXPECT_EQ(chk.fd, 0.0);
}

TEST(FreeTime, BressanRescaledAgreesWithFiniteDifference) {
  // At the optimum s = T/3 the objective is -T^3/18, so dC/dT = -T^2/6 with
  // the switch fraction held at 1/3.
  const double T = 10.0;
  const auto prob = spa::build_bressan(T);
  const auto cfg = config(vec({T / 3}));
  const auto chk = spa::free_time_gradient_check(prob, cfg, tight(1e-12));
  EXPECT_NEAR(chk.analytic, chk.fd, 1e-5 * std::abs(chk.fd));
  EXPECT_NEAR(chk.analytic, -T * T / 6, 1e-8);
}

TEST(FreeTime, BressanHamiltonianQuadratureMatchesSimpson) {
  const double T = 10.0;
  const double s = T / 3;
  const auto prob = spa::build_bressan(T);
  const auto cfg = config(vec({s}));
  const auto gs = tight(1e-12);
  const auto fwd = spa::forward_sweep(prob, cfg, gs);
  const auto bwd = spa::backward_sweep(prob, cfg, fwd, gs);
  const int n = 2001;
  const double h = T / (n - 1);
  std::vector<double> H;
  for (int i = 0; i < n; ++i) {
    const double t = i * h;
    const int j = t < s ? 0 : 1;
    const Vec x = fwd.trajectory.interpolate(t, j);
    const Vec p = bwd.trajectory.interpolate(t, j);
    H.push_back(p.dot(spa::phase_dynamics(prob, j, t, x)));
  }
  // The quadrature runs over tau in [0, 1]: divide the physical integral by T.
  EXPECT_NEAR(bwd.hamiltonian_integral, oracle::simpson(H, h) / T, 1e-7);
}

TEST(FreeTime, GoddardStationaryInHorizonAtReference) {
  const spa::GoddardParams gp;
  const auto prob = spa::build_goddard(gp);
  const auto ref = spa::goddard_reference();
  const auto g = spa::evaluate_gradient(prob, config(ref.s_star, {}, *ref.T_star), tight(1e-11));
  ASSERT_TRUE(g.d_T);
  EXPECT_LE(std::abs(*g.d_T) / std::abs(gp.beta_pen), 1e-4);
}

TEST(GradientOracle, RandomConfigsNearReferences) {
  std::mt19937 rng(2024);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  const auto gs = tight(1e-12);
  for (const auto& name : spa::problem_names()) {
    const auto np = spa::make_named_problem(name);
    const auto& prob = np.problem;
    const auto& ref = *np.reference;
    for (int trial = 0; trial < 2; ++trial) {
      spa::SwitchConfig cfg;
      const double T = ref.T_star.value_or(prob.T);
      cfg.s = ref.s_star + 0.01 * T * Vec::NullaryExpr(ref.s_star.size(), [&] { return U(rng); });
      if (name == "goddard") cfg.s = ref.s_star + 0.2 * Vec::NullaryExpr(2, [&] { return U(rng); });
      if (prob.free_time) cfg.T = T + 0.2 * U(rng);
      if (prob.is_case2()) cfg.p0 = vec({0.8755 + 0.001 * U(rng), 0.8277 + 0.001 * U(rng)});
      const auto g = spa::evaluate_gradient(prob, cfg, gs);
      auto check = [&](double analytic, const std::function<double(double)>& c, double x0,
                       const char* what) {
        const double h = 1e-6 * std::max(1.0, std::abs(x0));
        const double fd = oracle::central_difference(c, x0, h);
        const double err = std::abs(analytic - fd);
        EXPECT_TRUE(err <= 1e-8 || err <= 1e-5 * std::abs(fd))
            << name << " " << what << " analytic " << analytic << " fd " << fd;
      };
      for (Eigen::Index j = 0; j < cfg.s.size(); ++j) {
        check(
            g.d_s[j],
            [&](double v) {
              auto c = cfg;
              c.s[j] = v;
              return spa::evaluate_objective(prob, c, gs);
            },
            cfg.s[j], "d_s");
      }
      if (cfg.p0) {
        for (Eigen::Index i = 0; i < cfg.p0->size(); ++i) {
          check(
              (*g.d_p0)[i],
              [&](double v) {
                auto c = cfg;
                (*c.p0)[i] = v;
                return spa::evaluate_objective(prob, c, gs);
              },
              (*cfg.p0)[i], "d_p0");
        }
      }
      if (cfg.T) {
        check(
            *g.d_T, [&](double v) { return spa::objective_at_horizon(prob, cfg, v, gs); }, *cfg.T,
            "d_T");
      }
    }
  }
}

}  // namespace
