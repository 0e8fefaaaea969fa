#include <cmath>
#include <random>

#include <benchmark/benchmark.h>

#include "spa/benchmarks.hpp"
#include "spa/optimizer.hpp"
#include "spa/warmstart.hpp"

namespace {

using spa::Vec;

spa::GradientSettings settings(double tol) {
  spa::GradientSettings gs;
  gs.ode.rel_tol = gs.ode.abs_tol = tol;
  return gs;
}

void BM_GradientCatalyst(benchmark::State& state) {
  const auto np = spa::make_named_problem(state.range(1) == 2 ? "catalyst2" : "catalyst1");
  const auto cfg = np.start;
  const auto gs = settings(std::pow(10.0, -static_cast<double>(state.range(0))));
  for (auto _ : state) benchmark::DoNotOptimize(spa::evaluate_gradient(np.problem, cfg, gs));
}
BENCHMARK(BM_GradientCatalyst)->ArgsProduct({{8, 10, 12}, {1, 2}})->Unit(benchmark::kMicrosecond);

void BM_GradientGoddard(benchmark::State& state) {
  const auto np = spa::make_named_problem("goddard");
  const auto gs = settings(std::pow(10.0, -static_cast<double>(state.range(0))));
  for (auto _ : state) benchmark::DoNotOptimize(spa::evaluate_gradient(np.problem, np.start, gs));
}
BENCHMARK(BM_GradientGoddard)->Arg(8)->Arg(10)->Unit(benchmark::kMicrosecond);

void BM_TvProx(benchmark::State& state) {
  std::mt19937 rng(1);
  std::normal_distribution<double> noise(0.0, 0.3);
  Vec signal(state.range(0));
  for (Eigen::Index i = 0; i < signal.size(); ++i) signal[i] = (i < signal.size() / 2) + noise(rng);
  for (auto _ : state) benchmark::DoNotOptimize(spa::tv_prox(signal, 0.5));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_TvProx)->RangeMultiplier(4)->Range(16, 16384)->Complexity();

void BM_ProjectOrdered(benchmark::State& state) {
  std::mt19937 rng(2);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  Vec v(state.range(0));
  for (auto& a : v) a = U(rng);
  for (auto _ : state) benchmark::DoNotOptimize(spa::project_ordered(v, 1.0, 1e-6));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_ProjectOrdered)->RangeMultiplier(4)->Range(2, 2048)->Complexity();

void BM_SolveCatalyst(benchmark::State& state) {
  const auto np = spa::make_named_problem("catalyst1", static_cast<double>(state.range(0)));
  spa::OptimizeSettings os;
  for (auto _ : state) benchmark::DoNotOptimize(spa::minimize(np.problem, np.start, os));
}
BENCHMARK(BM_SolveCatalyst)->Arg(1)->Arg(4)->Arg(12)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
