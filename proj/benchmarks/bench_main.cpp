#include <benchmark/benchmark.h>

#include "regretlab/lti.hpp"
#include "regretlab/presets.hpp"
#include "regretlab/sls.hpp"
#include "regretlab/tabular.hpp"

using namespace regretlab;

static void BM_Dare(benchmark::State& state) {
  const auto s = presets::example_dynamics();
  const auto w = presets::example_weights(state.range(0) == 0 ? 1e-3 : 10.0);
  for (auto _ : state) benchmark::DoNotOptimize(solve_dare(s, w));
}
BENCHMARK(BM_Dare)->Arg(0)->Arg(1);

static void BM_Dlyap(benchmark::State& state) {
  const auto s = presets::example_dynamics();
  const auto w = presets::example_weights(1.0);
  const MatrixXd K = solve_dare(s, w).K.K;
  const MatrixXd M = s.A + s.B * K;
  for (auto _ : state) benchmark::DoNotOptimize(solve_dlyap(M, w.Q));
}
BENCHMARK(BM_Dlyap);

static void BM_HinfGrid(benchmark::State& state) {
  const auto s = presets::example_dynamics();
  const auto w = presets::example_weights(1.0);
  const auto resp =
      fir_from_static_gain(s.A, s.B, solve_dare(s, w).K.K, static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(hinf_norm(resp));
}
BENCHMARK(BM_HinfGrid)->Arg(16)->Arg(32)->Arg(64);

static void BM_RobustSynthesis(benchmark::State& state) {
  const auto s = presets::example_dynamics();
  sls::SlsProblem p;
  p.estimate.A_hat = s.A;
  p.estimate.B_hat = s.B;
  p.estimate.eps_A = 0.02;
  p.estimate.eps_B = 0.02;
  p.weights = presets::example_weights(1e-3);
  p.horizon = static_cast<int>(state.range(0));
  p.max_horizon = p.horizon;
  p.inner.max_iter = 300;
  p.inner.primal_tol = 1e-4;
  p.inner.objective_rtol = 1e-6;
  for (auto _ : state) benchmark::DoNotOptimize(sls::robust_synthesize(p));
}
BENCHMARK(BM_RobustSynthesis)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

static void BM_Ucrl2(benchmark::State& state) {
  const auto mdp = tabular::river_swim(4);
  for (auto _ : state) benchmark::DoNotOptimize(tabular::ucrl2_run(mdp, 0.05, state.range(0), 1));
}
BENCHMARK(BM_Ucrl2)->Arg(10000)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
