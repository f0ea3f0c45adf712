#include "kamrev2/torus.hpp"

#include "support/problems.hpp"

#include <benchmark/benchmark.h>

using namespace kamrev2;
using kamrev2::testing::make_problem;

namespace {

void solve_model(benchmark::State& state, const char* model) {
  const auto pb = make_problem(model);
  torus::SolverConfig cfg;
  cfg.fourier_cutoff = static_cast<int>(state.range(0));
  for (auto _ : state) {
    auto t = torus::solve_torus(pb.spec, pb.target, pb.unf, kamrev2::testing::solver_guard(), cfg);
    benchmark::DoNotOptimize(t.residual_history.back());
    state.counters["unknowns"] = t.unknowns;
  }
}

void BM_SolveTorusOscillator(benchmark::State& s) { solve_model(s, "forced_oscillator"); }
void BM_SolveTorusRotation(benchmark::State& s) { solve_model(s, "rotation"); }
void BM_SolveTorusFloquet(benchmark::State& s) { solve_model(s, "floquet"); }
void BM_SolveTorusCoupled(benchmark::State& s) { solve_model(s, "coupled"); }

void BM_FloquetResidual(benchmark::State& state) {
  const auto pb = make_problem("floquet");
  const auto t = kamrev2::testing::solve(pb);
  for (auto _ : state) benchmark::DoNotOptimize(torus::floquet_residual(pb.spec, t, pb.unf).max());
}

void BM_VerifyByIntegration(benchmark::State& state) {
  const auto pb = make_problem("forced_oscillator");
  const auto t = kamrev2::testing::solve(pb);
  for (auto _ : state)
    benchmark::DoNotOptimize(torus::verify_by_integration(pb.spec, t, pb.unf, double(state.range(0))).max_distance);
}

}  // namespace

BENCHMARK(BM_SolveTorusOscillator)->Arg(8)->Arg(16);
BENCHMARK(BM_SolveTorusRotation)->Arg(4)->Arg(8);
BENCHMARK(BM_SolveTorusFloquet)->Arg(8)->Arg(16)->Arg(32);
BENCHMARK(BM_SolveTorusCoupled)->Arg(8);
BENCHMARK(BM_FloquetResidual);
BENCHMARK(BM_VerifyByIntegration)->Arg(10)->Arg(100)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
