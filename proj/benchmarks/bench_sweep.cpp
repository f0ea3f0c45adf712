#include "kamrev2/herman.hpp"
#include "kamrev2/parallel.hpp"

#include "support/problems.hpp"

#include <benchmark/benchmark.h>

using namespace kamrev2;
using kamrev2::testing::make_problem;

namespace {

void sweep_model(benchmark::State& state, const char* model) {
  const auto pb = make_problem(model);
  herman::SweepConfig cfg;
  cfg.grid = static_cast<int>(state.range(0));
  cfg.threads = static_cast<int>(state.range(1));
  for (auto _ : state) {
    const auto fam = herman::sweep(pb.spec, pb.unf, cfg);
    benchmark::DoNotOptimize(fam.measure.fraction_G);
  }
  state.counters["points"] = cfg.grid;
}

void BM_SweepZeroPerturbation(benchmark::State& s) { sweep_model(s, "zero_perturbation"); }
void BM_SweepEpsFamily(benchmark::State& s) { sweep_model(s, "eps_family"); }
void BM_SweepFloquet(benchmark::State& s) { sweep_model(s, "floquet"); }

}  // namespace

BENCHMARK(BM_SweepZeroPerturbation)->Args({101, 1})->Args({401, 1})->Args({401, 4})->UseRealTime()->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SweepEpsFamily)->Args({101, 1})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SweepFloquet)->Args({11, 1})->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
