#include "kamrev2/dioph.hpp"

#include <benchmark/benchmark.h>

#include <cmath>

using namespace kamrev2::dioph;
using Eigen::VectorXd;

namespace {

VectorXd golden_pair() {
  VectorXd F(2);
  F << 1.0, (1.0 + std::sqrt(5.0)) / 2.0;
  return F;
}

void BM_ModeTableBuild(benchmark::State& state) {
  for (auto _ : state) {
    ModeTable t(2, static_cast<int>(state.range(0)), 2.5);
    benchmark::DoNotOptimize(t.size());
  }
}

void BM_AffineDiophCheck(benchmark::State& state) {
  const ModeTable table(2, static_cast<int>(state.range(0)), 2.5);
  const VectorXd F = golden_pair();
  VectorXd beta(1);
  beta << 0.37;
  const DiophParams params{2.5, 1e-4, 2};
  for (auto _ : state) benchmark::DoNotOptimize(affine_dioph_check(F, beta, params, table).worst_ratio);
  state.SetItemsProcessed(state.iterations() * static_cast<long>(table.size()));
}

void BM_RhoXiSphereSearch(benchmark::State& state) {
  const auto jet = jet_by_differences([](const VectorXd& mu) { return VectorXd(mu.array().square()); },
                                      [](const VectorXd& mu) { return VectorXd::Constant(1, 3.0 * mu.sum()); },
                                      VectorXd::Zero(static_cast<int>(state.range(0))), 2);
  for (auto _ : state) {
    benchmark::DoNotOptimize(rho_Q(jet, 2).value);
    benchmark::DoNotOptimize(xi_Q(jet, {1}, 2).value);
  }
}

}  // namespace

BENCHMARK(BM_ModeTableBuild)->Arg(50)->Arg(200);
BENCHMARK(BM_AffineDiophCheck)->Arg(50)->Arg(200);
BENCHMARK(BM_RhoXiSphereSearch)->Arg(1)->Arg(2)->Arg(3);

BENCHMARK_MAIN();
