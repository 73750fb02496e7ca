// SPDX-License-Identifier: Apache-2.0
//
// Serial reference paths against their OpenMP counterparts. Argument 0 is the
// serial path, 1 the parallel one.
#include <benchmark/benchmark.h>

#include "bbmf/heatkernel.hpp"
#include "bbmf/mcsim.hpp"
#include "bbmf/pipeline.hpp"
#include "bbmf/spectral.hpp"

namespace {

using namespace bbmf;

Execution mode(const benchmark::State& state) { return state.range(0) == 0 ? Execution::serial : Execution::parallel; }

const ExperimentConfig& ref() {
  static const ExperimentConfig c = [] {
    auto c = square_well_config();
    c.checkpoints = {4.0, 6.0};
    return c;
  }();
  return c;
}

const SpectralData& spectral() {
  static const SpectralData sp = principal_eigenpair(ref().potential, ref().grid);
  return sp;
}

const SimulationSetup& setup() {
  static const SimulationSetup s = make_simulation(validate(ref()), spectral());
  return s;
}

const std::vector<ReplicaResult>& ensemble() {
  static const std::vector<ReplicaResult> rs = run_ensemble(setup(), 0, 4000);
  return rs;
}

const HeatKernelTable& table() {
  static const HeatKernelTable t = [] {
    DensityOptions o;
    o.checkpoints = {6.0};
    o.shift = spectral().lambda0;
    return solve_density(ref().potential, ref().grid, 0.0, o);
  }();
  return t;
}

void BM_RunEnsemble(benchmark::State& state) {
  const auto& s = setup();
  for (auto _ : state) benchmark::DoNotOptimize(run_ensemble(s, 0, 256, mode(state)));
  state.SetItemsProcessed(state.iterations() * 256);
}

void BM_SolveDensityBatch(benchmark::State& state) {
  DensityOptions o;
  o.checkpoints = {2.0};
  o.shift = spectral().lambda0;
  const std::vector<double> sources{-1.0, -0.75, -0.5, -0.25, 0.0, 0.25, 0.5, 0.75};
  for (auto _ : state)
    benchmark::DoNotOptimize(solve_density_batch(ref().potential, ref().grid, sources, o, mode(state)));
}

void BM_BallMassProfile(benchmark::State& state) {
  const auto& t = table();
  for (auto _ : state) benchmark::DoNotOptimize(ball_mass_profile(t.grid, t.values[0], 1.0, mode(state)));
}

void BM_EstimateMoments(benchmark::State& state) {
  const auto& rs = ensemble();
  std::vector<std::vector<double>> m1;
  for (const auto& c : setup().observe.centers) m1.emplace_back(c.size(), 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(estimate_moments(rs, m1, 3, 40, mode(state)));
}

void BM_BatchMean(benchmark::State& state) {
  std::vector<double> v(1 << 20);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(i % 97) * 0.01;
  const auto reduction = state.range(0) == 0 ? Reduction::fixed_order : Reduction::unordered;
  for (auto _ : state) benchmark::DoNotOptimize(batch_mean(v, 64, reduction));
}

}  // namespace

BENCHMARK(BM_RunEnsemble)->Arg(0)->Arg(1)->ArgName("parallel")->UseRealTime()->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SolveDensityBatch)->Arg(0)->Arg(1)->ArgName("parallel")->UseRealTime()->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BallMassProfile)->Arg(0)->Arg(1)->ArgName("parallel")->UseRealTime()->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_EstimateMoments)->Arg(0)->Arg(1)->ArgName("parallel")->UseRealTime()->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BatchMean)->Arg(0)->Arg(1)->ArgName("unordered")->UseRealTime()->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
