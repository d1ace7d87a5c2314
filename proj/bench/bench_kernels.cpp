// Serial reference vs OpenMP kernels. Compare the /0 (serial) and /1
// (parallel) variants; the gradient benchmarks also time the per-sample
// scalar reference.

#include <benchmark/benchmark.h>

#include "dftc/eval.hpp"
#include "dftc/nn.hpp"
#include "dftc/observability.hpp"
#include "dftc/rng.hpp"

using namespace dftc;

namespace {

Execution exec_of(const benchmark::State& st) {
  return st.range(0) == 0 ? Execution::Serial : Execution::Parallel;
}

const LqrGain& gain() {
  static const LqrGain g = design_baseline(PlantParams{}, CostWeights{}, 0.01);
  return g;
}

nn::PackedBatch random_batch(const nn::ModelParams& mp, int n) {
  Rng rng(1);
  std::vector<SampleWindow> windows;
  for (int s = 0; s < n; ++s) {
    StateSeries w(mp.arch.window, 6);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.normal();
    windows.push_back({w, ControlInput(rng.normal(), rng.normal())});
  }
  return nn::pack_windows(mp, windows);
}

void BM_Generate(benchmark::State& st) {
  GenerationConfig cfg;
  cfg.n_traj = 100;
  for (auto _ : st) {
    benchmark::DoNotOptimize(generate_trajectories(PlantParams{}, gain(), cfg, 1, exec_of(st)));
  }
}
BENCHMARK(BM_Generate)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_Augment(benchmark::State& st) {
  GenerationConfig cfg;
  cfg.n_traj = 100;
  const Dataset ds = generate_trajectories(PlantParams{}, gain(), cfg, 1);
  for (auto _ : st) benchmark::DoNotOptimize(augment(ds, AugmentationConfig{}, 2, exec_of(st)));
}
BENCHMARK(BM_Augment)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_Gramian(benchmark::State& st) {
  GramianConfig cfg;
  cfg.base_points = default_base_points(4, 1);
  for (auto _ : st) {
    benchmark::DoNotOptimize(
        rank_configurations(PlantParams{}, single_fault_configs(), cfg, &gain(), exec_of(st)));
  }
}
BENCHMARK(BM_Gramian)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_BatchGradient(benchmark::State& st) {
  const nn::ModelParams mp = nn::init_model(nn::Architecture::dftc(), Normalizer{}, 1);
  const nn::PackedBatch b = random_batch(mp, 256);
  std::vector<double> grad;
  for (auto _ : st) benchmark::DoNotOptimize(nn::batch_gradient(mp, b, 1e-3, grad, exec_of(st)));
  st.SetItemsProcessed(st.iterations() * b.size());
}
BENCHMARK(BM_BatchGradient)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_BatchGradientChunk(benchmark::State& st) {
  const nn::ModelParams mp = nn::init_model(nn::Architecture::dftc(), Normalizer{}, 1);
  const nn::PackedBatch b = random_batch(mp, 256);
  std::vector<double> grad;
  for (auto _ : st) {
    benchmark::DoNotOptimize(
        nn::batch_gradient(mp, b, 1e-3, grad, Execution::Serial, st.range(0)));
  }
}
BENCHMARK(BM_BatchGradientChunk)->RangeMultiplier(2)->Range(8, 256)->Unit(benchmark::kMillisecond);

void BM_GradientReference(benchmark::State& st) {
  const nn::ModelParams mp = nn::init_model(nn::Architecture::dftc(), Normalizer{}, 1);
  const nn::PackedBatch b = random_batch(mp, 256);
  std::vector<double> grad;
  for (auto _ : st) benchmark::DoNotOptimize(nn::batch_gradient_reference(mp, b, 1e-3, grad));
  st.SetItemsProcessed(st.iterations() * b.size());
}
BENCHMARK(BM_GradientReference)->Unit(benchmark::kMillisecond);

void BM_Suite(benchmark::State& st) {
  LqrGain detuned = gain();
  detuned.K *= 0.8;
  const BaselineController c(detuned, 5.0, false, "detuned");
  SuiteConfig cfg;
  cfg.n_scenarios = 20;
  for (auto _ : st) {
    benchmark::DoNotOptimize(run_suite(PlantParams{}, gain(), {&c}, cfg, 1, exec_of(st)));
  }
}
BENCHMARK(BM_Suite)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_DftcAct(benchmark::State& st) {
  DftcController c(nn::init_model(nn::Architecture::dftc(), Normalizer{}, 1), 5.0);
  SensorVector y = SensorVector::Constant(0.1);
  for (auto _ : st) benchmark::DoNotOptimize(c.act(y));
}
BENCHMARK(BM_DftcAct)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
