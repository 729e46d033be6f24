#include <benchmark/benchmark.h>

#include <vector>

#include "cohconf/data_io.hpp"
#include "cohconf/dcf.hpp"
#include "cohconf/evaluation.hpp"
#include "cohconf/graph_features.hpp"
#include "cohconf/hard_cf.hpp"
#include "cohconf/training.hpp"

using namespace cohconf;

namespace {

Dataset bench_data(std::size_t n) {
  SynthConfig c;
  c.n_problems = n;
  c.seed = 7;
  return generate_synthetic(c);
}

std::vector<std::vector<double>> freq_risks(const std::vector<AdgProblem>& ps) {
  const double c = max_frequency(ps);
  std::vector<std::vector<double>> r;
  for (const auto& p : ps) r.push_back(frequency_baseline_risk(p, 0.0, c));
  return r;
}

void BM_HardNonconformity(benchmark::State& state) {
  const auto ds = bench_data(200);
  const auto risks = freq_risks(ds.problems);
  for (auto _ : state) {
    double acc = 0;
    for (std::size_t i = 0; i < ds.problems.size(); ++i)
      acc += hard_nonconformity(ds.problems[i], risks[i], build_tau_grid(risks[i], 20.0));
    benchmark::DoNotOptimize(acc);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(ds.problems.size()));
}
BENCHMARK(BM_HardNonconformity);

void BM_SoftCalibrateAndPredict(benchmark::State& state) {
  const auto ds = bench_data(200);
  const auto risks = freq_risks(ds.problems);
  const auto cfg = SoftConfig::sharp();
  for (auto _ : state) {
    const auto cal = soft_calibrate_values(ds.problems, risks, 0.1, cfg);
    double acc = 0;
    for (std::size_t i = 0; i < ds.problems.size(); ++i)
      for (double q : soft_predict_values(ds.problems[i], risks[i], cal.tau_hat, cfg)) acc += q;
    benchmark::DoNotOptimize(acc);
  }
}
BENCHMARK(BM_SoftCalibrateAndPredict)->Unit(benchmark::kMillisecond);

void BM_LossAndGradient(benchmark::State& state) {
  const auto ds = bench_data(static_cast<std::size_t>(state.range(0)));
  const std::size_t half = ds.problems.size() / 2;
  const std::span<const AdgProblem> cal(ds.problems.data(), half), pred(ds.problems.data() + half, half);
  ScorerParams sp{std::vector<double>(ds.schema.size(), 0.01), 0.0, 0.0};
  std::vector<double> grad;
  for (auto _ : state)
    benchmark::DoNotOptimize(
        loss_and_gradient(cal, pred, sp, 0.1, SoftConfig::train_default(), QuantileOrientation::Lower, grad));
}
BENCHMARK(BM_LossAndGradient)->Arg(50)->Arg(200)->Unit(benchmark::kMillisecond);

void BM_StructuralFeatures(benchmark::State& state) {
  const auto ds = bench_data(200);
  for (auto _ : state)
    for (const auto& p : ds.problems) benchmark::DoNotOptimize(compute_structural_features(p));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(ds.problems.size()));
}
BENCHMARK(BM_StructuralFeatures);

}  // namespace

BENCHMARK_MAIN();
