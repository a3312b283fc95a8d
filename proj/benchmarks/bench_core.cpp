#include "srlab/adversarial.hpp"
#include "srlab/harness/experiments.hpp"
#include "srlab/spectral.hpp"
#include "srlab/update.hpp"

#include <benchmark/benchmark.h>

#include <cmath>

using namespace srlab;

static void BM_GibbsSharpen(benchmark::State& state) {
  RandomStream rng(1);
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto pi = random_tabular_policy(n, n, 1.0, rng);
  for (auto _ : state) benchmark::DoNotOptimize(gibbs_sharpen(pi, 0.5));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n));
}
BENCHMARK(BM_GibbsSharpen)->Arg(16)->Arg(128);

static void BM_DpoLoss(benchmark::State& state) {
  RandomStream rng(2);
  const auto pi = random_tabular_policy(8, 16, 1.0, rng);
  const auto target = gibbs_sharpen(pi, 1.0);
  const auto data = generate_dataset(pi, PromptDistribution::uniform(8), static_cast<std::size_t>(state.range(0)), rng);
  for (auto _ : state) benchmark::DoNotOptimize(dpo_loss(target, pi, data, 1.0));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_DpoLoss)->Arg(1000)->Arg(16000);

static void BM_ErmProduct(benchmark::State& state) {
  const HardInstanceParams params{4, static_cast<std::size_t>(state.range(0)), 0.2};
  RandomStream rng(3);
  const auto inst = HardInstance::build(params, rng);
  const double beta = 1.0 / std::sqrt(2000.0);
  const auto cls = hard_instance_class(params, beta);
  const auto data = generate_dataset(inst.base_policy(), inst.mu(), 2000, rng);
  for (auto _ : state) benchmark::DoNotOptimize(erm_product(cls, inst.base_policy(), data, beta));
}
BENCHMARK(BM_ErmProduct)->Arg(8)->Arg(12);

static void BM_ErmLinear(benchmark::State& state) {
  RandomStream rng(4);
  const auto pi = random_linear_policy(5, 10, static_cast<std::size_t>(state.range(0)), 10.0, 0.5, rng);
  const auto data = generate_dataset(pi, PromptDistribution::uniform(5), 200, rng);
  for (auto _ : state) benchmark::DoNotOptimize(erm_linear(pi.features(), pi.theta(), data, 1.0 / std::sqrt(200.0), 10.0));
}
BENCHMARK(BM_ErmLinear)->Arg(4)->Arg(8);

static void BM_EffectiveDimension(benchmark::State& state) {
  const Spectrum s = canonical_spectrum(PolynomialRegime{1.0, 2.0}, static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(effective_dimension(s, 1e-4));
}
BENCHMARK(BM_EffectiveDimension)->Arg(64)->Arg(4096);
BENCHMARK_MAIN();
