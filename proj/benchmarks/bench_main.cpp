#include <benchmark/benchmark.h>

#include <random>

#include "cascal/cascade.hpp"
#include "cascal/experiment.hpp"
#include "cascal/metrics.hpp"
#include "cascal/representation.hpp"

namespace {

using namespace cascal;

LogitsTable random_logits(std::size_t n, std::size_t c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 3.0);
  std::uniform_int_distribution<Label> label(0, static_cast<Label>(c - 1));
  Matrix m(n, c);
  std::vector<Label> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < c; ++k) m(i, k) = normal(rng);
    labels[i] = label(rng);
  }
  return LogitsTable("bench", std::move(m), std::move(labels));
}

void BM_Ece(benchmark::State& state) {
  const auto view = derive_predictions(random_logits(static_cast<std::size_t>(state.range(0)), 10, 1));
  for (auto _ : state) benchmark::DoNotOptimize(ece(view, 15));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Ece)->Arg(1000)->Arg(10000)->Arg(100000);

void BM_Sce(benchmark::State& state) {
  const auto view = derive_predictions(random_logits(static_cast<std::size_t>(state.range(0)), 10, 1));
  for (auto _ : state) benchmark::DoNotOptimize(sce(view, 15));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Sce)->Arg(10000);

void BM_CategoryRepresentation(benchmark::State& state) {
  const auto view = derive_predictions(random_logits(static_cast<std::size_t>(state.range(0)), 10, 2));
  for (auto _ : state) benchmark::DoNotOptimize(category_representation(view));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_CategoryRepresentation)->Arg(5000)->Arg(50000);

void BM_ConfidenceRepresentation(benchmark::State& state) {
  const auto view = derive_predictions(random_logits(static_cast<std::size_t>(state.range(0)), 10, 3));
  for (auto _ : state) benchmark::DoNotOptimize(confidence_bins(view));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ConfidenceRepresentation)->Arg(5000);

void BM_MlpForward(benchmark::State& state) {
  const MlpNetwork net({630, 128, 64, 10}, 4);
  const std::vector<double> x(630, 0.1);
  for (auto _ : state) benchmark::DoNotOptimize(net.forward(x));
}
BENCHMARK(BM_MlpForward);

void BM_MlpForwardBackward(benchmark::State& state) {
  const MlpNetwork net({630, 128, 64, 10}, 4);
  const std::vector<double> x(630, 0.1), g(10, 0.01);
  MlpNetwork::Cache cache;
  for (auto _ : state) {
    net.forward(x, &cache);
    benchmark::DoNotOptimize(net.backward(cache, g));
  }
}
BENCHMARK(BM_MlpForwardBackward);

// One meta-set visit of training: loss, gradients and both Adam steps.
void BM_TrainingStep(benchmark::State& state) {
  ExperimentConfig config;
  const auto world = make_world(config);
  const auto table = generate_split(world, 5000, make_shift(ShiftKind::feature_noise, 2, 1), 5, "m");
  CascadeModel model(config.cascade, 6);
  const auto cls_input = model.category_input(derive_predictions(table));
  AdamState cls_state(model.category_net().parameter_count(), config.cascade.adam);
  AdamState con_state(model.confidence_net().parameter_count(), config.cascade.adam);
  CascadeLossEvaluator evaluator;
  for (auto _ : state) {
    const auto loss = evaluator(model, table, cls_input);
    adam_step(cls_state, model.category_net().parameters(), loss.category_grad);
    adam_step(con_state, model.confidence_net().parameters(), loss.confidence_grad);
  }
}
BENCHMARK(BM_TrainingStep)->Unit(benchmark::kMillisecond);

void BM_CascadeApply(benchmark::State& state) {
  ExperimentConfig config;
  const auto world = make_world(config);
  const auto table = generate_split(world, 10000, make_shift(ShiftKind::mean_drift, 3, 1), 7, "t");
  const CascadeModel model(config.cascade, 8);
  for (auto _ : state) benchmark::DoNotOptimize(apply(model, table));
}
BENCHMARK(BM_CascadeApply)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
