// Microbenchmarks for the numeric hot paths: loss kernels, sampler draws,
// threshold sweeps, and a backbone forward pass. These guard against
// accidental slowdowns; absolute numbers depend on the host.

#include <cstdint>
#include <vector>

#include <benchmark/benchmark.h>
#include <torch/torch.h>

#include "ucast/common.hpp"
#include "ucast/dataset.hpp"
#include "ucast/losses.hpp"
#include "ucast/network.hpp"
#include "ucast/sampling.hpp"
#include "ucast/thresholding.hpp"

namespace {

torch::Tensor rand_logits(std::vector<int64_t> shape, uint64_t seed) {
  torch::manual_seed(seed);
  return torch::randn(shape) * 3.0;
}

torch::Tensor rand_mask(std::vector<int64_t> shape, uint64_t seed, double p = 0.1) {
  torch::manual_seed(seed);
  return (torch::rand(shape) < p).to(torch::kFloat32);
}

void BM_ForecastLoss(benchmark::State& state) {
  auto logits = rand_logits({8, 1, 224, 224}, 1);
  auto y = rand_mask({8, 1, 224, 224}, 2);
  for (auto _ : state) {
    auto loss = ucast::forecast_loss(logits, y);
    benchmark::DoNotOptimize(loss.item<double>());
  }
}
BENCHMARK(BM_ForecastLoss)->Unit(benchmark::kMillisecond);

void BM_CombinedLoss(benchmark::State& state) {
  auto q_e = rand_logits({8, 224, 224}, 3);
  auto q_l = rand_logits({8, 224, 224}, 4);
  auto q_0 = rand_logits({8, 224, 224}, 5);
  auto y_c = rand_mask({8, 224, 224}, 6);
  auto y_e = rand_mask({8, 224, 224}, 7, 0.5) * y_c;
  for (auto _ : state) {
    auto loss = ucast::combined_loss(q_e, q_l, q_0, y_e, y_c);
    benchmark::DoNotOptimize(loss.total.item<double>());
  }
}
BENCHMARK(BM_CombinedLoss)->Unit(benchmark::kMillisecond);

void BM_SamplerDrawBatch(benchmark::State& state) {
  std::vector<int64_t> counts(state.range(0));
  ucast::Rng seed_rng(11);
  for (auto& c : counts) c = seed_rng.uniform_int(0, 5000);
  ucast::ChangeWeightedSampler sampler(counts);
  ucast::Rng rng(12);
  for (auto _ : state) {
    auto batch = sampler.draw_batch(rng, 16);
    benchmark::DoNotOptimize(batch.data());
  }
}
BENCHMARK(BM_SamplerDrawBatch)->Arg(1000)->Arg(100000);

void BM_ThresholdSweep(benchmark::State& state) {
  const int64_t n = state.range(0);
  std::vector<float> scores(n);
  std::vector<uint8_t> labels(n);
  ucast::Rng rng(21);
  for (int64_t i = 0; i < n; ++i) {
    scores[i] = static_cast<float>(rng.uniform());
    labels[i] = scores[i] + 0.3 * rng.uniform() > 0.9 ? 1 : 0;
  }
  for (auto _ : state) {
    auto best = ucast::batch_optimal_threshold(scores, labels);
    benchmark::DoNotOptimize(best);
  }
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_ThresholdSweep)->Arg(10000)->Arg(200000)->Unit(benchmark::kMillisecond);

void BM_TrackerUpdate(benchmark::State& state) {
  const int64_t n = 50176;  // one 224x224 patch worth of scores
  std::vector<float> scores(n);
  std::vector<uint8_t> labels(n);
  ucast::Rng rng(31);
  for (int64_t i = 0; i < n; ++i) {
    scores[i] = static_cast<float>(rng.uniform());
    labels[i] = rng.uniform() < 0.05 ? 1 : 0;
  }
  ucast::MovingThresholdTracker tracker(0.5);
  for (auto _ : state) {
    tracker.update(scores, labels);
    benchmark::DoNotOptimize(tracker.current());
  }
}
BENCHMARK(BM_TrackerUpdate)->Unit(benchmark::kMillisecond);

void BM_BackboneForward(benchmark::State& state) {
  ucast::Backbone net{ucast::BackboneConfig{}};
  net->eval();
  torch::NoGradGuard no_grad;
  auto x = torch::rand({1, 3, 224, 224});
  for (auto _ : state) {
    auto out = net->forward(x);
    benchmark::DoNotOptimize(out.data_ptr<float>());
  }
}
BENCHMARK(BM_BackboneForward)->Unit(benchmark::kMillisecond);

void BM_DeriveChangeMask(benchmark::State& state) {
  torch::manual_seed(41);
  auto m0 = (torch::rand({448, 448}) < 0.3).to(torch::kUInt8);
  auto m1 = (torch::rand({448, 448}) < 0.35).to(torch::kUInt8);
  for (auto _ : state) {
    auto mask = ucast::derive_change_mask(m0, m1);
    benchmark::DoNotOptimize(mask.data_ptr<uint8_t>());
  }
}
BENCHMARK(BM_DeriveChangeMask);

}  // namespace

int main(int argc, char** argv) {
  at::set_num_threads(1);
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
