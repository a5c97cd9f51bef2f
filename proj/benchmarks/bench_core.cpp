#include <benchmark/benchmark.h>

#include <random>

#include "afa/data.hpp"
#include "afa/training.hpp"

using namespace afa;

namespace {

Tensor random_tensor(Shape s, std::mt19937_64& rng) {
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  Tensor t(s);
  for (auto& v : t.data()) v = u(rng);
  return t;
}

}  // namespace

static void BM_Conv2d(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(0);
  Tensor in = random_tensor(Shape{c, 8, 12}, rng);
  Tensor k = random_tensor(Shape{c, c, 3, 3}, rng);
  Tensor b(Shape{c});
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(in, k, b));
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(c * c * 9 * 96));
}
BENCHMARK(BM_Conv2d)->Arg(2)->Arg(8)->Arg(16);

static void BM_ConvLstmStep(benchmark::State& state) {
  std::mt19937_64 rng(1);
  auto p = ConvLstmParams<float>::zeros(10, 8);
  for (auto& g : p.gates) {
    g.input_kernels = random_tensor(g.input_kernels.shape(), rng);
    g.hidden_kernels = random_tensor(g.hidden_kernels.shape(), rng);
  }
  auto s = ConvLstmState<float>::zeros(8, 8, 12);
  Tensor x = random_tensor(Shape{10, 8, 12}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(convlstm_step(p, s, x));
}
BENCHMARK(BM_ConvLstmStep);

static void BM_NetworkStep(benchmark::State& state) {
  const auto layers = static_cast<std::size_t>(state.range(0));
  auto cfg = NetworkConfig::make(layers, 8, 12, 1, 2);
  std::mt19937_64 rng(2);
  auto p = init_parameters<float>(cfg, rng);
  auto st = init_state<float>(cfg);
  Tensor frame(Shape{1, 8, 12});
  frame.at(0, 3, 4) = 1.0f;
  const std::vector<float> a{1.0f, 0.0f};
  for (auto _ : state) benchmark::DoNotOptimize(network_step<float>(p, st, frame, a));
}
BENCHMARK(BM_NetworkStep)->Arg(2)->Arg(3);

static void BM_TrainIteration(benchmark::State& state) {
  const Dataset data = gen_minworld();
  auto cfg = NetworkConfig::make(2, 8, 12, 1, 2);
  std::mt19937_64 rng(3);
  auto p = init_parameters<float>(cfg, rng);
  Adam<float> opt(p, 0.001);
  const auto lw = resolve_layer_weights(TrainConfig{}, cfg);
  std::size_t s = 0;
  for (auto _ : state) {
    std::vector<StepTrace<float>> traces;
    (void)rollout<float>(p, data.sequences[s++ % data.sequences.size()], {}, &traces);
    opt.step(p, backward<float>(p, traces, lw));
  }
}
BENCHMARK(BM_TrainIteration)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
