#include <benchmark/benchmark.h>

#include "streamadapt/engine.hpp"
#include "streamadapt/random.hpp"

using namespace streamadapt;

namespace {

Frame rainy_frame(int side) {
  SceneSpec spec = SceneSpec::make_default();
  spec.width = side;
  spec.height = side;
  return apply_rain(gen_scene(spec, 1).frame, 0.6, 2);
}

void BM_Fft2(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  Rng rng(1);
  std::vector<double> patch(static_cast<std::size_t>(n) * n);
  for (double& v : patch) v = 255.0 * rng.uniform();
  for (auto _ : state) benchmark::DoNotOptimize(fft2(patch, n));
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_Fft2)->Arg(4)->Arg(16)->Arg(64);

void BM_EnergyMap(benchmark::State& state) {
  const Frame f = rainy_frame(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(energy_map(f, FrequencySpec{}));
}
BENCHMARK(BM_EnergyMap)->Arg(128)->Unit(benchmark::kMicrosecond);

void BM_Forward(benchmark::State& state) {
  const ModelParams p = init_params(ModelShape{}, 1);
  const Frame f = rainy_frame(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(forward(p, f, Heads::Both));
}
BENCHMARK(BM_Forward)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_Backward(benchmark::State& state) {
  const ModelParams p = init_params(ModelShape{}, 1);
  const Frame f = rainy_frame(static_cast<int>(state.range(0)));
  const auto cache = forward(p, f, Heads::Main);
  Tensor up(cache.logits->dims, 1e-3f);
  for (auto _ : state) benchmark::DoNotOptimize(backward(p, cache, &up));
}
BENCHMARK(BM_Backward)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_AdaptStep(benchmark::State& state) {
  RunConfig cfg = RunConfig::make_default(0);
  cfg.buffer.source_frames = 16;
  const ReplayBuffer buffer = build_source_buffer(cfg);
  AdaptState s = AdaptState::from_checkpoint(Checkpoint::from_source(init_params(cfg.model, 1)));
  const Frame f = rainy_frame(128);
  AdaptationOrder order;
  order.lr = 1e-4;
  order.alpha_mask = 0.5;
  order.alpha_mix = 0.6;
  order.iterations = 1 << 30;
  s.begin_order(order);
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(adapt_step(s, f, &buffer, cfg.adapt, cfg.optimizer, ++seed));
}
BENCHMARK(BM_AdaptStep)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
