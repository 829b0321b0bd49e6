#include <benchmark/benchmark.h>

#include "facechannel/dataset.hpp"
#include "facechannel/model.hpp"
#include "facechannel/ops.hpp"
#include "facechannel/optimizer.hpp"
#include "facechannel/trainer.hpp"

namespace fc = facechannel;

namespace {

fc::Tensor<float> random_tensor(const fc::Shape& shape, std::uint64_t seed) {
  fc::Rng rng(seed);
  fc::Tensor<float> t(shape);
  for (auto& v : t.data()) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  return t;
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_tensor({n, n}, 1), b = random_tensor({n, n}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(fc::matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(256)->Arg(512);

// Shapes of the canonical blocks: {channels in, channels out, spatial size}.
void BM_Conv3x3(benchmark::State& state) {
  const auto cin = static_cast<std::size_t>(state.range(0)), cout = static_cast<std::size_t>(state.range(1)),
             s = static_cast<std::size_t>(state.range(2));
  const auto x = random_tensor({1, cin, s, s}, 3), k = random_tensor({cout, cin, 3, 3}, 4);
  const auto b = random_tensor({cout}, 5);
  for (auto _ : state) benchmark::DoNotOptimize(fc::conv2d(x, k, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * 9 * cin * cout * s * s));
}
BENCHMARK(BM_Conv3x3)->Args({3, 32, 128})->Args({32, 64, 64})->Args({64, 128, 32})->Args({128, 128, 16});

void BM_ForwardInfer(benchmark::State& state, fc::ModelConfig cfg) {
  auto model = fc::build_facechannel<float>(cfg);
  const auto batch = static_cast<std::size_t>(state.range(0));
  const auto x = random_tensor({batch, cfg.input_channels, cfg.input_size, cfg.input_size}, 6);
  fc::Rng rng(0);
  for (auto _ : state) benchmark::DoNotOptimize(model.forward(x, fc::Mode::kInfer, rng));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch));
}
BENCHMARK_CAPTURE(BM_ForwardInfer, canonical, fc::ModelConfig::canonical())->Arg(1)->Arg(8)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_ForwardInfer, tiny, fc::ModelConfig::tiny())->Arg(32)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state, fc::ModelConfig cfg) {
  auto model = fc::build_facechannel<float>(cfg);
  const auto n = static_cast<std::size_t>(state.range(0));
  const std::size_t k = cfg.head.outputs();
  fc::Batch<float> batch{random_tensor({n, cfg.input_channels, cfg.input_size, cfg.input_size}, 7),
                         fc::Tensor<float>({n, k}, 0.0f), {}};
  for (std::size_t i = 0; i < n; ++i) batch.targets[i * k + i % k] = 1.0f;
  fc::SgdMomentum<float> opt(0.01, 0.9);
  fc::Rng rng(1);
  for (auto _ : state) benchmark::DoNotOptimize(fc::train_step(model, batch, fc::LossKind::kCrossEntropy, opt, rng));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK_CAPTURE(BM_TrainStep, canonical, fc::ModelConfig::canonical())->Arg(8)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_TrainStep, tiny, fc::ModelConfig::tiny())->Arg(32)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
