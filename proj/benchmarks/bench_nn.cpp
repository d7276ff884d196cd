#include <benchmark/benchmark.h>

#include "facelab/backbone.hpp"
#include "facelab/nn.hpp"
#include "facelab/random.hpp"

namespace {

using namespace facelab;

Tensor<float> random_batch(int n, int c, int h, int w) {
  Rng rng(3);
  Tensor<float> x(n, c, h, w);
  for (auto& v : x.values()) v = static_cast<float>(rng.normal());
  return x;
}

void BM_Conv3x3(benchmark::State& state) {
  const int channels = static_cast<int>(state.range(0));
  const int side = static_cast<int>(state.range(1));
  Rng rng(1);
  nn::ConvOptions o;
  o.in_channels = o.out_channels = channels;
  o.padding = 1;
  nn::Conv2d<float> conv(o, rng);
  const auto x = random_batch(8, channels, side, side);
  for (auto _ : state) benchmark::DoNotOptimize(conv.forward(x, nn::Mode::Eval));
}
BENCHMARK(BM_Conv3x3)->Args({32, 28})->Args({64, 14})->Unit(benchmark::kMillisecond);

void BM_BackboneTrainStep(benchmark::State& state) {
  BackboneSpec spec;
  spec.width = 0.5;
  spec.embedding_dim = 128;
  spec.input_height = spec.input_width = static_cast<int>(state.range(0));
  auto net = create_backbone(spec, 1);
  const auto x = random_batch(32, 3, spec.input_height, spec.input_width);
  for (auto _ : state) {
    const auto y = net->forward(x, nn::Mode::Train);
    net->zero_grad();
    benchmark::DoNotOptimize(net->backward(Tensor<float>(y.n(), y.c(), y.h(), y.w(), 1.0f)));
  }
}
BENCHMARK(BM_BackboneTrainStep)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
