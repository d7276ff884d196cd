#include <benchmark/benchmark.h>

#include <vector>

#include "facelab/head.hpp"
#include "facelab/random.hpp"

namespace {

using namespace facelab;

void BM_HeadForwardBackward(benchmark::State& state) {
  const auto variant = static_cast<HeadVariant>(state.range(0));
  const int classes = static_cast<int>(state.range(1));
  const int batch = 64, dim = 512;
  const auto spec = default_head_spec(variant, classes, dim);
  const auto [weights, head_state] = create_head<float>(spec, 1);
  Rng rng(2);
  HeadMatrix<float> features(batch, dim);
  for (int i = 0; i < batch; ++i) {
    for (int d = 0; d < dim; ++d) features(i, d) = static_cast<float>(rng.normal());
  }
  std::vector<int> labels(batch);
  for (auto& y : labels) y = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(classes)));
  for (auto _ : state) benchmark::DoNotOptimize(head_forward(spec, weights, head_state, features, labels));
  state.SetLabel(to_string(variant));
}
BENCHMARK(BM_HeadForwardBackward)
    ->ArgsProduct({{static_cast<long>(HeadVariant::Softmax), static_cast<long>(HeadVariant::AmSoftmax),
                    static_cast<long>(HeadVariant::ArcFace), static_cast<long>(HeadVariant::MvSoftmax),
                    static_cast<long>(HeadVariant::Circle), static_cast<long>(HeadVariant::NpcFace)},
                   {1000, 10000}})
    ->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
