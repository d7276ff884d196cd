#include <benchmark/benchmark.h>

#include <cmath>
#include <string>

#include "facelab/eval.hpp"
#include "facelab/random.hpp"

namespace {

using namespace facelab;

std::vector<float> random_unit(Rng& rng, int dim) {
  std::vector<float> v(static_cast<std::size_t>(dim));
  double n2 = 0.0;
  for (auto& x : v) {
    x = static_cast<float>(rng.normal());
    n2 += static_cast<double>(x) * x;
  }
  for (auto& x : v) x = static_cast<float>(x / std::sqrt(n2));
  return v;
}

void BM_IdentifyRankK(benchmark::State& state) {
  const int distractors = static_cast<int>(state.range(0));
  const int dim = 512, probes = 100;
  Rng rng(1);
  EmbeddingStore p, g, d;
  for (int i = 0; i < probes; ++i) {
    const std::string id = "p" + std::to_string(i);
    const auto v = random_unit(rng, dim);
    p.add({id, id + "/probe", v, true});
    g.add({id, id + "/gallery", v, true});
  }
  for (int i = 0; i < distractors; ++i) {
    const std::string id = "d" + std::to_string(i);
    d.add({id, id, random_unit(rng, dim), true});
  }
  IdentifyOptions opt;
  opt.kmax = 10;
  opt.block_size = static_cast<std::size_t>(state.range(1));
  for (auto _ : state) benchmark::DoNotOptimize(identify_rank_k(p, g, d, opt));
  state.SetItemsProcessed(state.iterations() * probes * (distractors + probes));
}
BENCHMARK(BM_IdentifyRankK)->Args({10000, 4096})->Args({10000, 512})->Args({100000, 4096})->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
