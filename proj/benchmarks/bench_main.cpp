#include <benchmark/benchmark.h>

#include <random>

#include "gtnet/attention.hpp"
#include "gtnet/graph.hpp"
#include "gtnet/model.hpp"

using namespace gtnet;

namespace {

Tensor random_points(std::size_t n, std::size_t c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(-1, 1);
  std::vector<double> v(n * c);
  for (auto& x : v) x = d(rng);
  return Tensor::from({n, c}, std::move(v));
}

void BM_KnnBuild(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto m = static_cast<std::size_t>(state.range(1));
  const Tensor x = random_points(n, m, 1);
  for (auto _ : state) benchmark::DoNotOptimize(graph::knn_build(x, 20).indices.data());
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n));
}
BENCHMARK(BM_KnnBuild)->Args({1024, 3})->Args({1024, 64})->Args({2048, 96})->Unit(benchmark::kMillisecond);

void BM_LocalForward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto d = static_cast<std::size_t>(state.range(1));
  std::mt19937_64 rng(2);
  ParameterStore store;
  attention::LocalBlock block(store, "l", {d, d}, rng);
  const Tensor x = random_points(n, d, 3);
  const auto g = graph::knn_build(x, 20, graph::Space::feature);
  NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(block.forward(x, g).data().data());
}
BENCHMARK(BM_LocalForward)->Args({256, 64})->Args({1024, 64})->Unit(benchmark::kMillisecond);

void BM_BlockForwardBackward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(4);
  ParameterStore store;
  attention::GraphTransformerBlock block(store, "b", {64, 64}, rng);
  const Tensor x = random_points(n, 64, 5);
  const auto g = graph::knn_build(x, 20, graph::Space::feature);
  for (auto _ : state) {
    store.zero_grad();
    backward(sum_all(block.forward(x, g, Mode::eval())));
  }
}
BENCHMARK(BM_BlockForwardBackward)->Arg(128)->Arg(512)->Unit(benchmark::kMillisecond);

void BM_ModelForward(benchmark::State& state) {
  model::ModelConfig cfg;
  cfg.num_classes = 2;
  cfg.blocks = {{3, 64}, {64, 64}};
  model::GTNet net(cfg);
  const Tensor x = random_points(static_cast<std::size_t>(state.range(0)), 3, 6);
  NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(net.forward(x, std::nullopt, Mode::eval()).logits.data().data());
}
BENCHMARK(BM_ModelForward)->Arg(128)->Arg(1024)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
