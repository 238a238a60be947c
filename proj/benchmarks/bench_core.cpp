#include <benchmark/benchmark.h>

#include "ld/distill.hpp"
#include "ld/linalg.hpp"
#include "ld/rng.hpp"

namespace {

using namespace ld;

Tensor randn(const Shape& shape, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t(shape);
  for (double& v : t.data()) v = rng.normal();
  return t;
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor a = randn({n, n}, 1);
  const Tensor b = randn({n, n}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(linalg::matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(256);

void BM_SolveLocal(benchmark::State& state) {
  const auto b = static_cast<std::size_t>(state.range(0));
  const Tensor z = randn({b, 129}, 3);
  const Tensor y = randn({b, 10}, 4);
  for (auto _ : state) benchmark::DoNotOptimize(solve_local(z, y, 1.0));
}
BENCHMARK(BM_SolveLocal)->Arg(10)->Arg(100);

void BM_MetaGradRR(benchmark::State& state) {
  const auto outer = static_cast<std::size_t>(state.range(0));
  RRHead head = RRHead::zeros(129, 10, 1.0, 0.01);
  const Tensor zi = randn({10, 129}, 5);
  const Tensor zo = randn({outer, 129}, 6);
  const Tensor yi(Shape{10, 10}, 0.1);
  Tensor yo({outer, 10});
  for (std::size_t i = 0; i < outer; ++i) yo(i, i % 10) = 1.0;
  for (auto _ : state) benchmark::DoNotOptimize(meta_grad_rr_features(head, zi, yi, zo, yo));
}
BENCHMARK(BM_MetaGradRR)->Arg(256)->Arg(1024);

void BM_MetaGradSecondOrder(benchmark::State& state) {
  const ModelState m = init_model(make_arch(ArchKind::mlp, 28, 28), 10, HeadKind::standard, 1);
  const Tensor xi = randn({10, 784}, 7);
  const Tensor xo = randn({256, 784}, 8);
  const Tensor yi(Shape{10, 10}, 0.1);
  Tensor yo({256, 10});
  for (std::size_t i = 0; i < 256; ++i) yo(i, i % 10) = 1.0;
  for (auto _ : state) benchmark::DoNotOptimize(meta_grad_second_order(m, xi, yi, xo, yo, 0.01));
}
BENCHMARK(BM_MetaGradSecondOrder)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
