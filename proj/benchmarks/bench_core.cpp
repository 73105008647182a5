#include <benchmark/benchmark.h>

#include "stsun/attention.hpp"
#include "stsun/ops.hpp"
#include "stsun/rng.hpp"

using namespace stsun;

namespace {

Tensor rand_tensor(Rng& rng, Shape shape, double scale = 1.0) {
  std::vector<double> data(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& v : data) v = rng.normal() * scale;
  return Tensor::from_data(std::move(shape), std::move(data));
}

void BM_matmul(benchmark::State& state) {
  auto n = state.range(0);
  Rng rng(1);
  Tensor a = rand_tensor(rng, {n, n});
  Tensor b = rand_tensor(rng, {n, n});
  NoGradGuard no_grad;
  for (auto _ : state) {
    benchmark::DoNotOptimize(matmul(a, b));
  }
  state.SetItemsProcessed(state.iterations() * 2 * n * n * n);
}
BENCHMARK(BM_matmul)->Arg(64)->Arg(128)->Arg(256);

void BM_softmax_rows(benchmark::State& state) {
  auto n = state.range(0);
  Rng rng(2);
  Tensor x = rand_tensor(rng, {n, n});
  NoGradGuard no_grad;
  for (auto _ : state) {
    benchmark::DoNotOptimize(softmax_rows(x));
  }
}
BENCHMARK(BM_softmax_rows)->Arg(256);

void BM_lgwa_block(benchmark::State& state) {
  std::int64_t grid = 16, d = 128;
  Rng rng(3);
  LgwaBlockParams p;
  for (int i = 0; i < 5; ++i) {
    p.norms[static_cast<std::size_t>(i)] = {Tensor::full({d}, 1.0), Tensor::zeros({d})};
  }
  for (int i = 0; i < 4; ++i) {
    p.attn[static_cast<std::size_t>(i)] = {rand_tensor(rng, {d, d}, 0.05),
                                           rand_tensor(rng, {d, d}, 0.05),
                                           rand_tensor(rng, {d, d}, 0.05),
                                           rand_tensor(rng, {d, d}, 0.05), 4};
  }
  p.mlp = {rand_tensor(rng, {d, 4 * d}, 0.05), Tensor::zeros({4 * d}),
           rand_tensor(rng, {4 * d, d}, 0.05), Tensor::zeros({d})};
  WindowConfig wc;
  Tensor x = rand_tensor(rng, {grid * grid, d});
  NoGradGuard no_grad;
  for (auto _ : state) {
    benchmark::DoNotOptimize(lgwa_block(x, 1, grid, grid, p, wc));
  }
}
BENCHMARK(BM_lgwa_block);

}  // namespace
