#include <benchmark/benchmark.h>

#include "stsun/model.hpp"
#include "stsun/ops.hpp"
#include "stsun/rng.hpp"
#include "stsun/training.hpp"

using namespace stsun;

namespace {

ModelConfig bench_config() {
  ModelConfig cfg;
  cfg.unified_h = 8;
  cfg.unified_w = 8;
  cfg.unified_t = 4;
  cfg.c_e = 8;
  cfg.c_a = 4;
  cfg.encoder_depth = 1;
  cfg.decoder_depth = 1;
  cfg.heads = 4;
  cfg.mlp_ratio = 2;
  cfg.hypernet_depth = 1;
  cfg.hypernet_heads = 2;
  cfg.hypernet_mlp_ratio = 2;
  cfg.windows = {{2, 4}, {4, 2}, {4, 4}, 0.5};
  cfg.categories = {{0, "background"}, {1, "water"}, {2, "forest"}, {3, "building"},
                    {9, "change"}};
  cfg.seed = 1;
  return cfg;
}

InputMetadata bench_meta(std::int64_t t1, std::int64_t c1) {
  InputMetadata meta;
  for (std::int64_t c = 0; c < c1; ++c) meta.wavelengths_nm.push_back(490.0 + 90.0 * static_cast<double>(c));
  for (std::int64_t t = 0; t < t1; ++t) meta.timestamps.push_back(365.0 * static_cast<double>(t));
  meta.resolution_m = 0.5;
  return meta;
}

void BM_forward(benchmark::State& state) {
  Model model(bench_config());
  Rng rng(2);
  std::int64_t b = state.range(0);
  std::vector<double> data(static_cast<std::size_t>(b * 2 * 3 * 32 * 32));
  for (auto& v : data) v = 0.5 + 0.2 * rng.normal();
  Tensor x = Tensor::from_data({b, 2, 3, 32, 32}, data);
  OutputSpec spec{TaskId::SCD, 2, {0, 1, 2, 3}, 0, 0};
  auto meta = bench_meta(2, 3);
  NoGradGuard no_grad;
  for (auto _ : state) {
    benchmark::DoNotOptimize(model.forward(x, meta, spec));
  }
  state.SetItemsProcessed(state.iterations() * b);
}
BENCHMARK(BM_forward)->Arg(1)->Arg(8);

void BM_train_step(benchmark::State& state) {
  Model model(bench_config());
  Rng rng(3);
  std::int64_t b = 8;
  std::vector<double> data(static_cast<std::size_t>(b * 2 * 3 * 32 * 32));
  for (auto& v : data) v = 0.5 + 0.2 * rng.normal();
  Tensor x = Tensor::from_data({b, 2, 3, 32, 32}, data);
  std::vector<std::uint8_t> labels(static_cast<std::size_t>(b * 2 * 32 * 32));
  for (auto& v : labels) v = static_cast<std::uint8_t>(rng.uniform_int(4));
  OutputSpec spec{TaskId::SCD, 2, {0, 1, 2, 3}, 0, 0};
  auto meta = bench_meta(2, 3);
  LossConfig loss_cfg;
  AdamW opt;
  for (auto _ : state) {
    model.params().clear_grads();
    Tensor loss = multitask_loss(model.forward(x, meta, spec), labels, loss_cfg);
    backward(loss);
    opt.step(model.params(), 1e-3, 1e-3);
  }
  state.SetItemsProcessed(state.iterations() * b);
}
BENCHMARK(BM_train_step);

}  // namespace
