#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "stsun/tensor.hpp"

namespace stsun {

struct AttentionParams {
  Tensor wq, wk, wv, wo;  // [d_M x d_M] each; d_k = d_v = d_M / heads
  std::int64_t heads = 1;
};

struct LayerNormParams {
  Tensor gamma, beta;  // [d_M]
};

struct MlpParams {
  Tensor w1, b1;  // [d_M x hidden], [hidden]
  Tensor w2, b2;  // [hidden x d_M], [d_M]
};

struct TransformerBlockParams {
  LayerNormParams ln1, ln2;
  AttentionParams attn;
  MlpParams mlp;
};

/// One Local Global Block: three local window attentions (horizontal,
/// vertical, square), one global attention, one MLP; every sub-layer is
/// pre-norm residual.
struct LgwaBlockParams {
  std::array<LayerNormParams, 5> norms;
  std::array<AttentionParams, 4> attn;  // horizontal, vertical, square, global
  MlpParams mlp;
};

/// Window shapes and overlap stride used on the unified grid.
struct WindowConfig {
  std::array<std::int64_t, 2> horizontal{2, 8};
  std::array<std::int64_t, 2> vertical{8, 2};
  std::array<std::int64_t, 2> square{4, 4};
  double stride_fraction = 0.5;  // stride = max(1, extent * fraction)
};

/// Overlapping tiling of an H x W grid. Window positions step by the stride
/// and always include the last aligned position, so every cell is covered.
/// Cells under several windows get averaged with weight 1/cover.
struct WindowPartition {
  std::int64_t grid_h = 0, grid_w = 0;
  std::int64_t win_h = 0, win_w = 0;  // clamped to the grid
  std::int64_t num_windows = 0;
  std::int64_t window_size = 0;            // win_h * win_w
  std::vector<std::int64_t> gather_index;  // [num_windows * window_size] -> grid cell
  std::vector<double> cell_weight;         // [grid cells] = 1 / cover count
};

WindowPartition make_window_partition(std::int64_t grid_h, std::int64_t grid_w,
                                      std::int64_t win_h, std::int64_t win_w,
                                      double stride_fraction);

/// softmax(Q K^T / sqrt(d_k)) V for single-group 2-D inputs.
Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v);

/// Multi-head attention applied independently to `groups` equal-sized token
/// groups stored contiguously in x [(groups * tokens) x d_M].
Tensor grouped_attention(const Tensor& x, std::int64_t groups, const AttentionParams& p);

/// Attention inside each window of the partition, overlap-averaged back onto
/// the grid. x is [(frames * H * W) x d_M]; windows never straddle frames.
Tensor window_attention(const Tensor& x, std::int64_t frames, const WindowPartition& partition,
                        const AttentionParams& p);

/// Pre-norm residual: 3 local window attentions + global attention + MLP.
Tensor lgwa_block(const Tensor& x, std::int64_t frames, std::int64_t grid_h, std::int64_t grid_w,
                  const LgwaBlockParams& p, const WindowConfig& windows);

/// Standard pre-norm transformer block (global attention + MLP) over
/// `groups` independent token groups.
Tensor transformer_block(const Tensor& x, std::int64_t groups, const TransformerBlockParams& p);

Tensor mlp_forward(const Tensor& x, const MlpParams& p);

}  // namespace stsun
