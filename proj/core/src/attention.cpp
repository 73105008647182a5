#include "stsun/attention.hpp"

#include <cmath>

#include "stsun/ops.hpp"

namespace stsun {

namespace {

/// [N x d] with N = groups * tokens -> [(groups*heads) x tokens x dk]
Tensor to_heads(const Tensor& x, std::int64_t groups, std::int64_t tokens, std::int64_t heads) {
  std::int64_t d = x.dim(1);
  std::int64_t dk = d / heads;
  Tensor y = reshape(x, {groups, tokens, heads, dk});
  y = permute(y, {0, 2, 1, 3});  // [groups, heads, tokens, dk]
  return reshape(y, {groups * heads, tokens, dk});
}

Tensor from_heads(const Tensor& x, std::int64_t groups, std::int64_t tokens, std::int64_t heads) {
  std::int64_t dk = x.dim(2);
  Tensor y = reshape(x, {groups, heads, tokens, dk});
  y = permute(y, {0, 2, 1, 3});  // [groups, tokens, heads, dk]
  return reshape(y, {groups * tokens, heads * dk});
}

}  // namespace

Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v) {
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2) {
    throw ShapeError("scaled_dot_attention: expected rank-2 inputs");
  }
  double scale = 1.0 / std::sqrt(static_cast<double>(q.dim(1)));
  Tensor scores = mul_scalar(matmul(q, transpose2d(k)), scale);
  return matmul(softmax_rows(scores), v);
}

Tensor grouped_attention(const Tensor& x, std::int64_t groups, const AttentionParams& p) {
  if (x.rank() != 2) throw ShapeError("grouped_attention: expected rank-2 input");
  std::int64_t n = x.dim(0);
  std::int64_t d = x.dim(1);
  if (groups < 1 || n % groups != 0) {
    throw ShapeError("grouped_attention: rows not divisible into groups");
  }
  if (d % p.heads != 0) throw ShapeError("grouped_attention: d_M not divisible by heads");
  std::int64_t tokens = n / groups;
  std::int64_t dk = d / p.heads;

  Tensor q3 = to_heads(matmul(x, p.wq), groups, tokens, p.heads);
  Tensor k3 = to_heads(matmul(x, p.wk), groups, tokens, p.heads);
  Tensor v3 = to_heads(matmul(x, p.wv), groups, tokens, p.heads);

  double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  Tensor scores = mul_scalar(bmm(q3, k3, /*transpose_b=*/true), scale);
  scores = reshape(scores, {groups * p.heads * tokens, tokens});
  scores = softmax_rows(scores);
  scores = reshape(scores, {groups * p.heads, tokens, tokens});
  Tensor out = bmm(scores, v3);
  return matmul(from_heads(out, groups, tokens, p.heads), p.wo);
}

WindowPartition make_window_partition(std::int64_t grid_h, std::int64_t grid_w,
                                      std::int64_t win_h, std::int64_t win_w,
                                      double stride_fraction) {
  if (grid_h < 1 || grid_w < 1) throw ValidationError("window partition: empty grid");
  if (win_h < 1 || win_w < 1) throw ValidationError("window partition: empty window");
  if (!(stride_fraction > 0.0 && stride_fraction <= 1.0)) {
    throw ValidationError("window partition: stride fraction must be in (0, 1]");
  }
  WindowPartition part;
  part.grid_h = grid_h;
  part.grid_w = grid_w;
  part.win_h = std::min(win_h, grid_h);
  part.win_w = std::min(win_w, grid_w);
  part.window_size = part.win_h * part.win_w;

  auto positions = [stride_fraction](std::int64_t grid, std::int64_t win) {
    std::int64_t stride =
        std::max<std::int64_t>(1, static_cast<std::int64_t>(static_cast<double>(win) * stride_fraction));
    std::vector<std::int64_t> pos;
    for (std::int64_t p = 0; p + win <= grid; p += stride) pos.push_back(p);
    if (pos.back() != grid - win) pos.push_back(grid - win);  // keep the edge covered
    return pos;
  };
  auto rows = positions(grid_h, part.win_h);
  auto cols = positions(grid_w, part.win_w);
  part.num_windows = static_cast<std::int64_t>(rows.size() * cols.size());

  std::vector<std::int64_t> cover(static_cast<std::size_t>(grid_h * grid_w), 0);
  part.gather_index.reserve(static_cast<std::size_t>(part.num_windows * part.window_size));
  for (auto r0 : rows) {
    for (auto c0 : cols) {
      for (std::int64_t r = 0; r < part.win_h; ++r) {
        for (std::int64_t c = 0; c < part.win_w; ++c) {
          std::int64_t cell = (r0 + r) * grid_w + (c0 + c);
          part.gather_index.push_back(cell);
          ++cover[static_cast<std::size_t>(cell)];
        }
      }
    }
  }
  part.cell_weight.resize(cover.size());
  for (std::size_t i = 0; i < cover.size(); ++i) {
    if (cover[i] == 0) throw ValidationError("window partition: uncovered cell");
    part.cell_weight[i] = 1.0 / static_cast<double>(cover[i]);
  }
  return part;
}

Tensor window_attention(const Tensor& x, std::int64_t frames, const WindowPartition& partition,
                        const AttentionParams& p) {
  std::int64_t cells = partition.grid_h * partition.grid_w;
  if (x.rank() != 2 || x.dim(0) != frames * cells) {
    throw ShapeError("window_attention: input rows must equal frames * grid cells");
  }
  // Extend the per-grid indices across frames; windows stay inside one frame.
  std::size_t per_frame = partition.gather_index.size();
  std::vector<std::int64_t> idx(per_frame * static_cast<std::size_t>(frames));
  std::vector<double> weights(idx.size());
  for (std::int64_t f = 0; f < frames; ++f) {
    for (std::size_t i = 0; i < per_frame; ++i) {
      std::int64_t cell = partition.gather_index[i];
      idx[static_cast<std::size_t>(f) * per_frame + i] = f * cells + cell;
      weights[static_cast<std::size_t>(f) * per_frame + i] =
          partition.cell_weight[static_cast<std::size_t>(cell)];
    }
  }
  Tensor gathered = gather_rows(x, idx);
  Tensor attended = grouped_attention(gathered, frames * partition.num_windows, p);
  // Each contribution is pre-scaled by the destination cell's overlap weight,
  // then summed in fixed window order.
  Tensor weighted = scale_rows(attended, std::move(weights));
  return scatter_add_rows(weighted, std::move(idx), frames * cells);
}

Tensor mlp_forward(const Tensor& x, const MlpParams& p) {
  Tensor h = gelu(add_rowvec(matmul(x, p.w1), p.b1));
  return add_rowvec(matmul(h, p.w2), p.b2);
}

Tensor lgwa_block(const Tensor& x, std::int64_t frames, std::int64_t grid_h, std::int64_t grid_w,
                  const LgwaBlockParams& p, const WindowConfig& windows) {
  auto hor = make_window_partition(grid_h, grid_w, windows.horizontal[0], windows.horizontal[1],
                                   windows.stride_fraction);
  auto ver = make_window_partition(grid_h, grid_w, windows.vertical[0], windows.vertical[1],
                                   windows.stride_fraction);
  auto sq = make_window_partition(grid_h, grid_w, windows.square[0], windows.square[1],
                                  windows.stride_fraction);

  Tensor y = x;
  y = add(y, window_attention(layernorm(y, p.norms[0].gamma, p.norms[0].beta), frames, hor,
                              p.attn[0]));
  y = add(y, window_attention(layernorm(y, p.norms[1].gamma, p.norms[1].beta), frames, ver,
                              p.attn[1]));
  y = add(y, window_attention(layernorm(y, p.norms[2].gamma, p.norms[2].beta), frames, sq,
                              p.attn[2]));
  y = add(y, grouped_attention(layernorm(y, p.norms[3].gamma, p.norms[3].beta), frames,
                               p.attn[3]));
  y = add(y, mlp_forward(layernorm(y, p.norms[4].gamma, p.norms[4].beta), p.mlp));
  return y;
}

Tensor transformer_block(const Tensor& x, std::int64_t groups, const TransformerBlockParams& p) {
  Tensor y = add(x, grouped_attention(layernorm(x, p.ln1.gamma, p.ln1.beta), groups, p.attn));
  return add(y, mlp_forward(layernorm(y, p.ln2.gamma, p.ln2.beta), p.mlp));
}

}  // namespace stsun
