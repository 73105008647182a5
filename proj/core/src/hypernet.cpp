#include "stsun/hypernet.hpp"

#include <cmath>

#include "stsun/metadata.hpp"
#include "stsun/ops.hpp"

namespace stsun {

GeneratedLinear generate(const HyperBranch& branch, const Tensor& meta_tokens) {
  if (meta_tokens.rank() != 2 || meta_tokens.dim(1) != branch.cfg.width) {
    throw ShapeError("generate: tokens must be [n x width], got " +
                     shape_str(meta_tokens.shape()));
  }
  std::int64_t n = meta_tokens.dim(0);
  if (n < 1) throw ValidationError("generate: need at least one metadata token");

  Tensor tokens = meta_tokens;
  if (branch.cfg.use_cls) {
    tokens = concat({reshape(branch.cls, {1, branch.cfg.width}), tokens}, 0);
  }
  if (branch.cfg.use_positional) {
    tokens = add(tokens, sinusoidal_positional(tokens.dim(0), branch.cfg.width));
  }
  for (const auto& block : branch.blocks) {
    tokens = transformer_block(tokens, /*groups=*/1, block);
  }
  tokens = layernorm(tokens, branch.final_norm.gamma, branch.final_norm.beta);

  GeneratedLinear out;
  Tensor weight_tokens = tokens;
  if (branch.cfg.use_cls) {
    Tensor cls_out = slice(tokens, 0, 0, 1);
    weight_tokens = slice(tokens, 0, 1, n);
    out.bias = reshape(add_rowvec(matmul(cls_out, branch.bias_head_w), branch.bias_head_b),
                       {branch.cfg.out_dim});
  }
  Tensor w = add_rowvec(matmul(weight_tokens, branch.weight_head_w), branch.weight_head_b);
  // Near-isometric start: rows shrink with the fan-in of the generated map.
  out.weight = mul_scalar(w, 1.0 / std::sqrt(static_cast<double>(n)));
  return out;
}

Tensor apply_linear(const GeneratedLinear& map, const Tensor& x) {
  if (x.rank() != 2 || x.dim(1) != map.weight.dim(0)) {
    throw ShapeError("apply_linear: x " + shape_str(x.shape()) + " incompatible with weight " +
                     shape_str(map.weight.shape()));
  }
  Tensor y = matmul(x, map.weight);
  if (map.has_bias()) y = add_rowvec(y, map.bias);
  return y;
}

Tensor apply_linear_transposed(const GeneratedLinear& map, const Tensor& x) {
  if (x.rank() != 2 || x.dim(1) != map.weight.dim(1)) {
    throw ShapeError("apply_linear_transposed: x " + shape_str(x.shape()) +
                     " incompatible with weight " + shape_str(map.weight.shape()));
  }
  return matmul(x, transpose2d(map.weight));
}

}  // namespace stsun
