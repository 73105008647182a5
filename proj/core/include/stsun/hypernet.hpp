#pragma once

#include <optional>
#include <vector>

#include "stsun/attention.hpp"
#include "stsun/tensor.hpp"

namespace stsun {

/// Static configuration of one hyper-network branch.
/// use_cls implies a generated bias (the CLS summary feeds the bias head);
/// without it the branch is weight-only, as on every output-side mapping.
struct HyperBranchConfig {
  bool use_cls = true;
  bool use_positional = true;
  std::int64_t depth = 2;
  std::int64_t heads = 4;
  std::int64_t mlp_ratio = 4;
  std::int64_t width = 32;    // token width C_e
  std::int64_t out_dim = 32;  // columns of the generated weight
};

/// Trainable state of a branch: optional CLS token, pre-norm transformer
/// blocks with a closing LayerNorm, weight head and (iff use_cls) bias head.
/// The closing norm keeps head inputs O(1) whatever the raw token scale, so
/// the generated maps actually start near-isometric.
struct HyperBranch {
  HyperBranchConfig cfg;
  Tensor cls;  // [width], present iff use_cls
  std::vector<TransformerBlockParams> blocks;
  LayerNormParams final_norm;
  Tensor weight_head_w;  // [width x out_dim]
  Tensor weight_head_b;  // [out_dim]
  Tensor bias_head_w;    // [width x out_dim], present iff use_cls
  Tensor bias_head_b;    // [out_dim]
};

/// A (weight, optional bias) pair emitted by a branch. weight is
/// [token_count x out_dim]; the orientation is chosen at the call site.
struct GeneratedLinear {
  Tensor weight;
  Tensor bias;  // undefined handle when absent
  bool has_bias() const { return bias.defined(); }
};

/// Runs the branch on metadata tokens [n x width]: optionally prepend CLS,
/// optionally add positional encodings, apply the transformer blocks, then
/// map tokens to weight rows (and CLS to the bias). The weight rows are
/// scaled by 1/sqrt(n) so generated maps start near-isometric. Pure function
/// of (branch parameters, tokens).
GeneratedLinear generate(const HyperBranch& branch, const Tensor& meta_tokens);

/// x [m x n_in] -> x . W (+ bias). Input-side orientation.
Tensor apply_linear(const GeneratedLinear& map, const Tensor& x);

/// x [m x out_dim] -> x . W^T. Output-side orientation; the generated map has
/// no bias there (a variable-length bias cannot come from a fixed CLS head).
Tensor apply_linear_transposed(const GeneratedLinear& map, const Tensor& x);

}  // namespace stsun
