#pragma once

#include <vector>

#include "stsun/tensor.hpp"

namespace stsun {

// ---- elementwise -----------------------------------------------------------
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor add_scalar(const Tensor& a, double c);
Tensor mul_scalar(const Tensor& a, double c);
Tensor sigmoid(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor gelu(const Tensor& a);

// ---- reductions ------------------------------------------------------------
Tensor sum(const Tensor& a);   // -> shape [1]
Tensor mean(const Tensor& a);  // -> shape [1]

// ---- shape -----------------------------------------------------------------
Tensor reshape(const Tensor& a, Shape shape);
Tensor permute(const Tensor& a, const std::vector<std::int64_t>& axes);
Tensor transpose2d(const Tensor& a);
Tensor concat(const std::vector<Tensor>& parts, std::int64_t axis);
std::vector<Tensor> split(const Tensor& a, std::int64_t axis, const std::vector<std::int64_t>& sizes);
Tensor slice(const Tensor& a, std::int64_t axis, std::int64_t start, std::int64_t len);

// ---- index remaps ----------------------------------------------------------
/// out.flat[i] = a.flat[index[i]]. Duplicates allowed; backward scatter-adds.
Tensor gather_flat(const Tensor& a, std::vector<std::int64_t> index, Shape out_shape);
/// out[r, :] = a[index[r], :] for 2-D a.
Tensor gather_rows(const Tensor& a, std::vector<std::int64_t> index);
/// out[index[r], :] += a[r, :]; rows not hit stay zero. Deterministic order.
Tensor scatter_add_rows(const Tensor& a, std::vector<std::int64_t> index, std::int64_t out_rows);
/// Row r scaled by the constant weights[r] (no gradient into weights).
Tensor scale_rows(const Tensor& a, std::vector<double> weights);
/// x[..., j] + bias[j] broadcast over leading axes.
Tensor add_rowvec(const Tensor& a, const Tensor& bias);

// ---- linear algebra --------------------------------------------------------
Tensor matmul(const Tensor& a, const Tensor& b);  // [m,k]x[k,n] -> [m,n]
/// Batched matmul over the leading axis: [B,m,k]x[B,k,n] -> [B,m,n].
/// With transpose_b, b is [B,n,k] and multiplied as b^T per batch.
Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b = false);

// ---- fused nn primitives ---------------------------------------------------
/// Row-wise softmax of a 2-D tensor with per-row max subtraction.
Tensor softmax_rows(const Tensor& a);
/// Zero-mean/unit-variance over the last axis (population variance,
/// epsilon inside the square root), then gamma * xhat + beta.
Tensor layernorm(const Tensor& a, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

}  // namespace stsun
