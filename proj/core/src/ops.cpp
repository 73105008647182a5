#include "stsun/ops.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace stsun {

namespace {

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

void require(bool cond, const std::string& msg) {
  if (!cond) throw ShapeError(msg);
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

double* grad_of(detail::Node& n, std::size_t parent) {
  auto& p = *n.parents[parent];
  return p.requires_grad && !p.grad.empty() ? p.grad.data() : nullptr;
}

const std::vector<double>& pdata(detail::Node& n, std::size_t parent) {
  return n.parents[parent]->data;
}

// C[m,n] += A[m,k] * B[k,n]
void mm_nn(const double* a, const double* b, double* c, std::int64_t m, std::int64_t k,
           std::int64_t n) {
  for (std::int64_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    const double* arow = a + i * k;
    for (std::int64_t kk = 0; kk < k; ++kk) {
      double aik = arow[kk];
      const double* brow = b + kk * n;
      for (std::int64_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
    }
  }
}

// C[m,k] += A[m,n] * B[k,n]^T  (rows of A dotted with rows of B)
void mm_nt(const double* a, const double* b, double* c, std::int64_t m, std::int64_t n,
           std::int64_t k) {
  for (std::int64_t i = 0; i < m; ++i) {
    const double* arow = a + i * n;
    double* crow = c + i * k;
    for (std::int64_t kk = 0; kk < k; ++kk) {
      const double* brow = b + kk * n;
      double acc = 0.0;
      for (std::int64_t j = 0; j < n; ++j) acc += arow[j] * brow[j];
      crow[kk] += acc;
    }
  }
}

// C[k,n] += A[m,k]^T * B[m,n]
void mm_tn(const double* a, const double* b, double* c, std::int64_t m, std::int64_t k,
           std::int64_t n) {
  for (std::int64_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    const double* brow = b + i * n;
    for (std::int64_t kk = 0; kk < k; ++kk) {
      double aik = arow[kk];
      double* crow = c + kk * n;
      for (std::int64_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
    }
  }
}

Tensor unary_op(const Tensor& a, const char* name, double (*fwd)(double), double (*dfd)(double)) {
  std::vector<double> out(a.data().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(a.data()[i]);
  return Tensor::from_op(
      a.shape(), std::move(out), {a},
      [dfd](detail::Node& n) {
        if (double* ga = grad_of(n, 0)) {
          const auto& x = pdata(n, 0);
          for (std::size_t i = 0; i < x.size(); ++i) ga[i] += n.grad[i] * dfd(x[i]);
        }
      },
      name);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.data().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return Tensor::from_op(
      a.shape(), std::move(out), {a, b},
      [](detail::Node& n) {
        if (double* ga = grad_of(n, 0))
          for (std::size_t i = 0; i < n.grad.size(); ++i) ga[i] += n.grad[i];
        if (double* gb = grad_of(n, 1))
          for (std::size_t i = 0; i < n.grad.size(); ++i) gb[i] += n.grad[i];
      },
      "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.data().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  return Tensor::from_op(
      a.shape(), std::move(out), {a, b},
      [](detail::Node& n) {
        if (double* ga = grad_of(n, 0))
          for (std::size_t i = 0; i < n.grad.size(); ++i) ga[i] += n.grad[i];
        if (double* gb = grad_of(n, 1))
          for (std::size_t i = 0; i < n.grad.size(); ++i) gb[i] -= n.grad[i];
      },
      "sub");
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.data().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return Tensor::from_op(
      a.shape(), std::move(out), {a, b},
      [](detail::Node& n) {
        const auto& x = pdata(n, 0);
        const auto& y = pdata(n, 1);
        if (double* ga = grad_of(n, 0))
          for (std::size_t i = 0; i < n.grad.size(); ++i) ga[i] += n.grad[i] * y[i];
        if (double* gb = grad_of(n, 1))
          for (std::size_t i = 0; i < n.grad.size(); ++i) gb[i] += n.grad[i] * x[i];
      },
      "mul");
}

Tensor div(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "div");
  std::vector<double> out(a.data().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] / b.data()[i];
  return Tensor::from_op(
      a.shape(), std::move(out), {a, b},
      [](detail::Node& n) {
        const auto& x = pdata(n, 0);
        const auto& y = pdata(n, 1);
        if (double* ga = grad_of(n, 0))
          for (std::size_t i = 0; i < n.grad.size(); ++i) ga[i] += n.grad[i] / y[i];
        if (double* gb = grad_of(n, 1))
          for (std::size_t i = 0; i < n.grad.size(); ++i)
            gb[i] -= n.grad[i] * x[i] / (y[i] * y[i]);
      },
      "div");
}

Tensor neg(const Tensor& a) {
  std::vector<double> out(a.data().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = -a.data()[i];
  return Tensor::from_op(
      a.shape(), std::move(out), {a},
      [](detail::Node& n) {
        if (double* ga = grad_of(n, 0))
          for (std::size_t i = 0; i < n.grad.size(); ++i) ga[i] -= n.grad[i];
      },
      "neg");
}

Tensor add_scalar(const Tensor& a, double c) {
  std::vector<double> out(a.data().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + c;
  return Tensor::from_op(
      a.shape(), std::move(out), {a},
      [](detail::Node& n) {
        if (double* ga = grad_of(n, 0))
          for (std::size_t i = 0; i < n.grad.size(); ++i) ga[i] += n.grad[i];
      },
      "add_scalar");
}

Tensor mul_scalar(const Tensor& a, double c) {
  std::vector<double> out(a.data().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * c;
  return Tensor::from_op(
      a.shape(), std::move(out), {a},
      [c](detail::Node& n) {
        if (double* ga = grad_of(n, 0))
          for (std::size_t i = 0; i < n.grad.size(); ++i) ga[i] += n.grad[i] * c;
      },
      "mul_scalar");
}

Tensor sigmoid(const Tensor& a) {
  std::vector<double> out(a.data().size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    double x = a.data()[i];
    out[i] = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  }
  auto saved = out;
  return Tensor::from_op(
      a.shape(), std::move(out), {a},
      [saved = std::move(saved)](detail::Node& n) {
        if (double* ga = grad_of(n, 0))
          for (std::size_t i = 0; i < n.grad.size(); ++i)
            ga[i] += n.grad[i] * saved[i] * (1.0 - saved[i]);
      },
      "sigmoid");
}

Tensor softplus(const Tensor& a) {
  std::vector<double> out(a.data().size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    double x = a.data()[i];
    out[i] = std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
  }
  return Tensor::from_op(
      a.shape(), std::move(out), {a},
      [](detail::Node& n) {
        if (double* ga = grad_of(n, 0)) {
          const auto& x = pdata(n, 0);
          for (std::size_t i = 0; i < x.size(); ++i) {
            double s = x[i] >= 0.0 ? 1.0 / (1.0 + std::exp(-x[i]))
                                   : std::exp(x[i]) / (1.0 + std::exp(x[i]));
            ga[i] += n.grad[i] * s;
          }
        }
      },
      "softplus");
}

Tensor relu(const Tensor& a) {
  return unary_op(
      a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& a) {
  return unary_op(
      a, "gelu", [](double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); },
      [](double x) {
        return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
      });
}

Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  return Tensor::from_op(
      {1}, {acc}, {a},
      [](detail::Node& n) {
        if (double* ga = grad_of(n, 0)) {
          double g = n.grad[0];
          for (std::size_t i = 0; i < n.parents[0]->data.size(); ++i) ga[i] += g;
        }
      },
      "sum");
}

Tensor mean(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  double inv = 1.0 / static_cast<double>(a.numel());
  return Tensor::from_op(
      {1}, {acc * inv}, {a},
      [inv](detail::Node& n) {
        if (double* ga = grad_of(n, 0)) {
          double g = n.grad[0] * inv;
          for (std::size_t i = 0; i < n.parents[0]->data.size(); ++i) ga[i] += g;
        }
      },
      "mean");
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw ShapeError("reshape: element count mismatch " + shape_str(a.shape()) + " -> " +
                     shape_str(shape));
  }
  return Tensor::from_op(
      std::move(shape), a.data(), {a},
      [](detail::Node& n) {
        if (double* ga = grad_of(n, 0))
          for (std::size_t i = 0; i < n.grad.size(); ++i) ga[i] += n.grad[i];
      },
      "reshape");
}

Tensor permute(const Tensor& a, const std::vector<std::int64_t>& axes) {
  const auto& s = a.shape();
  auto r = static_cast<std::size_t>(a.rank());
  require(axes.size() == r, "permute: axes size must equal rank");
  std::vector<bool> used(r, false);
  Shape out_shape(r);
  for (std::size_t i = 0; i < r; ++i) {
    auto ax = axes[i];
    require(ax >= 0 && ax < static_cast<std::int64_t>(r) && !used[static_cast<std::size_t>(ax)],
            "permute: axes must be a permutation of 0..rank-1");
    used[static_cast<std::size_t>(ax)] = true;
    out_shape[i] = s[static_cast<std::size_t>(ax)];
  }
  // strides of the input
  std::vector<std::int64_t> in_stride(r, 1);
  for (std::size_t i = r - 1; i > 0; --i) in_stride[i - 1] = in_stride[i] * s[i];
  std::vector<std::int64_t> out_stride_src(r);  // input stride per output axis
  for (std::size_t i = 0; i < r; ++i) out_stride_src[i] = in_stride[static_cast<std::size_t>(axes[i])];

  auto n = static_cast<std::size_t>(a.numel());
  auto index = std::make_shared<std::vector<std::int64_t>>(n);
  std::vector<std::int64_t> coord(r, 0);
  for (std::size_t flat = 0; flat < n; ++flat) {
    std::int64_t src = 0;
    for (std::size_t i = 0; i < r; ++i) src += coord[i] * out_stride_src[i];
    (*index)[flat] = src;
    for (std::size_t i = r; i-- > 0;) {
      if (++coord[i] < out_shape[i]) break;
      coord[i] = 0;
    }
  }
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = a.data()[static_cast<std::size_t>((*index)[i])];
  return Tensor::from_op(
      std::move(out_shape), std::move(out), {a},
      [index](detail::Node& n) {
        if (double* ga = grad_of(n, 0))
          for (std::size_t i = 0; i < n.grad.size(); ++i)
            ga[static_cast<std::size_t>((*index)[i])] += n.grad[i];
      },
      "permute");
}

Tensor transpose2d(const Tensor& a) {
  require(a.rank() == 2, "transpose2d: expected rank 2");
  return permute(a, {1, 0});
}

Tensor concat(const std::vector<Tensor>& parts, std::int64_t axis) {
  require(!parts.empty(), "concat: no inputs");
  const auto& s0 = parts[0].shape();
  auto r = static_cast<std::int64_t>(s0.size());
  require(axis >= 0 && axis < r, "concat: axis out of range");
  Shape out_shape = s0;
  std::int64_t axis_total = 0;
  for (const auto& p : parts) {
    require(p.rank() == r, "concat: rank mismatch");
    for (std::int64_t i = 0; i < r; ++i) {
      if (i != axis) {
        require(p.dim(i) == s0[static_cast<std::size_t>(i)], "concat: extent mismatch off-axis");
      }
    }
    axis_total += p.dim(axis);
  }
  out_shape[static_cast<std::size_t>(axis)] = axis_total;

  std::int64_t outer = 1, inner = 1;
  for (std::int64_t i = 0; i < axis; ++i) outer *= s0[static_cast<std::size_t>(i)];
  for (std::int64_t i = axis + 1; i < r; ++i) inner *= s0[static_cast<std::size_t>(i)];

  std::vector<double> out(static_cast<std::size_t>(outer * axis_total * inner));
  std::vector<std::int64_t> offsets(parts.size());
  std::int64_t off = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    offsets[p] = off;
    std::int64_t block = parts[p].dim(axis) * inner;
    const auto& src = parts[p].data();
    for (std::int64_t o = 0; o < outer; ++o) {
      std::copy(src.begin() + o * block, src.begin() + (o + 1) * block,
                out.begin() + o * axis_total * inner + off * inner);
    }
    off += parts[p].dim(axis);
  }
  std::vector<Tensor> parents(parts.begin(), parts.end());
  std::vector<std::int64_t> axis_dims(parts.size());
  for (std::size_t p = 0; p < parts.size(); ++p) axis_dims[p] = parts[p].dim(axis);
  return Tensor::from_op(
      std::move(out_shape), std::move(out), std::move(parents),
      [outer, inner, axis_total, offsets, axis_dims](detail::Node& n) {
        for (std::size_t p = 0; p < n.parents.size(); ++p) {
          double* gp = grad_of(n, p);
          if (!gp) continue;
          std::int64_t block = axis_dims[p] * inner;
          for (std::int64_t o = 0; o < outer; ++o) {
            const double* g = n.grad.data() + o * axis_total * inner + offsets[p] * inner;
            double* dst = gp + o * block;
            for (std::int64_t i = 0; i < block; ++i) dst[i] += g[i];
          }
        }
      },
      "concat");
}

Tensor slice(const Tensor& a, std::int64_t axis, std::int64_t start, std::int64_t len) {
  const auto& s = a.shape();
  auto r = static_cast<std::int64_t>(s.size());
  require(axis >= 0 && axis < r, "slice: axis out of range");
  require(start >= 0 && len >= 1 && start + len <= s[static_cast<std::size_t>(axis)],
          "slice: range out of bounds");
  Shape out_shape = s;
  out_shape[static_cast<std::size_t>(axis)] = len;
  std::int64_t outer = 1, inner = 1;
  for (std::int64_t i = 0; i < axis; ++i) outer *= s[static_cast<std::size_t>(i)];
  for (std::int64_t i = axis + 1; i < r; ++i) inner *= s[static_cast<std::size_t>(i)];
  std::int64_t axis_extent = s[static_cast<std::size_t>(axis)];

  std::vector<double> out(static_cast<std::size_t>(outer * len * inner));
  for (std::int64_t o = 0; o < outer; ++o) {
    const double* src = a.data().data() + (o * axis_extent + start) * inner;
    std::copy(src, src + len * inner, out.begin() + o * len * inner);
  }
  return Tensor::from_op(
      std::move(out_shape), std::move(out), {a},
      [outer, inner, axis_extent, start, len](detail::Node& n) {
        if (double* ga = grad_of(n, 0)) {
          for (std::int64_t o = 0; o < outer; ++o) {
            const double* g = n.grad.data() + o * len * inner;
            double* dst = ga + (o * axis_extent + start) * inner;
            for (std::int64_t i = 0; i < len * inner; ++i) dst[i] += g[i];
          }
        }
      },
      "slice");
}

std::vector<Tensor> split(const Tensor& a, std::int64_t axis,
                          const std::vector<std::int64_t>& sizes) {
  std::int64_t total = 0;
  for (auto sz : sizes) total += sz;
  require(axis >= 0 && axis < a.rank(), "split: axis out of range");
  require(total == a.dim(axis), "split: sizes must cover the axis extent");
  std::vector<Tensor> out;
  std::int64_t start = 0;
  for (auto sz : sizes) {
    out.push_back(slice(a, axis, start, sz));
    start += sz;
  }
  return out;
}

Tensor gather_flat(const Tensor& a, std::vector<std::int64_t> index, Shape out_shape) {
  require(shape_numel(out_shape) == static_cast<std::int64_t>(index.size()),
          "gather_flat: index length must match output shape");
  auto n = a.numel();
  std::vector<double> out(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    require(index[i] >= 0 && index[i] < n, "gather_flat: index out of range");
    out[i] = a.data()[static_cast<std::size_t>(index[i])];
  }
  auto idx = std::make_shared<std::vector<std::int64_t>>(std::move(index));
  return Tensor::from_op(
      std::move(out_shape), std::move(out), {a},
      [idx](detail::Node& n) {
        if (double* ga = grad_of(n, 0))
          for (std::size_t i = 0; i < n.grad.size(); ++i)
            ga[static_cast<std::size_t>((*idx)[i])] += n.grad[i];
      },
      "gather_flat");
}

Tensor gather_rows(const Tensor& a, std::vector<std::int64_t> index) {
  require(a.rank() == 2, "gather_rows: expected rank 2");
  std::int64_t rows = a.dim(0), cols = a.dim(1);
  std::vector<double> out(index.size() * static_cast<std::size_t>(cols));
  for (std::size_t r = 0; r < index.size(); ++r) {
    require(index[r] >= 0 && index[r] < rows, "gather_rows: row index out of range");
    const double* src = a.data().data() + index[r] * cols;
    std::copy(src, src + cols, out.begin() + r * static_cast<std::size_t>(cols));
  }
  Shape out_shape{static_cast<std::int64_t>(index.size()), cols};
  auto idx = std::make_shared<std::vector<std::int64_t>>(std::move(index));
  return Tensor::from_op(
      std::move(out_shape), std::move(out), {a},
      [idx, cols](detail::Node& n) {
        if (double* ga = grad_of(n, 0)) {
          for (std::size_t r = 0; r < idx->size(); ++r) {
            const double* g = n.grad.data() + r * static_cast<std::size_t>(cols);
            double* dst = ga + (*idx)[r] * cols;
            for (std::int64_t j = 0; j < cols; ++j) dst[j] += g[j];
          }
        }
      },
      "gather_rows");
}

Tensor scatter_add_rows(const Tensor& a, std::vector<std::int64_t> index, std::int64_t out_rows) {
  require(a.rank() == 2, "scatter_add_rows: expected rank 2");
  require(static_cast<std::int64_t>(index.size()) == a.dim(0),
          "scatter_add_rows: one index per input row");
  std::int64_t cols = a.dim(1);
  std::vector<double> out(static_cast<std::size_t>(out_rows * cols), 0.0);
  for (std::size_t r = 0; r < index.size(); ++r) {
    require(index[r] >= 0 && index[r] < out_rows, "scatter_add_rows: index out of range");
    const double* src = a.data().data() + r * static_cast<std::size_t>(cols);
    double* dst = out.data() + index[r] * cols;
    for (std::int64_t j = 0; j < cols; ++j) dst[j] += src[j];
  }
  auto idx = std::make_shared<std::vector<std::int64_t>>(std::move(index));
  return Tensor::from_op(
      Shape{out_rows, cols}, std::move(out), {a},
      [idx, cols](detail::Node& n) {
        if (double* ga = grad_of(n, 0)) {
          for (std::size_t r = 0; r < idx->size(); ++r) {
            const double* g = n.grad.data() + (*idx)[r] * cols;
            double* dst = ga + r * static_cast<std::size_t>(cols);
            for (std::int64_t j = 0; j < cols; ++j) dst[j] += g[j];
          }
        }
      },
      "scatter_add_rows");
}

Tensor scale_rows(const Tensor& a, std::vector<double> weights) {
  require(a.rank() == 2, "scale_rows: expected rank 2");
  require(static_cast<std::int64_t>(weights.size()) == a.dim(0),
          "scale_rows: one weight per row");
  std::int64_t cols = a.dim(1);
  std::vector<double> out(a.data().size());
  for (std::size_t r = 0; r < weights.size(); ++r) {
    const double* src = a.data().data() + r * static_cast<std::size_t>(cols);
    double* dst = out.data() + r * static_cast<std::size_t>(cols);
    for (std::int64_t j = 0; j < cols; ++j) dst[j] = src[j] * weights[r];
  }
  auto w = std::make_shared<std::vector<double>>(std::move(weights));
  return Tensor::from_op(
      a.shape(), std::move(out), {a},
      [w, cols](detail::Node& n) {
        if (double* ga = grad_of(n, 0)) {
          for (std::size_t r = 0; r < w->size(); ++r) {
            const double* g = n.grad.data() + r * static_cast<std::size_t>(cols);
            double* dst = ga + r * static_cast<std::size_t>(cols);
            for (std::int64_t j = 0; j < cols; ++j) dst[j] += g[j] * (*w)[r];
          }
        }
      },
      "scale_rows");
}

Tensor add_rowvec(const Tensor& a, const Tensor& bias) {
  require(bias.rank() == 1, "add_rowvec: bias must be rank 1");
  std::int64_t cols = bias.dim(0);
  require(a.rank() >= 1 && a.dim(a.rank() - 1) == cols,
          "add_rowvec: last extent must match bias length");
  std::int64_t rows = a.numel() / cols;
  std::vector<double> out(a.data().size());
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* src = a.data().data() + r * cols;
    double* dst = out.data() + r * cols;
    for (std::int64_t j = 0; j < cols; ++j) dst[j] = src[j] + bias.data()[static_cast<std::size_t>(j)];
  }
  return Tensor::from_op(
      a.shape(), std::move(out), {a, bias},
      [rows, cols](detail::Node& n) {
        if (double* ga = grad_of(n, 0))
          for (std::size_t i = 0; i < n.grad.size(); ++i) ga[i] += n.grad[i];
        if (double* gb = grad_of(n, 1)) {
          for (std::int64_t r = 0; r < rows; ++r) {
            const double* g = n.grad.data() + r * cols;
            for (std::int64_t j = 0; j < cols; ++j) gb[j] += g[j];
          }
        }
      },
      "add_rowvec");
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.rank() == 2 && b.rank() == 2, "matmul: expected rank-2 operands");
  std::int64_t m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
  if (k != k2) {
    throw ShapeError("matmul: inner extents differ " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  std::vector<double> out(static_cast<std::size_t>(m * n), 0.0);
  mm_nn(a.data().data(), b.data().data(), out.data(), m, k, n);
  return Tensor::from_op(
      Shape{m, n}, std::move(out), {a, b},
      [m, k, n](detail::Node& nd) {
        const auto& av = pdata(nd, 0);
        const auto& bv = pdata(nd, 1);
        if (double* ga = grad_of(nd, 0)) mm_nt(nd.grad.data(), bv.data(), ga, m, n, k);
        if (double* gb = grad_of(nd, 1)) mm_tn(av.data(), nd.grad.data(), gb, m, k, n);
      },
      "matmul");
}

Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b) {
  require(a.rank() == 3 && b.rank() == 3, "bmm: expected rank-3 operands");
  std::int64_t batch = a.dim(0), m = a.dim(1), k = a.dim(2);
  require(b.dim(0) == batch, "bmm: batch extents differ");
  std::int64_t n;
  if (!transpose_b) {
    require(b.dim(1) == k, "bmm: inner extents differ");
    n = b.dim(2);
  } else {
    require(b.dim(2) == k, "bmm: inner extents differ (transposed)");
    n = b.dim(1);
  }
  std::vector<double> out(static_cast<std::size_t>(batch * m * n), 0.0);
  for (std::int64_t bt = 0; bt < batch; ++bt) {
    const double* ap = a.data().data() + bt * m * k;
    const double* bp = b.data().data() + bt * (transpose_b ? n * k : k * n);
    double* cp = out.data() + bt * m * n;
    if (!transpose_b) {
      mm_nn(ap, bp, cp, m, k, n);
    } else {
      mm_nt(ap, bp, cp, m, k, n);
    }
  }
  return Tensor::from_op(
      Shape{batch, m, n}, std::move(out), {a, b},
      [batch, m, k, n, transpose_b](detail::Node& nd) {
        const auto& av = pdata(nd, 0);
        const auto& bv = pdata(nd, 1);
        double* ga = grad_of(nd, 0);
        double* gb = grad_of(nd, 1);
        for (std::int64_t bt = 0; bt < batch; ++bt) {
          const double* ap = av.data() + bt * m * k;
          const double* bp = bv.data() + bt * (transpose_b ? n * k : k * n);
          const double* g = nd.grad.data() + bt * m * n;
          if (!transpose_b) {
            // z = a.b : da = g.b^T ; db = a^T.g
            if (ga) mm_nt(g, bp, ga + bt * m * k, m, n, k);
            if (gb) mm_tn(ap, g, gb + bt * k * n, m, k, n);
          } else {
            // z = a.b^T : da = g.b ; db = g^T.a
            if (ga) mm_nn(g, bp, ga + bt * m * k, m, n, k);
            if (gb) mm_tn(g, ap, gb + bt * n * k, m, n, k);
          }
        }
      },
      "bmm");
}

Tensor softmax_rows(const Tensor& a) {
  require(a.rank() == 2, "softmax_rows: expected rank 2");
  std::int64_t rows = a.dim(0), cols = a.dim(1);
  std::vector<double> out(a.data().size());
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* src = a.data().data() + r * cols;
    double* dst = out.data() + r * cols;
    double mx = src[0];
    for (std::int64_t j = 1; j < cols; ++j) mx = std::max(mx, src[j]);
    double denom = 0.0;
    for (std::int64_t j = 0; j < cols; ++j) {
      dst[j] = std::exp(src[j] - mx);
      denom += dst[j];
    }
    for (std::int64_t j = 0; j < cols; ++j) dst[j] /= denom;
  }
  auto saved = std::make_shared<std::vector<double>>(out);
  return Tensor::from_op(
      a.shape(), std::move(out), {a},
      [saved, rows, cols](detail::Node& n) {
        if (double* ga = grad_of(n, 0)) {
          for (std::int64_t r = 0; r < rows; ++r) {
            const double* y = saved->data() + r * cols;
            const double* g = n.grad.data() + r * cols;
            double dot = 0.0;
            for (std::int64_t j = 0; j < cols; ++j) dot += g[j] * y[j];
            double* dst = ga + r * cols;
            for (std::int64_t j = 0; j < cols; ++j) dst[j] += (g[j] - dot) * y[j];
          }
        }
      },
      "softmax_rows");
}

Tensor layernorm(const Tensor& a, const Tensor& gamma, const Tensor& beta, double eps) {
  require(gamma.rank() == 1 && beta.rank() == 1, "layernorm: gamma/beta must be rank 1");
  std::int64_t d = gamma.dim(0);
  require(beta.dim(0) == d, "layernorm: gamma/beta length mismatch");
  require(a.rank() >= 1 && a.dim(a.rank() - 1) == d,
          "layernorm: last extent must match gamma length");
  std::int64_t rows = a.numel() / d;

  std::vector<double> out(a.data().size());
  auto xhat = std::make_shared<std::vector<double>>(a.data().size());
  auto inv_std = std::make_shared<std::vector<double>>(static_cast<std::size_t>(rows));
  const double* g = gamma.data().data();
  const double* bta = beta.data().data();
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* src = a.data().data() + r * d;
    double mu = 0.0;
    for (std::int64_t j = 0; j < d; ++j) mu += src[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::int64_t j = 0; j < d; ++j) {
      double c = src[j] - mu;
      var += c * c;
    }
    var /= static_cast<double>(d);
    double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[static_cast<std::size_t>(r)] = is;
    double* xh = xhat->data() + r * d;
    double* dst = out.data() + r * d;
    for (std::int64_t j = 0; j < d; ++j) {
      xh[j] = (src[j] - mu) * is;
      dst[j] = g[j] * xh[j] + bta[j];
    }
  }
  return Tensor::from_op(
      a.shape(), std::move(out), {a, gamma, beta},
      [xhat, inv_std, rows, d](detail::Node& n) {
        const auto& gam = pdata(n, 1);
        double* ga = grad_of(n, 0);
        double* gg = grad_of(n, 1);
        double* gb = grad_of(n, 2);
        for (std::int64_t r = 0; r < rows; ++r) {
          const double* xh = xhat->data() + r * d;
          const double* gy = n.grad.data() + r * d;
          if (gg || gb) {
            for (std::int64_t j = 0; j < d; ++j) {
              if (gg) gg[j] += gy[j] * xh[j];
              if (gb) gb[j] += gy[j];
            }
          }
          if (ga) {
            double m1 = 0.0, m2 = 0.0;  // mean(dy*g), mean(dy*g*xhat)
            for (std::int64_t j = 0; j < d; ++j) {
              double t = gy[j] * gam[static_cast<std::size_t>(j)];
              m1 += t;
              m2 += t * xh[j];
            }
            m1 /= static_cast<double>(d);
            m2 /= static_cast<double>(d);
            double is = (*inv_std)[static_cast<std::size_t>(r)];
            double* dst = ga + r * d;
            for (std::int64_t j = 0; j < d; ++j) {
              double t = gy[j] * gam[static_cast<std::size_t>(j)];
              dst[j] += is * (t - m1 - xh[j] * m2);
            }
          }
        }
      },
      "layernorm");
}

}  // namespace stsun
