#include <doctest.h>

#include <cmath>

#include "stsun/ops.hpp"
#include "stsun/rng.hpp"
#include "stsun/tensor.hpp"

using namespace stsun;

namespace {

Tensor rand_tensor(Rng& rng, Shape shape, double scale = 1.0) {
  std::vector<double> data(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& v : data) v = rng.normal() * scale;
  return Tensor::from_data(std::move(shape), std::move(data));
}

}  // namespace

TEST_CASE("matmul identity and hand-expanded product") {
  Tensor eye = Tensor::from_data({2, 2}, {1, 0, 0, 1});
  Rng rng(1);
  Tensor x = rand_tensor(rng, {2, 3});
  CHECK(matmul(eye, x).data() == x.data());

  Tensor a = Tensor::from_data({2, 2}, {1, 2, 3, 4});
  Tensor b = Tensor::from_data({2, 1}, {1, 1});
  Tensor c = matmul(a, b);
  CHECK(c.shape() == Shape{2, 1});
  CHECK(c.data()[0] == 3.0);
  CHECK(c.data()[1] == 7.0);

  CHECK_THROWS_AS(matmul(a, Tensor::from_data({3, 1}, {1, 1, 1})), ShapeError);
}

TEST_CASE("matmul gradient equals B summed over columns") {
  // d/dA sum(A.B) = 1 . B^T, i.e. dA[i,k] = sum_j B[k,j].
  Rng rng(2);
  Tensor a = rand_tensor(rng, {3, 4});
  Tensor b = rand_tensor(rng, {4, 2});
  Tensor ag = a.clone_with_grad();
  backward(sum(matmul(ag, b)));
  for (std::int64_t i = 0; i < 3; ++i) {
    for (std::int64_t k = 0; k < 4; ++k) {
      double expect = b.data()[k * 2] + b.data()[k * 2 + 1];
      CHECK(ag.grad()[static_cast<std::size_t>(i * 4 + k)] == doctest::Approx(expect).epsilon(1e-12));
    }
  }
}

TEST_CASE("softmax rows: symmetry, direct value, overflow safety") {
  Tensor z = softmax_rows(Tensor::from_data({1, 2}, {0, 0}));
  CHECK(z.data()[0] == 0.5);
  CHECK(z.data()[1] == 0.5);

  Tensor s = softmax_rows(Tensor::from_data({1, 2}, {1, 0}));
  double e = std::exp(1.0);
  CHECK(s.data()[0] == doctest::Approx(e / (e + 1)).epsilon(1e-14));
  CHECK(s.data()[1] == doctest::Approx(1 / (e + 1)).epsilon(1e-14));

  Tensor big = softmax_rows(Tensor::from_data({1, 2}, {1000, 0}));
  CHECK(big.data()[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(big.data()[1] == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("softmax rows sum to one within 1e-12 across the stated range") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    std::int64_t rows = 1 + rng.uniform_int(6);
    std::int64_t cols = 1 + rng.uniform_int(7);
    std::vector<double> vals(static_cast<std::size_t>(rows * cols));
    for (auto& v : vals) v = rng.uniform(-1e3, 1e3);
    Tensor y = softmax_rows(Tensor::from_data({rows, cols}, vals));
    for (std::int64_t r = 0; r < rows; ++r) {
      double acc = 0.0;
      for (std::int64_t c = 0; c < cols; ++c) acc += y.data()[static_cast<std::size_t>(r * cols + c)];
      CHECK(std::abs(acc - 1.0) <= 1e-12);
      for (std::int64_t c = 0; c < cols; ++c) {
        CHECK(y.data()[static_cast<std::size_t>(r * cols + c)] >= 0.0);
      }
    }
  }
}

TEST_CASE("layernorm: constant row collapses to beta, [1,3] hits the analytic value") {
  Tensor gamma = Tensor::full({4}, 1.0);
  Tensor beta = Tensor::zeros({4});
  Tensor y = layernorm(Tensor::full({2, 4}, 3.25), gamma, beta);
  for (double v : y.data()) CHECK(v == 0.0);

  Tensor g2 = Tensor::full({2}, 1.0);
  Tensor b2 = Tensor::zeros({2});
  Tensor z = layernorm(Tensor::from_data({1, 2}, {1, 3}), g2, b2);
  double expect = 1.0 / std::sqrt(1.0 + 1e-5);  // population variance 1, eps inside sqrt
  CHECK(z.data()[0] == doctest::Approx(-expect).epsilon(1e-14));
  CHECK(z.data()[1] == doctest::Approx(expect).epsilon(1e-14));
  CHECK(std::abs(z.data()[1] - 1.0) < 6e-6);
}

TEST_CASE("elementwise basics") {
  CHECK(sigmoid(Tensor::scalar(0.0)).item() == 0.5);
  CHECK(relu(Tensor::scalar(-2.0)).item() == 0.0);
  CHECK(softplus(Tensor::scalar(0.0)).item() == doctest::Approx(std::log(2.0)).epsilon(1e-15));

  Rng rng(4);
  Tensor x = rand_tensor(rng, {2, 3, 4});
  Tensor back = reshape(reshape(x, {6, 4}), {2, 3, 4});
  CHECK(back.data() == x.data());

  Tensor p = permute(x, {1, 0, 2});
  Tensor restored = permute(p, {1, 0, 2});
  CHECK(restored.data() == x.data());
  Tensor q = permute(x, {2, 0, 1});  // T,C,H -> H,T,C then inverse
  Tensor r = permute(q, {1, 2, 0});
  CHECK(r.data() == x.data());
}

TEST_CASE("concat, split and slice agree") {
  Rng rng(5);
  Tensor x = rand_tensor(rng, {3, 5});
  auto parts = split(x, 1, {2, 3});
  CHECK(parts[0].shape() == Shape{3, 2});
  Tensor joined = concat({parts[0], parts[1]}, 1);
  CHECK(joined.data() == x.data());
  Tensor mid = slice(x, 0, 1, 2);
  CHECK(mid.shape() == Shape{2, 5});
  CHECK(mid.data()[0] == x.data()[5]);
}

TEST_CASE("gather and scatter row ops") {
  Tensor x = Tensor::from_data({3, 2}, {1, 2, 3, 4, 5, 6});
  Tensor g = gather_rows(x, {2, 0, 2});
  CHECK(g.data() == std::vector<double>{5, 6, 1, 2, 5, 6});
  Tensor s = scatter_add_rows(g, {0, 1, 0}, 2);
  CHECK(s.data() == std::vector<double>{10, 12, 1, 2});
  Tensor f = gather_flat(x, {5, 0, 3}, {3});
  CHECK(f.data() == std::vector<double>{6, 1, 4});
}

TEST_CASE("non-finite values are surfaced, never propagated") {
  Tensor a = Tensor::from_data({2}, {1.0, 2.0});
  Tensor b = Tensor::from_data({2}, {0.0, 1.0});
  CHECK_THROWS_AS(div(a, b), NumericError);
  CHECK_THROWS_AS(Tensor::from_data({1}, {std::nan("")}), NumericError);
  CHECK_THROWS_AS(Tensor::from_data({2, 0}, {}), ShapeError);
}

TEST_CASE("backward bookkeeping: scalar roots, single use, grad accumulation") {
  Tensor x = Tensor::from_data({2}, {1.0, 2.0}, true);
  Tensor loss = sum(mul(x, x));
  CHECK_THROWS_AS(backward(mul(x, x)), ShapeError);  // non-scalar root
  backward(loss);
  CHECK(x.grad()[0] == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(x.grad()[1] == doctest::Approx(4.0).epsilon(1e-15));
  CHECK_THROWS_AS(backward(loss), ValidationError);  // re-running the tape

  // grads accumulate across separate graphs until cleared
  backward(sum(mul(x, x)));
  CHECK(x.grad()[0] == doctest::Approx(4.0).epsilon(1e-15));
  x.clear_grad();
  CHECK(!x.has_grad());
}

TEST_CASE("NoGradGuard suppresses recording") {
  Tensor x = Tensor::from_data({2}, {1.0, 2.0}, true);
  NoGradGuard guard;
  Tensor y = sum(mul(x, x));
  CHECK(!y.requires_grad());
}

TEST_CASE("ops are deterministic given identical inputs") {
  Rng rng(6);
  Tensor a = rand_tensor(rng, {4, 4});
  Tensor b = rand_tensor(rng, {4, 4});
  Tensor y1 = matmul(softmax_rows(a), gelu(b));
  Tensor y2 = matmul(softmax_rows(a), gelu(b));
  CHECK(y1.data() == y2.data());
}

TEST_CASE("bmm matches per-batch matmul") {
  Rng rng(7);
  Tensor a = rand_tensor(rng, {2, 3, 4});
  Tensor b = rand_tensor(rng, {2, 4, 2});
  Tensor y = bmm(a, b);
  for (int bt = 0; bt < 2; ++bt) {
    Tensor a2 = slice(a, 0, bt, 1);
    Tensor b2 = slice(b, 0, bt, 1);
    Tensor m = matmul(reshape(a2, {3, 4}), reshape(b2, {4, 2}));
    for (int i = 0; i < 6; ++i) {
      CHECK(y.data()[static_cast<std::size_t>(bt * 6 + i)] ==
            doctest::Approx(m.data()[static_cast<std::size_t>(i)]).epsilon(1e-15));
    }
  }
}
