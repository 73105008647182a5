#include <doctest.h>

#include <cmath>

#include "stsun/metadata.hpp"
#include "stsun/ops.hpp"
#include "stsun/params.hpp"
#include "stsun/rng.hpp"

using namespace stsun;

namespace {

EmbeddingRegistry small_registry(std::int64_t c_e = 4) {
  EmbeddingRegistry reg;
  Rng rng(31);
  auto vec = [&](double base) {
    std::vector<double> v(static_cast<std::size_t>(c_e));
    for (auto& x : v) x = base + 0.1 * rng.normal();
    return v;
  };
  reg.register_task(TaskId::SS, Tensor::from_data({c_e}, vec(0.1)));
  reg.register_task(TaskId::BCD, Tensor::from_data({c_e}, vec(0.2)));
  reg.register_task(TaskId::SCD, Tensor::from_data({c_e}, vec(0.3)));
  reg.register_category(0, "background", Tensor::from_data({c_e}, vec(0.4)));
  reg.register_category(1, "water", Tensor::from_data({c_e}, vec(0.5)));
  reg.register_category(2, "change", Tensor::from_data({c_e}, vec(0.6)));
  return reg;
}

}  // namespace

TEST_CASE("output spec enforces every task/length rule") {
  auto reg = small_registry();
  OutputSpec spec;
  spec.category_ids = {0, 1};

  spec.task = TaskId::SS;
  spec.out_len = 1;
  CHECK_NOTHROW(spec.validate(1, reg));
  CHECK_NOTHROW(spec.validate(5, reg));
  spec.out_len = 2;
  CHECK_THROWS_AS(spec.validate(2, reg), ValidationError);

  spec.task = TaskId::SCD;
  spec.out_len = 3;
  CHECK_NOTHROW(spec.validate(3, reg));
  CHECK_THROWS_AS(spec.validate(4, reg), ValidationError);

  spec.task = TaskId::BCD;
  spec.out_len = 1;
  spec.category_ids = {2};
  CHECK_NOTHROW(spec.validate(2, reg));
  CHECK_THROWS_AS(spec.validate(1, reg), ValidationError);  // needs two frames
  spec.out_len = 3;
  CHECK_THROWS_AS(spec.validate(2, reg), ValidationError);
  spec.out_len = 1;
  spec.category_ids = {0};  // BCD must use exactly {change}
  CHECK_THROWS_AS(spec.validate(2, reg), ValidationError);
  spec.category_ids = {2, 0};
  CHECK_THROWS_AS(spec.validate(2, reg), ValidationError);

  spec.task = TaskId::SS;
  spec.out_len = 1;
  spec.category_ids = {0, 0};
  CHECK_THROWS_AS(spec.validate(1, reg), ValidationError);
  spec.category_ids = {0, 9};
  CHECK_THROWS_AS(spec.validate(1, reg), ValidationError);
  spec.category_ids = {};
  CHECK_THROWS_AS(spec.validate(1, reg), ValidationError);
}

TEST_CASE("metadata validation") {
  InputMetadata meta;
  meta.wavelengths_nm = {490, 560, 665};
  meta.timestamps = {0, 10};
  meta.resolution_m = 0.5;
  CHECK_NOTHROW(meta.validate(2, 3));
  CHECK_THROWS_AS(meta.validate(2, 4), ValidationError);
  meta.timestamps = {10, 0};
  CHECK_THROWS_AS(meta.validate(2, 3), ValidationError);
  meta.timestamps = {0, 10};
  meta.wavelengths_nm[1] = -1;
  CHECK_THROWS_AS(meta.validate(2, 3), ValidationError);
}

TEST_CASE("tokenizer is affine, exactly, on dyadic values") {
  // Dyadic weights/biases/values make every f64 operation exact, so the
  // affinity identity holds bit for bit.
  ScalarTokenizer proj{Tensor::from_data({1, 3}, {0.5, -1.25, 2.0}),
                       Tensor::from_data({3}, {0.75, -0.5, 1.5})};
  double v = 1.25;
  double alpha = 4.0;
  Tensor t0 = tokenize_scalars({0.0}, proj);
  Tensor tv = tokenize_scalars({v}, proj);
  Tensor tav = tokenize_scalars({alpha * v}, proj);
  for (int j = 0; j < 3; ++j) {
    double lhs = tav.data()[static_cast<std::size_t>(j)] - t0.data()[static_cast<std::size_t>(j)];
    double rhs = alpha * (tv.data()[static_cast<std::size_t>(j)] - t0.data()[static_cast<std::size_t>(j)]);
    CHECK(lhs == rhs);
  }

  // The same property within 1e-12 for arbitrary reals.
  Rng rng(32);
  ScalarTokenizer pr{Tensor::from_data({1, 3}, {rng.normal(), rng.normal(), rng.normal()}),
                     Tensor::from_data({3}, {rng.normal(), rng.normal(), rng.normal()})};
  double w = 0.737, a = 3.1;
  Tensor u0 = tokenize_scalars({0.0}, pr);
  Tensor uv = tokenize_scalars({w}, pr);
  Tensor uav = tokenize_scalars({a * w}, pr);
  for (int j = 0; j < 3; ++j) {
    double lhs = uav.data()[static_cast<std::size_t>(j)] - u0.data()[static_cast<std::size_t>(j)];
    double rhs = a * (uv.data()[static_cast<std::size_t>(j)] - u0.data()[static_cast<std::size_t>(j)]);
    CHECK(std::abs(lhs - rhs) <= 1e-12);
  }
}

TEST_CASE("tokenizer basics: shape, equal inputs, empty input") {
  Rng rng(33);
  std::vector<double> wdata(8), bdata(8);
  for (auto& x : wdata) x = rng.normal();
  for (auto& x : bdata) x = rng.normal();
  ScalarTokenizer proj{Tensor::from_data({1, 8}, wdata), Tensor::from_data({8}, bdata)};

  Tensor tokens = tokenize_scalars({0.45, 0.55, 0.65}, proj);  // wavelengths in um
  CHECK(tokens.shape() == Shape{3, 8});

  Tensor same = tokenize_scalars({0.7, 0.7}, proj);
  for (int j = 0; j < 8; ++j) {
    CHECK(same.data()[static_cast<std::size_t>(j)] == same.data()[static_cast<std::size_t>(8 + j)]);
  }
  CHECK_THROWS_AS(tokenize_scalars({}, proj), ValidationError);

  // single value: v*w + b coordinatewise
  Tensor one = tokenize_scalars({2.0}, proj);
  for (int j = 0; j < 8; ++j) {
    CHECK(one.data()[static_cast<std::size_t>(j)] ==
          doctest::Approx(2.0 * wdata[static_cast<std::size_t>(j)] + bdata[static_cast<std::size_t>(j)])
              .epsilon(1e-15));
  }
}

TEST_CASE("spatial encoding: shapes and additive resolution structure") {
  Rng rng(34);
  auto mk = [&] {
    std::vector<double> w(5), b(5);
    for (auto& x : w) x = rng.normal();
    for (auto& x : b) x = rng.normal();
    return ScalarTokenizer{Tensor::from_data({1, 5}, w), Tensor::from_data({5}, b)};
  };
  auto row = mk(), col = mk(), res = mk();

  Tensor single = encode_spatial_meta(1, 1, 0.5, row, col, res);
  CHECK(single.shape() == Shape{1, 5});

  Tensor four = encode_spatial_meta(2, 2, 0.3, row, col, res);
  CHECK(four.shape() == Shape{4, 5});

  // Doubling the resolution shifts every token by the same vector.
  Tensor a = encode_spatial_meta(2, 2, 0.3, row, col, res);
  Tensor b = encode_spatial_meta(2, 2, 0.6, row, col, res);
  std::vector<double> delta(5);
  for (int j = 0; j < 5; ++j) {
    delta[static_cast<std::size_t>(j)] =
        b.data()[static_cast<std::size_t>(j)] - a.data()[static_cast<std::size_t>(j)];
  }
  for (int t = 1; t < 4; ++t) {
    for (int j = 0; j < 5; ++j) {
      double d = b.data()[static_cast<std::size_t>(t * 5 + j)] -
                 a.data()[static_cast<std::size_t>(t * 5 + j)];
      CHECK(std::abs(d - delta[static_cast<std::size_t>(j)]) <= 1e-12);
    }
  }
}

TEST_CASE("output temporal encoding carries the task embedding additively") {
  auto reg = small_registry();
  Rng rng(35);
  std::vector<double> w(4), b(4);
  for (auto& x : w) x = rng.normal();
  for (auto& x : b) x = rng.normal();
  ScalarTokenizer proj{Tensor::from_data({1, 4}, w), Tensor::from_data({4}, b)};

  Tensor ss = encode_output_temporal_meta(1, TaskId::SS, proj, reg);
  CHECK(ss.shape() == Shape{1, 4});

  Tensor bcd = encode_output_temporal_meta(3, TaskId::BCD, proj, reg);
  CHECK(bcd.shape() == Shape{3, 4});

  // Two tasks with the same T2 differ by a constant row: the embedding delta.
  Tensor scd = encode_output_temporal_meta(3, TaskId::SCD, proj, reg);
  for (int t = 0; t < 3; ++t) {
    for (int j = 0; j < 4; ++j) {
      double d = scd.data()[static_cast<std::size_t>(t * 4 + j)] -
                 bcd.data()[static_cast<std::size_t>(t * 4 + j)];
      double expect = reg.task_embedding(TaskId::SCD).data()[static_cast<std::size_t>(j)] -
                      reg.task_embedding(TaskId::BCD).data()[static_cast<std::size_t>(j)];
      CHECK(std::abs(d - expect) <= 1e-12);
    }
  }
  CHECK_THROWS_AS(encode_output_temporal_meta(0, TaskId::SS, proj, reg), ValidationError);
}

TEST_CASE("registry rejects duplicates and resolves the change id") {
  auto reg = small_registry();
  CHECK(reg.change_id() == 2);
  CHECK(reg.category_name(1) == "water");
  CHECK_THROWS_AS(reg.register_category(1, "other", Tensor::zeros({4})), ValidationError);
  CHECK_THROWS_AS(reg.register_category(9, "water", Tensor::zeros({4})), ValidationError);
  CHECK_THROWS_AS(reg.category_embedding(42), ValidationError);
}

TEST_CASE("sinusoidal positional table is deterministic and bounded") {
  Tensor a = sinusoidal_positional(6, 8);
  Tensor b = sinusoidal_positional(6, 8);
  CHECK(a.data() == b.data());
  for (double v : a.data()) CHECK(std::abs(v) <= 1.0);
  // position 0: sin(0)=0 on even dims, cos(0)=1 on odd dims
  CHECK(a.data()[0] == 0.0);
  CHECK(a.data()[1] == 1.0);
}

TEST_CASE("metadata normalizations") {
  InputMetadata meta;
  meta.wavelengths_nm = {500, 1000};
  meta.timestamps = {10, 20, 30};
  meta.resolution_m = 100.0;
  CHECK(meta.normalized_wavelengths() == std::vector<double>{0.5, 1.0});
  CHECK(meta.normalized_timestamps() == std::vector<double>{0.0, 0.5, 1.0});
  CHECK(meta.normalized_resolution() == doctest::Approx(2.0).epsilon(1e-15));
  meta.timestamps = {5.0};
  CHECK(meta.normalized_timestamps() == std::vector<double>{0.0});
}
