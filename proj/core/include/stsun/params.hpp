#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "stsun/rng.hpp"
#include "stsun/tensor.hpp"

namespace stsun {

/// Named trainable tensors. Iteration is deterministic (name-sorted),
/// independent of creation order.
class ParameterStore {
 public:
  Tensor create(const std::string& name, Shape shape, std::vector<double> data);
  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const;
  std::vector<std::pair<std::string, Tensor>> items() const;
  std::size_t size() const { return params_.size(); }
  std::int64_t total_parameters() const;
  void zero_grads();
  void clear_grads();

  std::uint64_t rng_seed() const { return rng_seed_; }
  void set_rng_seed(std::uint64_t seed) { rng_seed_ = seed; }

 private:
  std::map<std::string, Tensor> params_;
  std::uint64_t rng_seed_ = 0;
};

/// Creates parameters with the documented default scheme: truncated normal
/// (std 0.02) for weights and embeddings, zeros for biases and for the
/// residual output projections.
class ParamFactory {
 public:
  ParamFactory(ParameterStore& store, Rng& rng) : store_(store), rng_(rng) {}

  Tensor trunc_normal(const std::string& name, Shape shape, double stddev = 0.02);
  Tensor zeros(const std::string& name, Shape shape);
  Tensor ones(const std::string& name, Shape shape);

 private:
  ParameterStore& store_;
  Rng& rng_;
};

}  // namespace stsun
