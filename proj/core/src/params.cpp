#include "stsun/params.hpp"

#include "stsun/errors.hpp"

namespace stsun {

Tensor ParameterStore::create(const std::string& name, Shape shape, std::vector<double> data) {
  if (params_.count(name)) {
    throw ValidationError("parameter store: duplicate name '" + name + "'");
  }
  Tensor t = Tensor::from_data(std::move(shape), std::move(data), /*requires_grad=*/true);
  params_.emplace(name, t);
  return t;
}

const Tensor& ParameterStore::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) {
    throw ValidationError("parameter store: unknown name '" + name + "'");
  }
  return it->second;
}

bool ParameterStore::contains(const std::string& name) const { return params_.count(name) > 0; }

std::vector<std::pair<std::string, Tensor>> ParameterStore::items() const {
  return {params_.begin(), params_.end()};
}

std::int64_t ParameterStore::total_parameters() const {
  std::int64_t n = 0;
  for (const auto& [_, t] : params_) n += t.numel();
  return n;
}

void ParameterStore::zero_grads() {
  for (auto& [_, t] : params_) t.zero_grad();
}

void ParameterStore::clear_grads() {
  for (auto& [_, t] : params_) t.clear_grad();
}

Tensor ParamFactory::trunc_normal(const std::string& name, Shape shape, double stddev) {
  auto n = shape_numel(shape);
  std::vector<double> data(static_cast<std::size_t>(n));
  for (auto& v : data) v = rng_.trunc_normal(stddev);
  return store_.create(name, std::move(shape), std::move(data));
}

Tensor ParamFactory::zeros(const std::string& name, Shape shape) {
  auto n = shape_numel(shape);
  return store_.create(name, std::move(shape), std::vector<double>(static_cast<std::size_t>(n), 0.0));
}

Tensor ParamFactory::ones(const std::string& name, Shape shape) {
  auto n = shape_numel(shape);
  return store_.create(name, std::move(shape), std::vector<double>(static_cast<std::size_t>(n), 1.0));
}

}  // namespace stsun
