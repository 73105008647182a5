#pragma once

#include <functional>
#include <string>
#include <vector>

#include "stsun/tensor.hpp"

namespace stsun {

/// Max over coordinates of |analytic - central difference| / max(1, |analytic|).
/// `f` must be a pure scalar-valued function of its argument; it is re-evaluated
/// (without graph recording) for every perturbed coordinate.
double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                  double eps = 1e-5);

/// Same check against a parameter tensor: the parameter is perturbed in place,
/// `loss` rebuilds the graph each call. `max_coords` limits the probed
/// coordinates (deterministic stride sampling); 0 probes all of them.
double grad_check_param(const std::function<Tensor()>& loss, Tensor param, double eps = 1e-5,
                        std::int64_t max_coords = 0);

struct NamedGradCheck {
  std::string name;
  std::function<double()> run;  // returns max relative error
  double threshold = 1e-4;
  bool expect_failure = false;  // negative control: passes when error > threshold
};

/// Every registered gradient check in the library, one entry per op or
/// composite. Shared by `stsun gradcheck` and the acceptance suite.
std::vector<NamedGradCheck> standard_grad_checks();

}  // namespace stsun
