#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "stsun/errors.hpp"

namespace stsun {

using Shape = std::vector<std::int64_t>;

std::string shape_str(const Shape& s);
std::int64_t shape_numel(const Shape& s);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // allocated during backward for nodes that need it
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;
  const char* op = "leaf";
  bool requires_grad = false;
  bool backward_ran = false;  // set on the root once backward has consumed the graph
  std::uint64_t seq = 0;      // creation order; reverse order is a valid reverse topo order
};

}  // namespace detail

/// True unless a NoGradGuard is active on this thread.
bool grad_enabled();

/// RAII switch that disables graph recording; evaluation-only forwards.
struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

/// Dense row-major tensor of 64-bit floats with reverse-mode autodiff.
/// A Tensor is a cheap handle to an immutable graph node; ops return new
/// nodes. Every op validates that its result is finite.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor scalar(double value);

  /// Graph-construction entry point used by every op (and by test fixtures
  /// that need a custom backward). `backward_fn` reads node.grad and
  /// accumulates into the parents' grads.
  static Tensor from_op(Shape shape, std::vector<double> data, std::vector<Tensor> parents,
                        std::function<void(detail::Node&)> backward_fn, const char* op);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::int64_t rank() const { return static_cast<std::int64_t>(node_->shape.size()); }
  std::int64_t dim(std::int64_t i) const { return node_->shape[static_cast<std::size_t>(i)]; }
  std::int64_t numel() const { return static_cast<std::int64_t>(node_->data.size()); }
  bool requires_grad() const { return node_->requires_grad; }
  const char* op_name() const { return node_->op; }

  const std::vector<double>& data() const { return node_->data; }
  /// In-place access for leaf tensors (parameters). Throws on non-leaves.
  std::vector<double>& mutable_data();

  bool has_grad() const { return !node_->grad.empty(); }
  const std::vector<double>& grad() const;
  void zero_grad();
  /// Drops the grad buffer entirely; has_grad() turns false until the next
  /// backward pass reaches this tensor.
  void clear_grad() { node_->grad.clear(); }

  /// Value of a single-element tensor.
  double item() const;

  /// Constant copy detached from the graph.
  Tensor detach() const;
  /// Leaf copy with requires_grad set; used by the gradient checker.
  Tensor clone_with_grad() const;

  bool same_node(const Tensor& other) const { return node_ == other.node_; }
  detail::Node* node() const { return node_.get(); }
  const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}
  std::shared_ptr<detail::Node> node_;
};

/// Reverse-mode sweep from a scalar root. Visits nodes in exact reverse
/// topological (creation) order. Grads accumulate into leaves that require
/// them. Re-running backward on the same root is an error.
void backward(const Tensor& root);

}  // namespace stsun
