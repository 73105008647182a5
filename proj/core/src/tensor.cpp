#include "stsun/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace stsun {

namespace {

std::atomic<std::uint64_t> g_seq{1};
thread_local int g_no_grad_depth = 0;

void check_shape(const Shape& shape, std::size_t data_len, const char* op) {
  for (auto e : shape) {
    if (e < 1) {
      throw ShapeError(std::string(op) + ": every extent must be >= 1, got " + shape_str(shape));
    }
  }
  if (shape_numel(shape) != static_cast<std::int64_t>(data_len)) {
    std::ostringstream os;
    os << op << ": data length " << data_len << " does not match shape " << shape_str(shape);
    throw ShapeError(os.str());
  }
}

void check_finite(const std::vector<double>& data, const char* op) {
  for (double v : data) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string("op '") + op + "' produced a non-finite value");
    }
  }
}

}  // namespace

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << "x";
    os << s[i];
  }
  os << "]";
  return os.str();
}

std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (auto e : s) n *= e;
  return n;
}

bool grad_enabled() { return g_no_grad_depth == 0; }

NoGradGuard::NoGradGuard() { ++g_no_grad_depth; }
NoGradGuard::~NoGradGuard() { --g_no_grad_depth; }

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto n = shape_numel(shape);
  return from_data(std::move(shape), std::vector<double>(static_cast<std::size_t>(n), 0.0),
                   requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  auto n = shape_numel(shape);
  return from_data(std::move(shape), std::vector<double>(static_cast<std::size_t>(n), value),
                   requires_grad);
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
  check_shape(shape, data.size(), "tensor");
  check_finite(data, "tensor");
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  node->seq = g_seq.fetch_add(1);
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value) { return from_data({1}, {value}); }

Tensor Tensor::from_op(Shape shape, std::vector<double> data, std::vector<Tensor> parents,
                       std::function<void(detail::Node&)> backward_fn, const char* op) {
  check_shape(shape, data.size(), op);
  check_finite(data, op);
  bool needs_grad = grad_enabled();
  if (needs_grad) {
    needs_grad = false;
    for (const auto& p : parents) {
      if (p.requires_grad()) {
        needs_grad = true;
        break;
      }
    }
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->op = op;
  node->seq = g_seq.fetch_add(1);
  if (needs_grad) {
    node->requires_grad = true;
    node->parents.reserve(parents.size());
    for (auto& p : parents) node->parents.push_back(p.node_ptr());
    node->backward_fn = std::move(backward_fn);
  }
  return Tensor(std::move(node));
}

std::vector<double>& Tensor::mutable_data() {
  if (!node_->parents.empty()) {
    throw ValidationError("mutable_data: only leaf tensors (parameters) may be mutated");
  }
  return node_->data;
}

const std::vector<double>& Tensor::grad() const {
  if (node_->grad.empty()) {
    throw ValidationError("grad: no gradient recorded for this tensor; run backward first");
  }
  return node_->grad;
}

void Tensor::zero_grad() {
  std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

double Tensor::item() const {
  if (numel() != 1) {
    throw ShapeError(std::string("item: expected a single element, got ") + shape_str(shape()));
  }
  return node_->data[0];
}

Tensor Tensor::detach() const { return from_data(shape(), data(), false); }

Tensor Tensor::clone_with_grad() const { return from_data(shape(), data(), true); }

void backward(const Tensor& root) {
  if (!root.defined()) throw ValidationError("backward: undefined tensor");
  auto* root_node = root.node();
  if (root.numel() != 1) {
    throw ShapeError("backward: root must be scalar, got " + shape_str(root.shape()));
  }
  if (!root_node->requires_grad) {
    throw ValidationError("backward: root does not require grad (nothing recorded)");
  }
  if (root_node->backward_ran) {
    throw ValidationError("backward: already run for this graph; re-record the ops first");
  }
  root_node->backward_ran = true;

  // Collect the reachable subgraph (iterative DFS over parents).
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<detail::Node*> stack{root_node};
  seen.insert(root_node);
  while (!stack.empty()) {
    auto* n = stack.back();
    stack.pop_back();
    order.push_back(n);
    for (auto& p : n->parents) {
      if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
    }
  }
  // Reverse creation order is a valid reverse topological order because
  // parents are always created before their children.
  std::sort(order.begin(), order.end(),
            [](const detail::Node* a, const detail::Node* b) { return a->seq > b->seq; });

  for (auto* n : order) {
    if (n->grad.empty()) n->grad.assign(n->data.size(), 0.0);
  }
  root_node->grad[0] += 1.0;

  for (auto* n : order) {
    if (n->backward_fn) n->backward_fn(*n);
  }
}

}  // namespace stsun
