#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "sgear/error.hpp"

namespace sgear::diff {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

namespace detail {

/// Records the values passed through detach() on one evaluation and hands the same values
/// back, in call order, on later evaluations. Used by grad_check to hold stop-gradient
/// inputs constant while parameters are nudged.
struct DetachTape {
  bool replay = false;
  std::size_t cursor = 0;
  std::vector<std::vector<double>> values;

  const std::vector<double>& pass(const std::vector<double>& v) {
    if (!replay) return values.emplace_back(v);
    if (cursor >= values.size() || values[cursor].size() != v.size()) {
      throw DimensionError("detach replay diverged from the recorded evaluation");
    }
    return values[cursor++];
  }
};

inline thread_local DetachTape* active_detach_tape = nullptr;

}  // namespace detail

struct Node;
using NodePtr = std::shared_ptr<Node>;

/// One vertex of the computation graph. Leaves have no parents and no backward rule.
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until a gradient arrives
  bool requires_grad = false;
  std::string op = "leaf";
  std::vector<NodePtr> parents;
  std::function<void(Node&)> backward;

  std::vector<double>& grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

/// Handle to a node in a dynamically built computation graph.
///
/// Copies share the underlying node, so a parameter held by several modules is one
/// tensor. Gradients accumulate additively across every use of a tensor until
/// `zero_grad` is called.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false) {
    if (shape.empty()) throw DimensionError("tensor shape must have at least one extent");
    for (auto e : shape) {
      if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
    }
    if (shape_size(shape) != values.size()) {
      throw DimensionError("tensor of shape " + shape_str(shape) + " needs " +
                           std::to_string(shape_size(shape)) + " values, got " +
                           std::to_string(values.size()));
    }
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = std::move(values);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    auto size = shape_size(shape);
    return from(std::move(shape), std::vector<double>(size, 0.0), requires_grad);
  }

  static Tensor full(Shape shape, double v, bool requires_grad = false) {
    auto size = shape_size(shape);
    return from(std::move(shape), std::vector<double>(size, v), requires_grad);
  }

  static Tensor scalar(double v, bool requires_grad = false) {
    return from({1}, {v}, requires_grad);
  }

  bool defined() const noexcept { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t size() const { return node_->value.size(); }
  bool requires_grad() const { return node_->requires_grad; }
  const std::string& op() const { return node_->op; }

  std::span<const double> data() const { return node_->value; }
  /// Direct write access. Only meaningful for leaves (parameters, inputs).
  std::span<double> mutable_data() { return node_->value; }
  const std::vector<double>& values() const { return node_->value; }

  bool has_grad() const { return !node_->grad.empty(); }
  /// Gradient view; zero-filled if no gradient has arrived yet.
  std::span<const double> grad() const { return node_->grad_buffer(); }
  void zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), 0.0); }
  void set_requires_grad(bool v) { node_->requires_grad = v; }

  double item() const {
    if (size() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape()));
    return node_->value[0];
  }
  double operator[](std::size_t i) const { return node_->value[i]; }
  double at(std::size_t r, std::size_t c) const { return node_->value[r * shape().back() + c]; }

  /// A new leaf sharing no graph history and carrying no gradient.
  Tensor detach() const {
    if (detail::active_detach_tape) return from(shape(), detail::active_detach_tape->pass(node_->value), false);
    return from(shape(), node_->value, false);
  }

  /// Reverse-mode sweep seeded with d(self)/d(self) = 1. Requires a single-element tensor.
  void backward() const {
    if (size() != 1) throw DimensionError("backward() needs a scalar, got " + shape_str(shape()));
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    // Iterative post-order DFS; deep graphs would overflow a recursive version.
    std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
    seen.insert(node_.get());
    while (!stack.empty()) {
      auto& [n, next] = stack.back();
      if (next < n->parents.size()) {
        Node* p = n->parents[next++].get();
        if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
      } else {
        order.push_back(n);
        stack.pop_back();
      }
    }
    // Interior gradients are per-sweep; only leaves accumulate across calls.
    for (Node* n : order) {
      if (n->backward) std::fill(n->grad.begin(), n->grad.end(), 0.0);
    }
    node_->grad_buffer()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node* n = *it;
      if (n->backward && !n->grad.empty()) n->backward(*n);
    }
  }

  NodePtr node() const { return node_; }

 private:
  NodePtr node_;
};

namespace detail {

inline void require_finite(const std::vector<double>& v, const std::string& op) {
  for (double x : v) {
    if (!std::isfinite(x)) throw NumericError("non-finite value produced by operation '" + op + "'");
  }
}

/// Builds an interior node. `rule` receives the finished node and must add into the
/// gradients of the parents that require them.
inline Tensor make_result(std::string op, Shape shape, std::vector<double> value,
                          std::vector<Tensor> inputs, std::function<void(Node&)> rule) {
  require_finite(value, op);
  auto n = std::make_shared<Node>();
  n->op = std::move(op);
  n->shape = std::move(shape);
  n->value = std::move(value);
  for (auto& t : inputs) {
    if (t.requires_grad()) n->requires_grad = true;
    n->parents.push_back(t.node());
  }
  if (n->requires_grad) n->backward = std::move(rule);
  return Tensor(std::move(n));
}

/// Gradient buffer of parent `i`, or nullptr when that parent is constant.
inline std::vector<double>* parent_grad(Node& self, std::size_t i) {
  Node& p = *self.parents[i];
  return p.requires_grad ? &p.grad_buffer() : nullptr;
}

}  // namespace detail

}  // namespace sgear::diff
