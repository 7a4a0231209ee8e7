#pragma once

#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "kinface/numerics/tensor.hpp"

namespace kinface {

class GraphError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

namespace detail {
inline bool& grad_mode_flag() {
  thread_local bool enabled = true;
  return enabled;
}
}  // namespace detail

inline bool grad_enabled() { return detail::grad_mode_flag(); }

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_mode_flag()) { detail::grad_mode_flag() = false; }
  ~NoGradGuard() { detail::grad_mode_flag() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <Real T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;
  bool has_grad = false;
  bool requires_grad = false;
  bool is_leaf = true;
  std::string name;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  Tensor<T>& grad_buffer() {
    if (!has_grad) {
      grad = Tensor<T>(value.shape(), T{0});
      has_grad = true;
    }
    return grad;
  }

  void release_grad() {
    grad = Tensor<T>();
    has_grad = false;
  }
};

/**
 * Handle to a value in the differentiation graph.
 *
 * Copies share the underlying node. Results of ops keep their inputs alive
 * until the handle to the result is dropped.
 */
template <Real T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  // Constant leaf; never receives a gradient.
  static Var constant(Tensor<T> value) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    return Var(std::move(n));
  }

  // Differentiable leaf, used for inputs under gradient checks.
  static Var leaf(Tensor<T> value, std::string name = {}) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    n->requires_grad = true;
    n->name = std::move(name);
    n->grad_buffer();
    return Var(std::move(n));
  }

  bool valid() const noexcept { return static_cast<bool>(node_); }
  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_->requires_grad; }

  const Tensor<T>& grad() const {
    if (!node_->has_grad) node_->grad_buffer();
    return node_->grad;
  }
  void zero_grad() {
    if (node_->has_grad) node_->grad.fill(T{0});
  }

  Node<T>* node() const noexcept { return node_.get(); }
  const std::shared_ptr<Node<T>>& node_ptr() const noexcept { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

namespace detail {

// Wraps an op output, checks finiteness, and records the backward closure
// when any input is differentiable and recording is enabled.
template <Real T>
Var<T> make_result(const char* op, Tensor<T> value, std::vector<std::shared_ptr<Node<T>>> parents,
                   std::function<void(Node<T>&)> backward_fn) {
  if (!value.all_finite()) throw NumericError(std::string("non-finite output from op ") + op);
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  n->name = op;
  bool needs = false;
  if (grad_enabled()) {
    for (const auto& p : parents) needs = needs || p->requires_grad;
  }
  if (needs) {
    n->requires_grad = true;
    n->is_leaf = false;
    n->parents = std::move(parents);
    n->backward_fn = std::move(backward_fn);
  }
  return Var<T>(std::move(n));
}

}  // namespace detail

/**
 * Reverse-mode sweep from a scalar loss.
 *
 * Leaf gradients accumulate across calls until zeroed; interior gradients
 * are released as soon as they have been propagated.
 */
template <Real T>
void backward(const Var<T>& loss) {
  if (!loss.valid()) throw GraphError("backward on empty variable");
  if (!loss.value().is_scalar()) {
    throw ShapeError("backward requires a scalar loss, got shape " + shape_string(loss.shape()));
  }
  Node<T>* root = loss.node();
  if (!root->requires_grad) throw GraphError("loss was not produced by recorded differentiable ops");

  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> visited;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{root, 0}};
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* p = node->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->grad_buffer()[0] += T{1};
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = *it;
    if (node->is_leaf || !node->has_grad) continue;
    node->backward_fn(*node);
    node->release_grad();
  }
}

/// Named trainable tensor. Copies are handles to the same storage.
template <Real T>
class Parameter {
 public:
  Parameter() = default;
  Parameter(std::string name, Tensor<T> value) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    n->name = std::move(name);
    n->requires_grad = true;
    n->grad_buffer();
    var_ = Var<T>(std::move(n));
  }

  const std::string& name() const { return var_.node()->name; }
  const Var<T>& var() const { return var_; }
  const Tensor<T>& value() const { return var_.value(); }
  Tensor<T>& value() { return var_.node()->value; }
  const Tensor<T>& gradient() const { return var_.node()->grad_buffer(); }
  Tensor<T>& gradient() { return var_.node()->grad_buffer(); }
  void zero_grad() { var_.node()->grad_buffer().fill(T{0}); }

  bool trainable() const { return var_.node()->requires_grad; }
  // Frozen parameters are treated as constants by every op.
  void set_trainable(bool on) { var_.node()->requires_grad = on; }

 private:
  Var<T> var_;
};

/// Ordered parameter collection of one network.
template <Real T>
class ParameterSet {
 public:
  Parameter<T>& add(std::string name, Tensor<T> value) {
    for (const auto& p : params_) {
      if (p.name() == name) throw std::invalid_argument("duplicate parameter name " + name);
    }
    params_.emplace_back(std::move(name), std::move(value));
    return params_.back();
  }

  void append(const ParameterSet& other) {
    for (const auto& p : other.params_) {
      for (const auto& q : params_) {
        if (q.name() == p.name()) throw std::invalid_argument("duplicate parameter name " + p.name());
      }
      params_.push_back(p);
    }
  }

  std::size_t size() const noexcept { return params_.size(); }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }
  Parameter<T>& operator[](std::size_t i) { return params_[i]; }
  const Parameter<T>& operator[](std::size_t i) const { return params_[i]; }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }
  void set_trainable(bool on) {
    for (auto& p : params_) p.set_trainable(on);
  }
  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value().size();
    return n;
  }

 private:
  std::vector<Parameter<T>> params_;
};

}  // namespace kinface
