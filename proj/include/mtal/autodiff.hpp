#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "mtal/tensor.hpp"

namespace mtal {

// A value in the define-by-run graph. Leaves are parameters or constants;
// interior nodes remember their parents and a closure that pushes this
// node's gradient into them.
template <typename T>
class Node {
 public:
  using Ptr = std::shared_ptr<Node>;
  using BackwardFn = std::function<void(Node&)>;

  Node(BasicTensor<T> value, bool requires_grad, std::string_view op = "leaf",
       std::vector<Ptr> parents = {}, BackwardFn backward = {})
      : value_(std::move(value)),
        requires_grad_(requires_grad),
        op_(op),
        parents_(std::move(parents)),
        backward_(std::move(backward)) {}

  const BasicTensor<T>& value() const noexcept { return value_; }
  BasicTensor<T>& mutable_value() noexcept { return value_; }
  const Shape& shape() const noexcept { return value_.shape(); }

  // Zero until something accumulates into it; always shaped like value().
  const BasicTensor<T>& grad() const {
    if (!grad_) grad_.emplace(value_.shape());
    return *grad_;
  }
  BasicTensor<T>& grad_buffer() {
    if (!grad_) grad_.emplace(value_.shape());
    return *grad_;
  }
  bool has_grad() const noexcept { return grad_.has_value(); }
  void zero_grad() noexcept { grad_.reset(); }

  bool requires_grad() const noexcept { return requires_grad_; }
  std::string_view op() const noexcept { return op_; }
  const std::vector<Ptr>& parents() const noexcept { return parents_; }

  void propagate() {
    if (backward_ && grad_) backward_(*this);
  }

 private:
  BasicTensor<T> value_;
  mutable std::optional<BasicTensor<T>> grad_;
  bool requires_grad_;
  std::string_view op_;
  std::vector<Ptr> parents_;
  BackwardFn backward_;
};

template <typename T>
using Var = std::shared_ptr<Node<T>>;

template <typename T>
Var<T> parameter(BasicTensor<T> value) {
  return std::make_shared<Node<T>>(std::move(value), true);
}

template <typename T>
Var<T> constant(BasicTensor<T> value) {
  return std::make_shared<Node<T>>(std::move(value), false);
}

// Creates an interior node. If no parent needs a gradient the node is a
// constant and the parents are not retained.
template <typename T>
Var<T> make_op(BasicTensor<T> value, std::string_view op, std::vector<Var<T>> parents,
               typename Node<T>::BackwardFn backward) {
  bool needs_grad = false;
  for (const auto& p : parents) needs_grad = needs_grad || p->requires_grad();
  if (!needs_grad) return std::make_shared<Node<T>>(std::move(value), false, op);
  return std::make_shared<Node<T>>(std::move(value), true, op, std::move(parents),
                                   std::move(backward));
}

// Reverse-mode sweep from a single-element root. Gradients accumulate, so
// parameters must be zeroed between steps (sgd_step does this).
template <typename T>
void backward(const Var<T>& root);

// Every node reachable from root through gradient-carrying edges, parents
// before children.
template <typename T>
std::vector<Node<T>*> topological_order(const Var<T>& root);

class SgdState {
 public:
  explicit SgdState(double learning_rate = 0.01);

  double learning_rate() const noexcept { return learning_rate_; }
  std::uint64_t steps() const noexcept { return steps_; }
  void advance() noexcept { ++steps_; }

 private:
  double learning_rate_;
  std::uint64_t steps_ = 0;
};

// value -= learning_rate * grad for every parameter, then zeroes gradients.
template <typename T>
void sgd_step(std::span<const Var<T>> params, SgdState& state);

}  // namespace mtal
