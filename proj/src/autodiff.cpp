#include "mtal/autodiff.hpp"

#include <string>
#include <unordered_set>
#include <utility>

#include "mtal/errors.hpp"

namespace mtal {

template <typename T>
std::vector<Node<T>*> topological_order(const Var<T>& root) {
  std::vector<Node<T>*> order;
  if (!root || !root->requires_grad()) return order;
  std::unordered_set<const Node<T>*> seen;
  // (node, next parent index) frames; avoids recursion on deep graphs.
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(root.get(), 0);
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents().size()) {
      Node<T>* parent = node->parents()[next++].get();
      if (parent->requires_grad() && seen.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;
}

template <typename T>
void backward(const Var<T>& root) {
  if (!root) throw std::invalid_argument("backward: null root");
  if (root->value().size() != 1) {
    throw ShapeError("backward: root must be scalar, got shape " + to_string(root->shape()));
  }
  if (!root->requires_grad()) return;
  root->grad_buffer()[0] += T{1};
  auto order = topological_order(root);
  for (auto it = order.rbegin(); it != order.rend(); ++it) (*it)->propagate();
}

SgdState::SgdState(double learning_rate) : learning_rate_(learning_rate) {
  if (!(learning_rate > 0.0)) {
    throw ConfigError("learning_rate must be > 0, got " + std::to_string(learning_rate));
  }
}

template <typename T>
void sgd_step(std::span<const Var<T>> params, SgdState& state) {
  if (params.empty()) return;
  const double lr = state.learning_rate();
  for (const auto& p : params) {
    if (!p->has_grad()) continue;
    auto value = p->mutable_value().data();
    auto grad = p->grad().data();
    for (std::size_t k = 0; k < value.size(); ++k) {
      value[k] -= static_cast<T>(lr * static_cast<double>(grad[k]));
    }
    p->zero_grad();
  }
  state.advance();
}

#define MTAL_INSTANTIATE(T)                                              \
  template std::vector<Node<T>*> topological_order(const Var<T>& root); \
  template void backward(const Var<T>& root);                           \
  template void sgd_step(std::span<const Var<T>> params, SgdState& state);

MTAL_INSTANTIATE(float)
MTAL_INSTANTIATE(double)
#undef MTAL_INSTANTIATE

}  // namespace mtal
