#pragma once

// Minimal reverse-mode automatic differentiation over dense Eigen matrices.
//
// A `Var` is a cheap handle to a node in a dynamically built graph. Graphs are
// transient: build them in a forward pass, call `backward(loss)`, drop them.
// Model weights live in `Parameter`s owned by the models; `leaf(param)` wraps
// one without copying, and backward accumulates into `param.grad`.

#include "llara/core/tensor.hpp"

#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

namespace llara::ad {

template <class S>
struct Node {
  Matrix<S> own;
  const Matrix<S>* external = nullptr;
  Matrix<S>* external_grad = nullptr;
  Matrix<S> own_grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  const Matrix<S>& value() const { return external ? *external : own; }

  Matrix<S>& grad() {
    Matrix<S>& g = external_grad ? *external_grad : own_grad;
    const auto& v = value();
    if (g.rows() != v.rows() || g.cols() != v.cols()) g.setZero(v.rows(), v.cols());
    return g;
  }

  Node& parent(std::size_t i) { return *parents[i]; }
  bool wants(std::size_t i) const { return parents[i]->requires_grad; }
};

template <class S>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<S>> n) : node_(std::move(n)) {}

  const Matrix<S>& value() const { return node_->value(); }
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  bool requires_grad() const { return node_->requires_grad; }
  S scalar() const { return value()(0, 0); }

  /// Gradient after `backward`; zeros if the node never received one.
  const Matrix<S>& grad() const { return node_->grad(); }

  const std::shared_ptr<Node<S>>& node() const { return node_; }
  explicit operator bool() const { return static_cast<bool>(node_); }

 private:
  std::shared_ptr<Node<S>> node_;
};

/// Constant (no gradient) node holding a copy of `m`.
template <class S>
Var<S> constant(Matrix<S> m) {
  auto n = std::make_shared<Node<S>>();
  n->own = std::move(m);
  return Var<S>(std::move(n));
}

/// Leaf that owns a copy of `m` and collects a gradient (used by tests and
/// for inputs that must be differentiated).
template <class S>
Var<S> variable(Matrix<S> m) {
  auto n = std::make_shared<Node<S>>();
  n->own = std::move(m);
  n->requires_grad = true;
  return Var<S>(std::move(n));
}

namespace detail {
inline thread_local int no_grad_depth = 0;
}

/// While alive, `leaf` hands out constants only: forward passes build no
/// backward closures.
class NoGradGuard {
 public:
  NoGradGuard() { ++detail::no_grad_depth; }
  ~NoGradGuard() { --detail::no_grad_depth; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

inline bool grad_enabled() { return detail::no_grad_depth == 0; }

/// Non-owning leaf over a model parameter. The parameter must outlive the
/// graph. Frozen parameters become constants.
template <class S>
Var<S> leaf(Parameter<S>& p) {
  auto n = std::make_shared<Node<S>>();
  n->external = &p.value;
  if (p.trainable && grad_enabled()) {
    n->external_grad = &p.grad;
    n->requires_grad = true;
  }
  return Var<S>(std::move(n));
}

template <class S>
Var<S> leaf(const Parameter<S>& p) {
  auto n = std::make_shared<Node<S>>();
  n->external = &p.value;
  return Var<S>(std::move(n));
}

/// Builds an interior node. When no parent needs a gradient the node is a
/// constant and the backward closure is discarded.
template <class S>
Var<S> make_op(Matrix<S> value, std::vector<Var<S>> parents, std::function<void(Node<S>&)> bw) {
  auto n = std::make_shared<Node<S>>();
  n->own = std::move(value);
  for (const auto& p : parents) n->requires_grad = n->requires_grad || p.requires_grad();
  if (n->requires_grad) {
    n->parents.reserve(parents.size());
    for (auto& p : parents) n->parents.push_back(p.node());
    n->backward_fn = std::move(bw);
  }
  return Var<S>(std::move(n));
}

/// Reverse sweep from a 1x1 `loss`, seeding d(loss)/d(loss) = `seed`.
template <class S>
void backward(const Var<S>& loss, S seed = S(1)) {
  require_shape(loss.rows() == 1 && loss.cols() == 1, "backward: loss must be 1x1");
  if (!loss.requires_grad()) return;

  std::vector<Node<S>*> order;
  std::unordered_set<Node<S>*> seen;
  // Iterative post-order DFS.
  std::vector<std::pair<Node<S>*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<S>* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  Node<S>* root = loss.node().get();
  root->grad()(0, 0) += seed;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<S>* n = *it;
    if (n->backward_fn) n->backward_fn(*n);
  }
  // Release interior gradients so graphs reused for inspection stay small.
  for (Node<S>* n : order)
    if (n->backward_fn) n->own_grad.resize(0, 0);
}

}  // namespace llara::ad
