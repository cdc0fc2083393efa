#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "lcz/errors.hpp"
#include "lcz/kernels.hpp"

namespace lcz {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t e : s) n *= e;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

// One node of the autodiff graph. Non-leaf nodes keep shared ownership of
// their parents plus a closure that scatters this node's gradient into them.
template <typename T>
struct TensorNode {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // sized by Graph::backward, empty until then
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backprop;
};

// Value-semantic handle to a graph node. Copies alias the same node; values
// are immutable once consumed by an op, except that leaf values may be
// rewritten between graphs (parameter updates, finite differencing).
template <typename T>
class Tensor {
 public:
  using Node = TensorNode<T>;

  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    auto n = std::make_shared<Node>();
    n->value.assign(shape_numel(shape), T(0));
    n->shape = std::move(shape);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }

  static Tensor full(Shape shape, T v) {
    Tensor t = zeros(std::move(shape));
    std::fill(t.node_->value.begin(), t.node_->value.end(), v);
    return t;
  }

  static Tensor from(Shape shape, std::vector<T> data, bool requires_grad = false) {
    if (shape_numel(shape) != data.size()) {
      throw shape_error("tensor data length " + std::to_string(data.size()) +
                        " does not match shape " + shape_str(shape));
    }
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = std::move(data);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }

  static Tensor scalar(T v) { return from({1}, {v}); }

  // Result node of an operation. Gradient tracking is pruned when no parent
  // requires it, so inference-only forwards build no graph.
  static Tensor make_op(Shape shape,
                        std::vector<std::shared_ptr<Node>> parents,
                        std::function<void(Node&)> backprop) {
    auto n = std::make_shared<Node>();
    n->value.assign(shape_numel(shape), T(0));
    n->shape = std::move(shape);
    bool track = false;
    for (const auto& p : parents) track = track || p->requires_grad;
    if (track) {
      n->requires_grad = true;
      n->parents = std::move(parents);
      n->backprop = std::move(backprop);
    }
    return Tensor(std::move(n));
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape[i]; }
  std::size_t numel() const { return node_->value.size(); }

  std::span<const T> value() const { return node_->value; }
  std::span<T> mutable_value() { return node_->value; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool b) { node_->requires_grad = b; }

  bool has_grad() const { return node_ && !node_->grad.empty(); }
  std::span<T> grad() {
    if (!has_grad()) throw shape_error("gradient not populated; run backward first");
    return node_->grad;
  }
  std::span<const T> grad() const {
    if (!has_grad()) throw shape_error("gradient not populated; run backward first");
    return node_->grad;
  }

  T item() const {
    if (numel() != 1) throw shape_error("item() requires a scalar tensor, got " + shape_str(shape()));
    return node_->value[0];
  }

  bool all_finite() const {
    for (T v : node_->value)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  void assert_finite(const char* what) const {
    if (!all_finite()) throw verify_error(std::string("non-finite values in ") + what);
  }

  std::shared_ptr<Node> node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}
  std::shared_ptr<Node> node_;
};

// Topologically ordered closure of the nodes reaching a scalar root.
// backward() zeroes every gradient in the closure, seeds the root with 1 and
// replays the recorded operations in reverse insertion order; fan-out
// contributions accumulate additively.
template <typename T>
class Graph {
 public:
  static Graph trace(const Tensor<T>& root) {
    Graph g;
    g.root_ = root.node();
    if (!g.root_) throw shape_error("backward on an undefined tensor");
    std::unordered_set<const TensorNode<T>*> seen;
    // Iterative post-order DFS; parents are visited in recorded order so the
    // resulting schedule is reproducible.
    std::vector<std::pair<TensorNode<T>*, std::size_t>> stack;
    stack.emplace_back(g.root_.get(), 0);
    seen.insert(g.root_.get());
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < node->parents.size()) {
        TensorNode<T>* p = node->parents[next++].get();
        if (seen.insert(p).second) stack.emplace_back(p, 0);
      } else {
        g.order_.push_back(node);
        stack.pop_back();
      }
    }
    return g;
  }

  std::size_t size() const { return order_.size(); }

  void backward() {
    if (root_->value.size() != 1) {
      throw shape_error("backward requires a scalar loss, got " + shape_str(root_->shape));
    }
    for (TensorNode<T>* n : order_) n->grad.assign(n->value.size(), T(0));
    root_->grad[0] = T(1);
    for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
      if ((*it)->backprop) (*it)->backprop(**it);
    }
  }

 private:
  std::shared_ptr<TensorNode<T>> root_;
  std::vector<TensorNode<T>*> order_;
};

template <typename T>
void backward(const Tensor<T>& loss) {
  Graph<T>::trace(loss).backward();
}

namespace detail {

template <typename T>
inline void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw shape_error(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                      " vs " + shape_str(b.shape()));
  }
}

}  // namespace detail

// ---- elementwise operations (exact-shape; scalar overloads below) ----

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "add");
  auto an = a.node(), bn = b.node();
  Tensor<T> out = Tensor<T>::make_op(a.shape(), {an, bn}, [an, bn](TensorNode<T>& n) {
    if (an->requires_grad) kern::axpy(n.grad.size(), T(1), n.grad.data(), an->grad.data());
    if (bn->requires_grad) kern::axpy(n.grad.size(), T(1), n.grad.data(), bn->grad.data());
  });
  auto o = out.mutable_value();
  const auto av = a.value(), bv = b.value();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] + bv[i];
  return out;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "sub");
  auto an = a.node(), bn = b.node();
  Tensor<T> out = Tensor<T>::make_op(a.shape(), {an, bn}, [an, bn](TensorNode<T>& n) {
    if (an->requires_grad) kern::axpy(n.grad.size(), T(1), n.grad.data(), an->grad.data());
    if (bn->requires_grad) kern::axpy(n.grad.size(), T(-1), n.grad.data(), bn->grad.data());
  });
  auto o = out.mutable_value();
  const auto av = a.value(), bv = b.value();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] - bv[i];
  return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "mul");
  auto an = a.node(), bn = b.node();
  Tensor<T> out = Tensor<T>::make_op(a.shape(), {an, bn}, [an, bn](TensorNode<T>& n) {
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      if (an->requires_grad) an->grad[i] += n.grad[i] * bn->value[i];
      if (bn->requires_grad) bn->grad[i] += n.grad[i] * an->value[i];
    }
  });
  auto o = out.mutable_value();
  const auto av = a.value(), bv = b.value();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] * bv[i];
  return out;
}

// Scalar broadcast variants.
template <typename T>
Tensor<T> add(const Tensor<T>& a, T c) {
  auto an = a.node();
  Tensor<T> out = Tensor<T>::make_op(a.shape(), {an}, [an](TensorNode<T>& n) {
    kern::axpy(n.grad.size(), T(1), n.grad.data(), an->grad.data());
  });
  auto o = out.mutable_value();
  const auto av = a.value();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] + c;
  return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T c) {
  auto an = a.node();
  Tensor<T> out = Tensor<T>::make_op(a.shape(), {an}, [an, c](TensorNode<T>& n) {
    kern::axpy(n.grad.size(), c, n.grad.data(), an->grad.data());
  });
  auto o = out.mutable_value();
  const auto av = a.value();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] * c;
  return out;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  auto an = a.node();
  Tensor<T> out = Tensor<T>::make_op(a.shape(), {an}, [an](TensorNode<T>& n) {
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      if (an->value[i] > T(0)) an->grad[i] += n.grad[i];
    }
  });
  auto o = out.mutable_value();
  const auto av = a.value();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] > T(0) ? av[i] : T(0);
  return out;
}

// Sum of all elements, as a scalar tensor.
template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  auto an = a.node();
  Tensor<T> out = Tensor<T>::make_op({1}, {an}, [an](TensorNode<T>& n) {
    const T g = n.grad[0];
    for (std::size_t i = 0; i < an->grad.size(); ++i) an->grad[i] += g;
  });
  out.mutable_value()[0] = kern::sum(a.numel(), a.value().data());
  return out;
}

// [M,K] x [K,N] -> [M,N]
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw shape_error("matmul expects rank-2 tensors, got " + shape_str(a.shape()) +
                      " and " + shape_str(b.shape()));
  }
  const std::size_t M = a.dim(0), K = a.dim(1), N = b.dim(1);
  if (b.dim(0) != K) {
    throw shape_error("matmul: inner dimensions disagree, " + shape_str(a.shape()) +
                      " vs " + shape_str(b.shape()));
  }
  auto an = a.node(), bn = b.node();
  Tensor<T> out = Tensor<T>::make_op({M, N}, {an, bn}, [an, bn, M, K, N](TensorNode<T>& n) {
    if (an->requires_grad) {
      kern::gemm_abt_acc(M, N, K, n.grad.data(), bn->value.data(), an->grad.data());
    }
    if (bn->requires_grad) {
      kern::gemm_atb_acc(K, M, N, an->value.data(), n.grad.data(), bn->grad.data());
    }
  });
  kern::gemm_acc(M, K, N, a.value().data(), b.value().data(), out.mutable_value().data());
  return out;
}

// Central-difference gradient verification. Returns the max over coordinates
// of |analytic - cd| / max(|analytic|, |cd|, 1e-12). The function must be
// deterministic; this is probed with two identical forward evaluations.
template <typename T>
T finite_difference_check(const std::function<Tensor<T>(Tensor<T>&)>& fn,
                          Tensor<T> x, T eps) {
  if (!(eps > T(0))) throw config_error("finite_difference_check: eps must be positive");

  const T f0 = fn(x).item();
  const T f1 = fn(x).item();
  if (!(f0 == f1)) {
    throw verify_error("finite_difference_check: function is not deterministic "
                       "(two identical forward calls differ)");
  }

  x.set_requires_grad(true);
  Tensor<T> loss = fn(x);
  backward(loss);
  std::vector<T> analytic(x.grad().begin(), x.grad().end());
  x.set_requires_grad(false);

  auto xv = x.mutable_value();
  T worst = 0;
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const T saved = xv[i];
    xv[i] = saved + eps;
    const T fp = fn(x).item();
    xv[i] = saved - eps;
    const T fm = fn(x).item();
    xv[i] = saved;
    const T cd = (fp - fm) / (2 * eps);
    const T denom = std::max({std::abs(analytic[i]), std::abs(cd), T(1e-12)});
    worst = std::max(worst, std::abs(analytic[i] - cd) / denom);
  }
  x.set_requires_grad(true);
  return worst;
}

}  // namespace lcz
