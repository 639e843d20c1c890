#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "secaps/errors.hpp"

namespace secaps {

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
  if (s.empty()) return "[]";
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += 'x';
    out += std::to_string(s[i]);
  }
  return out;
}

inline std::size_t shape_numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

namespace detail {

inline thread_local int no_grad_depth = 0;

// One node of the computation graph. Holds the forward value, the gradient
// accumulator, the op kind that produced it, and links to its inputs.
template <typename Scalar>
struct Node {
  Shape shape;
  std::vector<Scalar> values;
  std::vector<Scalar> grad;  // allocated iff requires_grad
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  Node() = default;
  Node(const Node&) = delete;
  Node& operator=(const Node&) = delete;

  ~Node() {
    // Release the parent chain iteratively; deep LSTM graphs would otherwise
    // unwind through recursive shared_ptr destructors.
    std::vector<std::shared_ptr<Node>> work;
    work.swap(parents);
    while (!work.empty()) {
      std::shared_ptr<Node> p = std::move(work.back());
      work.pop_back();
      if (p && p.use_count() == 1) {
        for (auto& q : p->parents) work.push_back(std::move(q));
        p->parents.clear();
      }
    }
  }
};

}  // namespace detail

// Scoped switch that stops ops from recording graph edges. Forward values
// are computed as usual.
struct NoGradGuard {
  NoGradGuard() { ++detail::no_grad_depth; }
  ~NoGradGuard() { --detail::no_grad_depth; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

inline bool grad_enabled() { return detail::no_grad_depth == 0; }

// Dense row-major tensor with optional reverse-mode gradient tracking.
// Value-semantic handle: copies share the underlying node.
//
// Ops execute eagerly; each result retains links to its inputs, so the
// expression that produced a tensor is its computation graph. backward()
// on a scalar result fills .grad() of every tracked leaf.
template <typename Scalar>
class Tensor {
 public:
  using node_type = detail::Node<Scalar>;

  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return filled(std::move(shape), Scalar(0), requires_grad);
  }

  static Tensor filled(Shape shape, Scalar value, bool requires_grad = false) {
    auto node = std::make_shared<node_type>();
    node->shape = std::move(shape);
    node->values.assign(shape_numel(node->shape), value);
    set_leaf_grad(*node, requires_grad);
    return Tensor(std::move(node));
  }

  static Tensor from_data(Shape shape, std::vector<Scalar> data,
                          bool requires_grad = false) {
    if (shape_numel(shape) != data.size()) {
      throw ShapeError("tensor: shape " + shape_str(shape) + " needs " +
                       std::to_string(shape_numel(shape)) + " values, got " +
                       std::to_string(data.size()));
    }
    for (Scalar v : data) {
      if (!std::isfinite(static_cast<double>(v))) {
        throw NumericError("tensor: non-finite value in input data");
      }
    }
    auto node = std::make_shared<node_type>();
    node->shape = std::move(shape);
    node->values = std::move(data);
    set_leaf_grad(*node, requires_grad);
    return Tensor(std::move(node));
  }

  static Tensor scalar(Scalar value, bool requires_grad = false) {
    return from_data({1}, {value}, requires_grad);
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t extent(std::size_t axis) const { return node_->shape[axis]; }
  std::size_t numel() const { return node_->values.size(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  const char* op() const { return node_->op; }
  bool is_leaf() const { return node_->parents.empty() && !node_->backward; }

  std::span<const Scalar> values() const { return node_->values; }

  // In-place access for optimizers. Restricted to leaves: mutating an
  // intermediate would silently desynchronize recorded gradients.
  std::span<Scalar> mutable_values() {
    if (!is_leaf()) {
      throw ContractError("mutable_values: only leaf tensors may be mutated");
    }
    return node_->values;
  }

  std::span<const Scalar> grad() const {
    if (!node_->requires_grad) {
      throw StateError("grad: tensor does not track gradients");
    }
    return node_->grad;
  }

  void zero_grad() {
    if (node_->requires_grad) {
      std::fill(node_->grad.begin(), node_->grad.end(), Scalar(0));
    }
  }

  Scalar item() const {
    if (numel() != 1) {
      throw ContractError("item: tensor has " + std::to_string(numel()) +
                          " elements, expected 1");
    }
    return node_->values[0];
  }

  Scalar at(std::size_t i) const { return node_->values[i]; }
  Scalar at(std::size_t i, std::size_t j) const {
    return node_->values[i * node_->shape[1] + j];
  }
  Scalar at(std::size_t i, std::size_t j, std::size_t k) const {
    return node_->values[(i * node_->shape[1] + j) * node_->shape[2] + k];
  }

  // Value copy with no graph history.
  Tensor detach() const {
    auto node = std::make_shared<node_type>();
    node->shape = node_->shape;
    node->values = node_->values;
    return Tensor(std::move(node));
  }

  // Independent leaf copy that keeps gradient tracking (used for parameter
  // snapshots).
  Tensor clone_leaf() const {
    auto node = std::make_shared<node_type>();
    node->shape = node_->shape;
    node->values = node_->values;
    set_leaf_grad(*node, node_->requires_grad);
    return Tensor(std::move(node));
  }

  void backward() const;

  node_type* node() const { return node_.get(); }
  const std::shared_ptr<node_type>& node_ptr() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<node_type> node) : node_(std::move(node)) {}

  static void set_leaf_grad(node_type& node, bool requires_grad) {
    node.requires_grad = requires_grad;
    if (requires_grad) node.grad.assign(node.values.size(), Scalar(0));
  }

  template <typename S>
  friend Tensor<S> make_op(const char* op, Shape shape, std::vector<S> values,
                           std::vector<Tensor<S>> inputs,
                           std::function<void(detail::Node<S>&)> backward);

  std::shared_ptr<node_type> node_;
};

// Assembles an op result: validates finiteness, then records inputs and the
// backward rule only when gradient tracking is live.
template <typename Scalar>
Tensor<Scalar> make_op(const char* op, Shape shape, std::vector<Scalar> values,
                       std::vector<Tensor<Scalar>> inputs,
                       std::function<void(detail::Node<Scalar>&)> backward) {
  for (Scalar v : values) {
    if (!std::isfinite(static_cast<double>(v))) {
      throw NumericError(std::string("op '") + op +
                         "' produced a non-finite value");
    }
  }
  auto node = std::make_shared<detail::Node<Scalar>>();
  node->shape = std::move(shape);
  node->values = std::move(values);
  node->op = op;
  bool track = false;
  if (grad_enabled()) {
    for (const auto& in : inputs) track = track || in.requires_grad();
  }
  if (track) {
    node->requires_grad = true;
    node->grad.assign(node->values.size(), Scalar(0));
    node->parents.reserve(inputs.size());
    for (const auto& in : inputs) node->parents.push_back(in.node_ptr());
    node->backward = std::move(backward);
  }
  return Tensor<Scalar>(std::move(node));
}

// Reverse sweep from a scalar root. Visits each reachable tracked node once
// in reverse topological order; gradients accumulate across fan-out.
template <typename Scalar>
void backward(const Tensor<Scalar>& root) {
  if (root.numel() != 1) {
    throw ContractError("backpropagate: root must be scalar, got shape " +
                        shape_str(root.shape()));
  }
  if (!root.requires_grad()) {
    throw StateError(
        "backpropagate: graph has no gradient-tracked inputs; evaluate with "
        "tracking enabled first");
  }
  using node_type = detail::Node<Scalar>;
  struct Frame {
    node_type* node;
    std::size_t next;
  };
  std::vector<node_type*> order;
  std::vector<Frame> stack;
  std::unordered_set<node_type*> seen;
  stack.push_back({root.node(), 0});
  seen.insert(root.node());
  while (!stack.empty()) {
    Frame& frame = stack.back();
    if (frame.next < frame.node->parents.size()) {
      node_type* parent = frame.node->parents[frame.next++].get();
      if (parent->requires_grad && !seen.count(parent)) {
        seen.insert(parent);
        stack.push_back({parent, 0});
      }
    } else {
      order.push_back(frame.node);
      stack.pop_back();
    }
  }
  root.node()->grad[0] += Scalar(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward) (*it)->backward(**it);
  }
}

template <typename Scalar>
void Tensor<Scalar>::backward() const {
  secaps::backward(*this);
}

namespace detail {

// Decomposes a shape around one axis: the data is a contiguous walk over
// (outer, extent, inner) with index (o * extent + e) * inner + i.
struct AxisSpan {
  std::size_t outer = 1;
  std::size_t extent = 1;
  std::size_t inner = 1;
};

inline AxisSpan axis_span(const Shape& shape, std::size_t axis) {
  if (axis >= shape.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " +
                     shape_str(shape));
  }
  AxisSpan span;
  for (std::size_t d = 0; d < axis; ++d) span.outer *= shape[d];
  span.extent = shape[axis];
  for (std::size_t d = axis + 1; d < shape.size(); ++d) span.inner *= shape[d];
  return span;
}

template <typename Scalar>
void check_same_shape(const char* op, const Tensor<Scalar>& a,
                      const Tensor<Scalar>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise ops
// ---------------------------------------------------------------------------

template <typename Scalar>
Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  detail::check_same_shape("add", a, b);
  std::vector<Scalar> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
  return make_op<Scalar>("add", a.shape(), std::move(out), {a, b},
                         [](detail::Node<Scalar>& self) {
                           for (int p = 0; p < 2; ++p) {
                             auto& parent = *self.parents[p];
                             if (!parent.requires_grad) continue;
                             for (std::size_t i = 0; i < self.grad.size(); ++i)
                               parent.grad[i] += self.grad[i];
                           }
                         });
}

template <typename Scalar>
Tensor<Scalar> sub(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  detail::check_same_shape("sub", a, b);
  std::vector<Scalar> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] - b.values()[i];
  return make_op<Scalar>("sub", a.shape(), std::move(out), {a, b},
                         [](detail::Node<Scalar>& self) {
                           auto& pa = *self.parents[0];
                           auto& pb = *self.parents[1];
                           for (std::size_t i = 0; i < self.grad.size(); ++i) {
                             if (pa.requires_grad) pa.grad[i] += self.grad[i];
                             if (pb.requires_grad) pb.grad[i] -= self.grad[i];
                           }
                         });
}

template <typename Scalar>
Tensor<Scalar> mul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  detail::check_same_shape("mul", a, b);
  std::vector<Scalar> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
  return make_op<Scalar>("mul", a.shape(), std::move(out), {a, b},
                         [](detail::Node<Scalar>& self) {
                           auto& pa = *self.parents[0];
                           auto& pb = *self.parents[1];
                           for (std::size_t i = 0; i < self.grad.size(); ++i) {
                             if (pa.requires_grad)
                               pa.grad[i] += self.grad[i] * pb.values[i];
                             if (pb.requires_grad)
                               pb.grad[i] += self.grad[i] * pa.values[i];
                           }
                         });
}

template <typename Scalar>
Tensor<Scalar> mul_const(const Tensor<Scalar>& a, Scalar c) {
  std::vector<Scalar> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * c;
  return make_op<Scalar>("mul_const", a.shape(), std::move(out), {a},
                         [c](detail::Node<Scalar>& self) {
                           auto& parent = *self.parents[0];
                           if (!parent.requires_grad) return;
                           for (std::size_t i = 0; i < self.grad.size(); ++i)
                             parent.grad[i] += self.grad[i] * c;
                         });
}

template <typename Scalar>
Tensor<Scalar> add_const(const Tensor<Scalar>& a, Scalar c) {
  std::vector<Scalar> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + c;
  return make_op<Scalar>("add_const", a.shape(), std::move(out), {a},
                         [](detail::Node<Scalar>& self) {
                           auto& parent = *self.parents[0];
                           if (!parent.requires_grad) return;
                           for (std::size_t i = 0; i < self.grad.size(); ++i)
                             parent.grad[i] += self.grad[i];
                         });
}

// x^p for a fixed exponent p.
template <typename Scalar>
Tensor<Scalar> pow_const(const Tensor<Scalar>& a, Scalar p) {
  std::vector<Scalar> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = std::pow(a.values()[i], p);
  return make_op<Scalar>("pow_const", a.shape(), std::move(out), {a},
                         [p](detail::Node<Scalar>& self) {
                           auto& parent = *self.parents[0];
                           if (!parent.requires_grad) return;
                           for (std::size_t i = 0; i < self.grad.size(); ++i)
                             parent.grad[i] += self.grad[i] * p *
                                               std::pow(parent.values[i], p - Scalar(1));
                         });
}

template <typename Scalar>
Tensor<Scalar> tanh(const Tensor<Scalar>& a) {
  std::vector<Scalar> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(a.values()[i]);
  return make_op<Scalar>("tanh", a.shape(), std::move(out), {a},
                         [](detail::Node<Scalar>& self) {
                           auto& parent = *self.parents[0];
                           if (!parent.requires_grad) return;
                           for (std::size_t i = 0; i < self.grad.size(); ++i) {
                             Scalar y = self.values[i];
                             parent.grad[i] += self.grad[i] * (Scalar(1) - y * y);
                           }
                         });
}

template <typename Scalar>
Tensor<Scalar> sigmoid(const Tensor<Scalar>& a) {
  std::vector<Scalar> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    Scalar x = a.values()[i];
    // Evaluate through exp of a negative argument on both branches.
    out[i] = x >= Scalar(0) ? Scalar(1) / (Scalar(1) + std::exp(-x))
                            : std::exp(x) / (Scalar(1) + std::exp(x));
  }
  return make_op<Scalar>("sigmoid", a.shape(), std::move(out), {a},
                         [](detail::Node<Scalar>& self) {
                           auto& parent = *self.parents[0];
                           if (!parent.requires_grad) return;
                           for (std::size_t i = 0; i < self.grad.size(); ++i) {
                             Scalar y = self.values[i];
                             parent.grad[i] += self.grad[i] * y * (Scalar(1) - y);
                           }
                         });
}

template <typename Scalar>
Tensor<Scalar> exp(const Tensor<Scalar>& a) {
  std::vector<Scalar> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(a.values()[i]);
  return make_op<Scalar>("exp", a.shape(), std::move(out), {a},
                         [](detail::Node<Scalar>& self) {
                           auto& parent = *self.parents[0];
                           if (!parent.requires_grad) return;
                           for (std::size_t i = 0; i < self.grad.size(); ++i)
                             parent.grad[i] += self.grad[i] * self.values[i];
                         });
}

template <typename Scalar>
Tensor<Scalar> log(const Tensor<Scalar>& a) {
  std::vector<Scalar> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(a.values()[i]);
  return make_op<Scalar>("log", a.shape(), std::move(out), {a},
                         [](detail::Node<Scalar>& self) {
                           auto& parent = *self.parents[0];
                           if (!parent.requires_grad) return;
                           for (std::size_t i = 0; i < self.grad.size(); ++i)
                             parent.grad[i] += self.grad[i] / parent.values[i];
                         });
}

// Clamp into [lo, hi]; gradient passes through strictly inside the interval.
template <typename Scalar>
Tensor<Scalar> clamp(const Tensor<Scalar>& a, Scalar lo, Scalar hi) {
  std::vector<Scalar> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = std::min(hi, std::max(lo, a.values()[i]));
  return make_op<Scalar>("clamp", a.shape(), std::move(out), {a},
                         [lo, hi](detail::Node<Scalar>& self) {
                           auto& parent = *self.parents[0];
                           if (!parent.requires_grad) return;
                           for (std::size_t i = 0; i < self.grad.size(); ++i) {
                             Scalar x = parent.values[i];
                             if (x > lo && x < hi) parent.grad[i] += self.grad[i];
                           }
                         });
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

// Matrix-matrix [r x s][s x t] -> [r x t], or matrix-vector [r x s][s] -> [r].
template <typename Scalar>
Tensor<Scalar> matmul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.rank() != 2 || (b.rank() != 2 && b.rank() != 1)) {
    throw ShapeError("matmul: unsupported ranks " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  const std::size_t r = a.extent(0), s = a.extent(1);
  if (b.extent(0) != s) {
    throw ShapeError("matmul: inner dimension mismatch " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
  }
  const bool vec = b.rank() == 1;
  const std::size_t t = vec ? 1 : b.extent(1);
  std::vector<Scalar> out(r * t, Scalar(0));
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t k = 0; k < s; ++k) {
      const Scalar aik = av[i * s + k];
      for (std::size_t j = 0; j < t; ++j) out[i * t + j] += aik * bv[k * t + j];
    }
  }
  Shape out_shape = vec ? Shape{r} : Shape{r, t};
  return make_op<Scalar>(
      "matmul", std::move(out_shape), std::move(out), {a, b},
      [r, s, t](detail::Node<Scalar>& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        if (pa.requires_grad) {
          // dA = G B^T
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t k = 0; k < s; ++k) {
              Scalar acc = 0;
              for (std::size_t j = 0; j < t; ++j)
                acc += self.grad[i * t + j] * pb.values[k * t + j];
              pa.grad[i * s + k] += acc;
            }
        }
        if (pb.requires_grad) {
          // dB = A^T G
          for (std::size_t k = 0; k < s; ++k)
            for (std::size_t j = 0; j < t; ++j) {
              Scalar acc = 0;
              for (std::size_t i = 0; i < r; ++i)
                acc += pa.values[i * s + k] * self.grad[i * t + j];
              pb.grad[k * t + j] += acc;
            }
        }
      });
}

template <typename Scalar>
Tensor<Scalar> transpose(const Tensor<Scalar>& a) {
  if (a.rank() != 2) {
    throw ShapeError("transpose: expected rank-2 tensor, got " +
                     shape_str(a.shape()));
  }
  const std::size_t r = a.extent(0), c = a.extent(1);
  std::vector<Scalar> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = a.values()[i * c + j];
  return make_op<Scalar>("transpose", {c, r}, std::move(out), {a},
                         [r, c](detail::Node<Scalar>& self) {
                           auto& parent = *self.parents[0];
                           if (!parent.requires_grad) return;
                           for (std::size_t i = 0; i < r; ++i)
                             for (std::size_t j = 0; j < c; ++j)
                               parent.grad[i * c + j] += self.grad[j * r + i];
                         });
}

// ---------------------------------------------------------------------------
// Shape ops
// ---------------------------------------------------------------------------

template <typename Scalar>
Tensor<Scalar> reshape(const Tensor<Scalar>& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " +
                     shape_str(shape));
  }
  std::vector<Scalar> out(a.values().begin(), a.values().end());
  return make_op<Scalar>("reshape", std::move(shape), std::move(out), {a},
                         [](detail::Node<Scalar>& self) {
                           auto& parent = *self.parents[0];
                           if (!parent.requires_grad) return;
                           for (std::size_t i = 0; i < self.grad.size(); ++i)
                             parent.grad[i] += self.grad[i];
                         });
}

// Contiguous sub-range [start, start+len) along one axis.
template <typename Scalar>
Tensor<Scalar> slice(const Tensor<Scalar>& a, std::size_t axis, std::size_t start,
                     std::size_t len) {
  auto span = detail::axis_span(a.shape(), axis);
  if (start + len > span.extent || len == 0) {
    throw ShapeError("slice: range [" + std::to_string(start) + ", " +
                     std::to_string(start + len) + ") out of bounds for axis " +
                     std::to_string(axis) + " of " + shape_str(a.shape()));
  }
  Shape out_shape = a.shape();
  out_shape[axis] = len;
  std::vector<Scalar> out(shape_numel(out_shape));
  for (std::size_t o = 0; o < span.outer; ++o)
    for (std::size_t e = 0; e < len; ++e)
      for (std::size_t i = 0; i < span.inner; ++i)
        out[(o * len + e) * span.inner + i] =
            a.values()[(o * span.extent + start + e) * span.inner + i];
  return make_op<Scalar>(
      "slice", std::move(out_shape), std::move(out), {a},
      [span, start, len](detail::Node<Scalar>& self) {
        auto& parent = *self.parents[0];
        if (!parent.requires_grad) return;
        for (std::size_t o = 0; o < span.outer; ++o)
          for (std::size_t e = 0; e < len; ++e)
            for (std::size_t i = 0; i < span.inner; ++i)
              parent.grad[(o * span.extent + start + e) * span.inner + i] +=
                  self.grad[(o * len + e) * span.inner + i];
      });
}

template <typename Scalar>
Tensor<Scalar> concat(const std::vector<Tensor<Scalar>>& parts, std::size_t axis) {
  if (parts.empty()) throw ContractError("concat: no inputs");
  Shape out_shape = parts[0].shape();
  if (axis >= out_shape.size()) {
    throw ShapeError("concat: axis " + std::to_string(axis) +
                     " out of range for shape " + shape_str(out_shape));
  }
  std::size_t total = 0;
  for (const auto& p : parts) {
    Shape s = p.shape();
    if (s.size() != out_shape.size()) {
      throw ShapeError("concat: rank mismatch " + shape_str(out_shape) + " vs " +
                       shape_str(s));
    }
    for (std::size_t d = 0; d < s.size(); ++d) {
      if (d != axis && s[d] != out_shape[d]) {
        throw ShapeError("concat: shape mismatch " + shape_str(out_shape) +
                         " vs " + shape_str(s));
      }
    }
    total += s[axis];
  }
  out_shape[axis] = total;
  auto span = detail::axis_span(out_shape, axis);
  std::vector<Scalar> out(shape_numel(out_shape));
  std::vector<std::size_t> extents;
  extents.reserve(parts.size());
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t len = p.extent(axis);
    extents.push_back(len);
    for (std::size_t o = 0; o < span.outer; ++o)
      for (std::size_t e = 0; e < len; ++e)
        for (std::size_t i = 0; i < span.inner; ++i)
          out[(o * span.extent + offset + e) * span.inner + i] =
              p.values()[(o * len + e) * span.inner + i];
    offset += len;
  }
  return make_op<Scalar>(
      "concat", std::move(out_shape), std::move(out), parts,
      [span, extents](detail::Node<Scalar>& self) {
        std::size_t offset = 0;
        for (std::size_t p = 0; p < self.parents.size(); ++p) {
          auto& parent = *self.parents[p];
          const std::size_t len = extents[p];
          if (parent.requires_grad) {
            for (std::size_t o = 0; o < span.outer; ++o)
              for (std::size_t e = 0; e < len; ++e)
                for (std::size_t i = 0; i < span.inner; ++i)
                  parent.grad[(o * len + e) * span.inner + i] +=
                      self.grad[(o * span.extent + offset + e) * span.inner + i];
          }
          offset += len;
        }
      });
}

// Repeat a size-1 axis n times.
template <typename Scalar>
Tensor<Scalar> expand(const Tensor<Scalar>& a, std::size_t axis, std::size_t n) {
  auto span = detail::axis_span(a.shape(), axis);
  if (span.extent != 1) {
    throw ShapeError("expand: axis " + std::to_string(axis) + " of " +
                     shape_str(a.shape()) + " must have extent 1");
  }
  Shape out_shape = a.shape();
  out_shape[axis] = n;
  std::vector<Scalar> out(shape_numel(out_shape));
  for (std::size_t o = 0; o < span.outer; ++o)
    for (std::size_t e = 0; e < n; ++e)
      for (std::size_t i = 0; i < span.inner; ++i)
        out[(o * n + e) * span.inner + i] = a.values()[o * span.inner + i];
  return make_op<Scalar>("expand", std::move(out_shape), std::move(out), {a},
                         [span, n](detail::Node<Scalar>& self) {
                           auto& parent = *self.parents[0];
                           if (!parent.requires_grad) return;
                           for (std::size_t o = 0; o < span.outer; ++o)
                             for (std::size_t e = 0; e < n; ++e)
                               for (std::size_t i = 0; i < span.inner; ++i)
                                 parent.grad[o * span.inner + i] +=
                                     self.grad[(o * n + e) * span.inner + i];
                         });
}

// ---------------------------------------------------------------------------
// Reductions and normalizations
// ---------------------------------------------------------------------------

template <typename Scalar>
Tensor<Scalar> sum(const Tensor<Scalar>& a, std::size_t axis) {
  auto span = detail::axis_span(a.shape(), axis);
  Shape out_shape = a.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  if (out_shape.empty()) out_shape = {1};
  std::vector<Scalar> out(span.outer * span.inner, Scalar(0));
  for (std::size_t o = 0; o < span.outer; ++o)
    for (std::size_t e = 0; e < span.extent; ++e)
      for (std::size_t i = 0; i < span.inner; ++i)
        out[o * span.inner + i] +=
            a.values()[(o * span.extent + e) * span.inner + i];
  return make_op<Scalar>("sum", std::move(out_shape), std::move(out), {a},
                         [span](detail::Node<Scalar>& self) {
                           auto& parent = *self.parents[0];
                           if (!parent.requires_grad) return;
                           for (std::size_t o = 0; o < span.outer; ++o)
                             for (std::size_t e = 0; e < span.extent; ++e)
                               for (std::size_t i = 0; i < span.inner; ++i)
                                 parent.grad[(o * span.extent + e) * span.inner + i] +=
                                     self.grad[o * span.inner + i];
                         });
}

template <typename Scalar>
Tensor<Scalar> mean(const Tensor<Scalar>& a, std::size_t axis) {
  auto extent = static_cast<Scalar>(a.extent(axis));
  return mul_const(sum(a, axis), Scalar(1) / extent);
}

template <typename Scalar>
Tensor<Scalar> sum_all(const Tensor<Scalar>& a) {
  Scalar total = 0;
  for (Scalar v : a.values()) total += v;
  return make_op<Scalar>("sum_all", {1}, {total}, {a},
                         [](detail::Node<Scalar>& self) {
                           auto& parent = *self.parents[0];
                           if (!parent.requires_grad) return;
                           for (auto& g : parent.grad) g += self.grad[0];
                         });
}

template <typename Scalar>
Tensor<Scalar> mean_all(const Tensor<Scalar>& a) {
  return mul_const(sum_all(a), Scalar(1) / static_cast<Scalar>(a.numel()));
}

// Numerically stable softmax along one axis (max subtracted per fiber).
template <typename Scalar>
Tensor<Scalar> softmax(const Tensor<Scalar>& a, std::size_t axis) {
  auto span = detail::axis_span(a.shape(), axis);
  std::vector<Scalar> out(a.numel());
  for (std::size_t o = 0; o < span.outer; ++o) {
    for (std::size_t i = 0; i < span.inner; ++i) {
      Scalar max_v = a.values()[(o * span.extent) * span.inner + i];
      for (std::size_t e = 1; e < span.extent; ++e)
        max_v = std::max(max_v,
                         a.values()[(o * span.extent + e) * span.inner + i]);
      Scalar denom = 0;
      for (std::size_t e = 0; e < span.extent; ++e) {
        const std::size_t idx = (o * span.extent + e) * span.inner + i;
        out[idx] = std::exp(a.values()[idx] - max_v);
        denom += out[idx];
      }
      for (std::size_t e = 0; e < span.extent; ++e)
        out[(o * span.extent + e) * span.inner + i] /= denom;
    }
  }
  return make_op<Scalar>(
      "softmax", a.shape(), std::move(out), {a},
      [span](detail::Node<Scalar>& self) {
        auto& parent = *self.parents[0];
        if (!parent.requires_grad) return;
        for (std::size_t o = 0; o < span.outer; ++o)
          for (std::size_t i = 0; i < span.inner; ++i) {
            Scalar dot = 0;
            for (std::size_t e = 0; e < span.extent; ++e) {
              const std::size_t idx = (o * span.extent + e) * span.inner + i;
              dot += self.grad[idx] * self.values[idx];
            }
            for (std::size_t e = 0; e < span.extent; ++e) {
              const std::size_t idx = (o * span.extent + e) * span.inner + i;
              parent.grad[idx] += self.values[idx] * (self.grad[idx] - dot);
            }
          }
      });
}

// Euclidean norm along one axis. Zero fibers get zero gradient.
template <typename Scalar>
Tensor<Scalar> l2_norm(const Tensor<Scalar>& a, std::size_t axis) {
  auto span = detail::axis_span(a.shape(), axis);
  Shape out_shape = a.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  if (out_shape.empty()) out_shape = {1};
  std::vector<Scalar> out(span.outer * span.inner, Scalar(0));
  for (std::size_t o = 0; o < span.outer; ++o)
    for (std::size_t i = 0; i < span.inner; ++i) {
      Scalar acc = 0;
      for (std::size_t e = 0; e < span.extent; ++e) {
        Scalar v = a.values()[(o * span.extent + e) * span.inner + i];
        acc += v * v;
      }
      out[o * span.inner + i] = std::sqrt(acc);
    }
  return make_op<Scalar>(
      "l2_norm", std::move(out_shape), std::move(out), {a},
      [span](detail::Node<Scalar>& self) {
        auto& parent = *self.parents[0];
        if (!parent.requires_grad) return;
        for (std::size_t o = 0; o < span.outer; ++o)
          for (std::size_t i = 0; i < span.inner; ++i) {
            const Scalar norm = self.values[o * span.inner + i];
            if (norm == Scalar(0)) continue;
            const Scalar g = self.grad[o * span.inner + i];
            for (std::size_t e = 0; e < span.extent; ++e) {
              const std::size_t idx = (o * span.extent + e) * span.inner + i;
              parent.grad[idx] += g * parent.values[idx] / norm;
            }
          }
      });
}

// ---------------------------------------------------------------------------
// Lookup
// ---------------------------------------------------------------------------

// Row gather from a [V x d] table; gradient scatter-adds into the table.
template <typename Scalar>
Tensor<Scalar> gather_rows(const Tensor<Scalar>& table,
                           const std::vector<std::size_t>& ids) {
  if (table.rank() != 2) {
    throw ShapeError("gather_rows: expected rank-2 table, got " +
                     shape_str(table.shape()));
  }
  const std::size_t rows = table.extent(0), dim = table.extent(1);
  for (std::size_t id : ids) {
    if (id >= rows) {
      throw ContractError("gather_rows: id " + std::to_string(id) +
                          " out of range for table with " + std::to_string(rows) +
                          " rows");
    }
  }
  std::vector<Scalar> out(ids.size() * dim);
  for (std::size_t r = 0; r < ids.size(); ++r)
    std::copy_n(table.values().data() + ids[r] * dim, dim, out.data() + r * dim);
  return make_op<Scalar>("gather_rows", {ids.size(), dim}, std::move(out), {table},
                         [ids, dim](detail::Node<Scalar>& self) {
                           auto& parent = *self.parents[0];
                           if (!parent.requires_grad) return;
                           for (std::size_t r = 0; r < ids.size(); ++r)
                             for (std::size_t c = 0; c < dim; ++c)
                               parent.grad[ids[r] * dim + c] +=
                                   self.grad[r * dim + c];
                         });
}

// Row r of a rank-2 tensor as a rank-1 vector.
template <typename Scalar>
Tensor<Scalar> row(const Tensor<Scalar>& a, std::size_t r) {
  if (a.rank() != 2) {
    throw ShapeError("row: expected rank-2 tensor, got " + shape_str(a.shape()));
  }
  return reshape(slice(a, 0, r, 1), {a.extent(1)});
}

// Index of the largest entry; ties resolve to the lowest index.
template <typename Scalar>
std::size_t argmax(const Tensor<Scalar>& a) {
  const auto vals = a.values();
  std::size_t best = 0;
  for (std::size_t i = 1; i < vals.size(); ++i)
    if (vals[i] > vals[best]) best = i;
  return best;
}

}  // namespace secaps
