//
// Project molfedgan - Copyright 2026 The molfedgan Authors
// SPDX-License-Identifier: Apache-2.0
//

// Tape-based reverse-mode differentiation over dense tensors.
//
// Every operation appends a node to a Tape; node ids therefore form a
// topological order. Backward rules are themselves written in terms of the
// recorded operations, so calling Tape::grad with create_graph = true leaves
// the gradient computation on the tape and a second Tape::grad over a
// function of those gradients yields second-order terms (double backprop).

#pragma once

#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "molfedgan/errors.hpp"
#include "molfedgan/tensor.hpp"

namespace molfedgan::ad {

template <typename T>
class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Tape<T> *tape, std::size_t id) : tape_(tape), id_(id) { }

  bool valid() const noexcept { return tape_ != nullptr; }
  Tape<T> &tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }
  const Tensor<T> &value() const { return tape_->value(id_); }
  const Shape &shape() const { return value().shape(); }
  bool requires_grad() const { return tape_->requires_grad(id_); }

 private:
  Tape<T> *tape_ = nullptr;
  std::size_t id_ = 0;
};

template <typename T>
class Tape {
 public:
  using GradFn = std::function<std::vector<Var<T>>(const Var<T> &)>;

  Tape() = default;
  Tape(const Tape &) = delete;
  Tape &operator=(const Tape &) = delete;

  Var<T> constant(Tensor<T> value) {
    return push(std::move(value), {}, {}, false, "constant");
  }

  Var<T> leaf(Tensor<T> value, bool requires_grad = true) {
    return push(std::move(value), {}, {}, requires_grad, "leaf");
  }

  /// Appends an operation node. The gradient closure is dropped when no input
  /// requires a gradient or when recording is disabled.
  Var<T> record(const char *op, Tensor<T> value,
                std::initializer_list<Var<T>> inputs, GradFn fn) {
    bool needs = false;
    if (grad_enabled_) {
      for (const auto &in : inputs) needs = needs || in.requires_grad();
    }
    if (!needs) return push(std::move(value), {}, {}, false, op);
    std::vector<std::size_t> ids;
    ids.reserve(inputs.size());
    for (const auto &in : inputs) ids.push_back(in.id());
    return push(std::move(value), std::move(ids), std::move(fn), true, op);
  }

  Var<T> record(const char *op, Tensor<T> value,
                const std::vector<Var<T>> &inputs, GradFn fn) {
    bool needs = false;
    if (grad_enabled_) {
      for (const auto &in : inputs) needs = needs || in.requires_grad();
    }
    if (!needs) return push(std::move(value), {}, {}, false, op);
    std::vector<std::size_t> ids;
    ids.reserve(inputs.size());
    for (const auto &in : inputs) ids.push_back(in.id());
    return push(std::move(value), std::move(ids), std::move(fn), true, op);
  }

  /// Id the next recorded node will receive.
  std::size_t next_id() const noexcept { return nodes_.size(); }
  std::size_t size() const noexcept { return nodes_.size(); }

  const Tensor<T> &value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  const char *op_name(std::size_t id) const { return nodes_[id].op; }
  bool grad_enabled() const noexcept { return grad_enabled_; }

  /// Drops every node with id >= n. Outstanding Vars past n become dangling.
  void truncate(std::size_t n) {
    while (nodes_.size() > n) nodes_.pop_back();
  }

  /// Gradients of a scalar output with respect to `wrt`. With create_graph
  /// the returned gradients are differentiable tape nodes.
  std::vector<Var<T>> grad(const Var<T> &output, std::span<const Var<T>> wrt,
                           bool create_graph);

  /// First-order gradients as plain tensors; scratch nodes are released.
  std::vector<Tensor<T>> gradients(const Var<T> &output,
                                   std::span<const Var<T>> wrt) {
    const std::size_t mark = nodes_.size();
    auto vars = grad(output, wrt, false);
    std::vector<Tensor<T>> out;
    out.reserve(vars.size());
    for (const auto &v : vars) out.push_back(v.value());
    truncate(mark);
    return out;
  }

  class NoGradGuard {
   public:
    explicit NoGradGuard(Tape &tape)
        : tape_(tape), previous_(tape.grad_enabled_) {
      tape_.grad_enabled_ = false;
    }
    ~NoGradGuard() { tape_.grad_enabled_ = previous_; }
    NoGradGuard(const NoGradGuard &) = delete;
    NoGradGuard &operator=(const NoGradGuard &) = delete;

   private:
    Tape &tape_;
    bool previous_;
  };

 private:
  struct Node {
    Tensor<T> value;
    std::vector<std::size_t> inputs;
    GradFn grad_fn;
    bool requires_grad = false;
    const char *op = "";
  };

  Var<T> push(Tensor<T> value, std::vector<std::size_t> inputs, GradFn fn,
              bool requires_grad, const char *op) {
#ifndef NDEBUG
    for (T x : value.values()) {
      if (!std::isfinite(static_cast<double>(x))) {
        throw Error(std::string("non-finite value produced by ") + op);
      }
    }
#endif
    nodes_.push_back(Node{std::move(value), std::move(inputs), std::move(fn),
                          requires_grad, op});
    return Var<T>(this, nodes_.size() - 1);
  }

  // deque keeps node references stable while gradient closures append.
  std::deque<Node> nodes_;
  bool grad_enabled_ = true;
};

// ---------------------------------------------------------------------------
// Kernels on plain tensors
// ---------------------------------------------------------------------------

namespace kernel {

inline Shape broadcast_shape(const Shape &a, const Shape &b, const char *what) {
  if (a.size() != b.size()) {
    throw ShapeMismatch(std::string(what) + ": rank mismatch " + shape_str(a)
                        + " vs " + shape_str(b));
  }
  Shape out(a.size());
  for (std::size_t d = 0; d < a.size(); ++d) {
    if (a[d] == b[d] || b[d] == 1) {
      out[d] = a[d];
    } else if (a[d] == 1) {
      out[d] = b[d];
    } else {
      throw ShapeMismatch(std::string(what) + ": " + shape_str(a) + " vs "
                          + shape_str(b));
    }
  }
  return out;
}

// Strides of `shape` expressed in the index space of `out`; broadcast axes
// get stride 0.
inline std::vector<std::size_t> broadcast_strides(const Shape &shape,
                                                  const Shape &out) {
  std::vector<std::size_t> strides(out.size(), 0);
  std::size_t s = 1;
  for (std::size_t d = shape.size(); d-- > 0;) {
    strides[d] = (shape[d] == 1 && out[d] != 1) ? 0 : s;
    s *= shape[d];
  }
  return strides;
}

template <typename T, typename F>
Tensor<T> binary(const Tensor<T> &a, const Tensor<T> &b, F f, const char *what) {
  if (a.shape() == b.shape()) {
    Tensor<T> out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[i]);
    return out;
  }
  Shape shape = broadcast_shape(a.shape(), b.shape(), what);
  Tensor<T> out(shape);
  const auto sa = broadcast_strides(a.shape(), shape);
  const auto sb = broadcast_strides(b.shape(), shape);
  const std::size_t rank = shape.size();
  std::vector<std::size_t> idx(rank, 0);
  std::size_t ia = 0, ib = 0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = f(a[ia], b[ib]);
    for (std::size_t d = rank; d-- > 0;) {
      if (++idx[d] < shape[d]) {
        ia += sa[d];
        ib += sb[d];
        break;
      }
      ia -= sa[d] * (shape[d] - 1);
      ib -= sb[d] * (shape[d] - 1);
      idx[d] = 0;
    }
  }
  return out;
}

template <typename T, typename F>
Tensor<T> unary(const Tensor<T> &x, F f) {
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  return out;
}

/// Sums `g` down to `shape` over broadcast axes.
template <typename T>
Tensor<T> reduce_to(const Tensor<T> &g, const Shape &shape) {
  if (g.shape() == shape) return g;
  broadcast_shape(shape, g.shape(), "reduce_to");
  Tensor<T> out(shape);
  const auto so = broadcast_strides(shape, g.shape());
  const Shape &gs = g.shape();
  const std::size_t rank = gs.size();
  std::vector<std::size_t> idx(rank, 0);
  std::size_t io = 0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    out[io] += g[i];
    for (std::size_t d = rank; d-- > 0;) {
      if (++idx[d] < gs[d]) {
        io += so[d];
        break;
      }
      io -= so[d] * (gs[d] - 1);
      idx[d] = 0;
    }
  }
  return out;
}

template <typename T>
Tensor<T> expand(const Tensor<T> &x, const Shape &shape) {
  if (x.shape() == shape) return x;
  Tensor<T> zeros(shape);
  return binary(x, zeros, [](T a, T) { return a; }, "expand");
}

template <typename T>
Tensor<T> matmul(const Tensor<T> &a, const Tensor<T> &b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeMismatch("matmul: " + shape_str(a.shape()) + " x "
                        + shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor<T> out(Shape{m, n});
  T *o = out.data();
  const T *pa = a.data();
  const T *pb = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    T *row = o + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = pa[i * k + p];
      if (av == T(0)) continue;
      const T *brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
    }
  }
  return out;
}

template <typename T>
Tensor<T> bmm(const Tensor<T> &a, const Tensor<T> &b) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0)
      || a.dim(2) != b.dim(1)) {
    throw ShapeMismatch("bmm: " + shape_str(a.shape()) + " x "
                        + shape_str(b.shape()));
  }
  const std::size_t batch = a.dim(0), m = a.dim(1), k = a.dim(2),
                    n = b.dim(2);
  Tensor<T> out(Shape{batch, m, n});
  for (std::size_t s = 0; s < batch; ++s) {
    const T *pa = a.data() + s * m * k;
    const T *pb = b.data() + s * k * n;
    T *o = out.data() + s * m * n;
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t p = 0; p < k; ++p) {
        const T av = pa[i * k + p];
        if (av == T(0)) continue;
        for (std::size_t j = 0; j < n; ++j) o[i * n + j] += av * pb[p * n + j];
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> transpose(const Tensor<T> &x, std::size_t ax1, std::size_t ax2) {
  if (ax1 >= x.rank() || ax2 >= x.rank()) {
    throw ShapeMismatch("transpose: axis out of range for "
                        + shape_str(x.shape()));
  }
  Shape shape = x.shape();
  std::swap(shape[ax1], shape[ax2]);
  std::vector<std::size_t> in_strides(x.rank());
  std::size_t s = 1;
  for (std::size_t d = x.rank(); d-- > 0;) {
    in_strides[d] = s;
    s *= x.dim(d);
  }
  std::swap(in_strides[ax1], in_strides[ax2]);
  Tensor<T> out(shape);
  const std::size_t rank = shape.size();
  std::vector<std::size_t> idx(rank, 0);
  std::size_t src = 0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = x[src];
    for (std::size_t d = rank; d-- > 0;) {
      if (++idx[d] < shape[d]) {
        src += in_strides[d];
        break;
      }
      src -= in_strides[d] * (shape[d] - 1);
      idx[d] = 0;
    }
  }
  return out;
}

inline void split_axis(const Shape &shape, std::size_t axis, std::size_t &outer,
                       std::size_t &inner) {
  outer = 1;
  inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= shape[d];
  for (std::size_t d = axis + 1; d < shape.size(); ++d) inner *= shape[d];
}

template <typename T>
Tensor<T> slice(const Tensor<T> &x, std::size_t axis, std::size_t start,
                std::size_t len) {
  if (axis >= x.rank() || start + len > x.dim(axis)) {
    throw ShapeMismatch("slice [" + std::to_string(start) + ", +"
                        + std::to_string(len) + ") on axis "
                        + std::to_string(axis) + " of " + shape_str(x.shape()));
  }
  Shape shape = x.shape();
  shape[axis] = len;
  Tensor<T> out(shape);
  std::size_t outer, inner;
  split_axis(x.shape(), axis, outer, inner);
  const std::size_t full = x.dim(axis);
  for (std::size_t o = 0; o < outer; ++o) {
    const T *src = x.data() + (o * full + start) * inner;
    std::copy(src, src + len * inner, out.data() + o * len * inner);
  }
  return out;
}

/// Embeds `x` into a zero tensor of shape `full` at `start` along `axis`.
template <typename T>
Tensor<T> pad_slice(const Tensor<T> &x, const Shape &full, std::size_t axis,
                    std::size_t start) {
  Tensor<T> out(full);
  std::size_t outer, inner;
  split_axis(full, axis, outer, inner);
  const std::size_t len = x.dim(axis);
  for (std::size_t o = 0; o < outer; ++o) {
    const T *src = x.data() + o * len * inner;
    std::copy(src, src + len * inner,
              out.data() + (o * full[axis] + start) * inner);
  }
  return out;
}

template <typename T>
Tensor<T> softmax(const Tensor<T> &x) {
  if (x.rank() == 0) throw ShapeMismatch("softmax of a rank-0 tensor");
  const std::size_t cols = x.dim(x.rank() - 1);
  const std::size_t rows = cols == 0 ? 0 : x.size() / cols;
  Tensor<T> out(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const T *in = x.data() + r * cols;
    T *o = out.data() + r * cols;
    T mx = in[0];
    for (std::size_t c = 1; c < cols; ++c) mx = std::max(mx, in[c]);
    T total = T(0);
    for (std::size_t c = 0; c < cols; ++c) {
      o[c] = std::exp(in[c] - mx);
      total += o[c];
    }
    for (std::size_t c = 0; c < cols; ++c) o[c] /= total;
  }
  return out;
}

template <typename T>
Tensor<T> sum_axis(const Tensor<T> &x, std::size_t axis) {
  if (axis >= x.rank()) {
    throw ShapeMismatch("sum_axis: axis " + std::to_string(axis) + " of "
                        + shape_str(x.shape()));
  }
  Shape shape = x.shape();
  shape[axis] = 1;
  return reduce_to(x, shape);
}

}  // namespace kernel

// ---------------------------------------------------------------------------
// Differentiable operations
// ---------------------------------------------------------------------------

template <typename T>
Var<T> constant_like(const Var<T> &ref, Tensor<T> value) {
  return ref.tape().constant(std::move(value));
}

template <typename T>
Var<T> detach(const Var<T> &x) {
  return x.tape().constant(x.value());
}

template <typename T>
Var<T> expand(const Var<T> &x, const Shape &shape);
template <typename T>
Var<T> reduce_to(const Var<T> &x, const Shape &shape);

template <typename T>
Var<T> reduce_to(const Var<T> &x, const Shape &shape) {
  if (x.shape() == shape) return x;
  Shape in_shape = x.shape();
  return x.tape().record(
      "reduce_to", kernel::reduce_to(x.value(), shape), {x},
      [in_shape](const Var<T> &g) {
        return std::vector<Var<T>>{expand(g, in_shape)};
      });
}

template <typename T>
Var<T> expand(const Var<T> &x, const Shape &shape) {
  if (x.shape() == shape) return x;
  Shape in_shape = x.shape();
  return x.tape().record(
      "expand", kernel::expand(x.value(), shape), {x},
      [in_shape](const Var<T> &g) {
        return std::vector<Var<T>>{reduce_to(g, in_shape)};
      });
}

template <typename T>
Var<T> neg(const Var<T> &x) {
  return x.tape().record("neg", kernel::unary(x.value(), [](T v) { return -v; }),
                         {x}, [](const Var<T> &g) {
                           return std::vector<Var<T>>{neg(g)};
                         });
}

template <typename T>
Var<T> scale(const Var<T> &x, T c) {
  return x.tape().record(
      "scale", kernel::unary(x.value(), [c](T v) { return v * c; }), {x},
      [c](const Var<T> &g) { return std::vector<Var<T>>{scale(g, c)}; });
}

template <typename T>
Var<T> add_scalar(const Var<T> &x, T c) {
  return x.tape().record(
      "add_scalar", kernel::unary(x.value(), [c](T v) { return v + c; }), {x},
      [](const Var<T> &g) { return std::vector<Var<T>>{g}; });
}

template <typename T>
Var<T> add(const Var<T> &a, const Var<T> &b) {
  Shape sa = a.shape(), sb = b.shape();
  return a.tape().record(
      "add", kernel::binary(a.value(), b.value(), std::plus<T>(), "add"),
      {a, b}, [sa, sb](const Var<T> &g) {
        return std::vector<Var<T>>{reduce_to(g, sa), reduce_to(g, sb)};
      });
}

template <typename T>
Var<T> sub(const Var<T> &a, const Var<T> &b) {
  Shape sa = a.shape(), sb = b.shape();
  return a.tape().record(
      "sub", kernel::binary(a.value(), b.value(), std::minus<T>(), "sub"),
      {a, b}, [sa, sb](const Var<T> &g) {
        return std::vector<Var<T>>{reduce_to(g, sa), reduce_to(neg(g), sb)};
      });
}

template <typename T>
Var<T> mul(const Var<T> &a, const Var<T> &b) {
  Shape sa = a.shape(), sb = b.shape();
  return a.tape().record(
      "mul", kernel::binary(a.value(), b.value(), std::multiplies<T>(), "mul"),
      {a, b}, [a, b, sa, sb](const Var<T> &g) {
        return std::vector<Var<T>>{reduce_to(mul(g, b), sa),
                                   reduce_to(mul(g, a), sb)};
      });
}

template <typename T>
Var<T> div(const Var<T> &a, const Var<T> &b) {
  Shape sa = a.shape(), sb = b.shape();
  Tape<T> &tape = a.tape();
  const std::size_t out_id = tape.next_id();
  return tape.record(
      "div", kernel::binary(a.value(), b.value(), std::divides<T>(), "div"),
      {a, b}, [&tape, out_id, b, sa, sb](const Var<T> &g) {
        Var<T> out(&tape, out_id);
        return std::vector<Var<T>>{reduce_to(div(g, b), sa),
                                   reduce_to(neg(mul(g, div(out, b))), sb)};
      });
}

template <typename T>
Var<T> operator+(const Var<T> &a, const Var<T> &b) { return add(a, b); }
template <typename T>
Var<T> operator-(const Var<T> &a, const Var<T> &b) { return sub(a, b); }
template <typename T>
Var<T> operator*(const Var<T> &a, const Var<T> &b) { return mul(a, b); }
template <typename T>
Var<T> operator/(const Var<T> &a, const Var<T> &b) { return div(a, b); }
template <typename T>
Var<T> operator-(const Var<T> &a) { return neg(a); }

template <typename T>
Var<T> square(const Var<T> &x) {
  return x.tape().record(
      "square", kernel::unary(x.value(), [](T v) { return v * v; }), {x},
      [x](const Var<T> &g) {
        return std::vector<Var<T>>{mul(g, scale(x, T(2)))};
      });
}

template <typename T>
Var<T> tanh(const Var<T> &x) {
  Tape<T> &tape = x.tape();
  const std::size_t out_id = tape.next_id();
  return tape.record(
      "tanh", kernel::unary(x.value(), [](T v) { return std::tanh(v); }), {x},
      [&tape, out_id](const Var<T> &g) {
        Var<T> y(&tape, out_id);
        return std::vector<Var<T>>{
            mul(g, add_scalar(neg(square(y)), T(1)))};
      });
}

template <typename T>
Var<T> sigmoid(const Var<T> &x) {
  Tape<T> &tape = x.tape();
  const std::size_t out_id = tape.next_id();
  return tape.record(
      "sigmoid",
      kernel::unary(x.value(),
                    [](T v) { return T(1) / (T(1) + std::exp(-v)); }),
      {x}, [&tape, out_id](const Var<T> &g) {
        Var<T> y(&tape, out_id);
        return std::vector<Var<T>>{
            mul(g, mul(y, add_scalar(neg(y), T(1))))};
      });
}

template <typename T>
Var<T> exp(const Var<T> &x) {
  Tape<T> &tape = x.tape();
  const std::size_t out_id = tape.next_id();
  return tape.record(
      "exp", kernel::unary(x.value(), [](T v) { return std::exp(v); }), {x},
      [&tape, out_id](const Var<T> &g) {
        return std::vector<Var<T>>{mul(g, Var<T>(&tape, out_id))};
      });
}

template <typename T>
Var<T> log(const Var<T> &x) {
  return x.tape().record(
      "log", kernel::unary(x.value(), [](T v) { return std::log(v); }), {x},
      [x](const Var<T> &g) { return std::vector<Var<T>>{div(g, x)}; });
}

template <typename T>
Var<T> sqrt(const Var<T> &x) {
  Tape<T> &tape = x.tape();
  const std::size_t out_id = tape.next_id();
  return tape.record(
      "sqrt", kernel::unary(x.value(), [](T v) { return std::sqrt(v); }), {x},
      [&tape, out_id](const Var<T> &g) {
        return std::vector<Var<T>>{
            div(scale(g, T(0.5)), Var<T>(&tape, out_id))};
      });
}

/// max(x, floor) elementwise; the gradient is zero where the floor is active.
template <typename T>
Var<T> clamp_min(const Var<T> &x, T floor) {
  Tensor<T> mask =
      kernel::unary(x.value(), [floor](T v) { return v > floor ? T(1) : T(0); });
  return x.tape().record(
      "clamp_min",
      kernel::unary(x.value(), [floor](T v) { return v > floor ? v : floor; }),
      {x}, [mask = std::move(mask)](const Var<T> &g) {
        return std::vector<Var<T>>{mul(g, g.tape().constant(mask))};
      });
}

template <typename T>
Var<T> reshape(const Var<T> &x, Shape shape) {
  Shape in_shape = x.shape();
  return x.tape().record("reshape", x.value().reshaped(std::move(shape)), {x},
                         [in_shape](const Var<T> &g) {
                           return std::vector<Var<T>>{reshape(g, in_shape)};
                         });
}

template <typename T>
Var<T> transpose(const Var<T> &x, std::size_t ax1, std::size_t ax2) {
  return x.tape().record("transpose", kernel::transpose(x.value(), ax1, ax2),
                         {x}, [ax1, ax2](const Var<T> &g) {
                           return std::vector<Var<T>>{transpose(g, ax1, ax2)};
                         });
}

/// Sum of all entries as a rank-0 tensor.
template <typename T>
Var<T> sum(const Var<T> &x) {
  T total = T(0);
  for (T v : x.value().values()) total += v;
  Shape in_shape = x.shape();
  return x.tape().record("sum", Tensor<T>::scalar(total), {x},
                         [in_shape](const Var<T> &g) {
                           Shape ones(in_shape.size(), 1);
                           return std::vector<Var<T>>{
                               expand(reshape(g, ones), in_shape)};
                         });
}

/// Sum along one axis, keeping it with extent 1.
template <typename T>
Var<T> sum_axis(const Var<T> &x, std::size_t axis) {
  Shape in_shape = x.shape();
  return x.tape().record("sum_axis", kernel::sum_axis(x.value(), axis), {x},
                         [in_shape](const Var<T> &g) {
                           return std::vector<Var<T>>{expand(g, in_shape)};
                         });
}

template <typename T>
Var<T> mean(const Var<T> &x) {
  return scale(sum(x), T(1) / static_cast<T>(x.value().size()));
}

template <typename T>
Var<T> l2_norm(const Var<T> &x) {
  return sqrt(sum(square(x)));
}

/// Softmax over the last axis.
template <typename T>
Var<T> softmax(const Var<T> &x) {
  Tape<T> &tape = x.tape();
  const std::size_t out_id = tape.next_id();
  const std::size_t last = x.shape().size() - 1;
  return tape.record("softmax", kernel::softmax(x.value()), {x},
                     [&tape, out_id, last](const Var<T> &g) {
                       Var<T> y(&tape, out_id);
                       return std::vector<Var<T>>{
                           mul(y, sub(g, sum_axis(mul(g, y), last)))};
                     });
}

template <typename T>
Var<T> matmul(const Var<T> &a, const Var<T> &b) {
  return a.tape().record("matmul", kernel::matmul(a.value(), b.value()), {a, b},
                         [a, b](const Var<T> &g) {
                           return std::vector<Var<T>>{
                               matmul(g, transpose(b, 0, 1)),
                               matmul(transpose(a, 0, 1), g)};
                         });
}

/// Batched matmul: [S,M,K] x [S,K,N] -> [S,M,N].
template <typename T>
Var<T> bmm(const Var<T> &a, const Var<T> &b) {
  return a.tape().record("bmm", kernel::bmm(a.value(), b.value()), {a, b},
                         [a, b](const Var<T> &g) {
                           return std::vector<Var<T>>{
                               bmm(g, transpose(b, 1, 2)),
                               bmm(transpose(a, 1, 2), g)};
                         });
}

template <typename T>
Var<T> slice(const Var<T> &x, std::size_t axis, std::size_t start,
             std::size_t len);

template <typename T>
Var<T> pad_slice(const Var<T> &x, const Shape &full, std::size_t axis,
                 std::size_t start) {
  return x.tape().record("pad_slice",
                         kernel::pad_slice(x.value(), full, axis, start), {x},
                         [axis, start, len = x.shape()[axis]](const Var<T> &g) {
                           return std::vector<Var<T>>{
                               slice(g, axis, start, len)};
                         });
}

template <typename T>
Var<T> slice(const Var<T> &x, std::size_t axis, std::size_t start,
             std::size_t len) {
  Shape full = x.shape();
  return x.tape().record("slice", kernel::slice(x.value(), axis, start, len),
                         {x}, [full, axis, start](const Var<T> &g) {
                           return std::vector<Var<T>>{
                               pad_slice(g, full, axis, start)};
                         });
}

template <typename T>
Var<T> concat(const std::vector<Var<T>> &parts, std::size_t axis) {
  if (parts.empty()) throw ShapeMismatch("concat of zero tensors");
  Shape shape = parts.front().shape();
  if (axis >= shape.size()) throw ShapeMismatch("concat: axis out of range");
  std::size_t total = 0;
  std::vector<std::size_t> extents;
  for (const auto &p : parts) {
    Shape s = p.shape();
    if (s.size() != shape.size()) {
      throw ShapeMismatch("concat: " + shape_str(shape) + " vs "
                          + shape_str(s));
    }
    for (std::size_t d = 0; d < s.size(); ++d) {
      if (d != axis && s[d] != shape[d]) {
        throw ShapeMismatch("concat: " + shape_str(shape) + " vs "
                            + shape_str(s));
      }
    }
    extents.push_back(s[axis]);
    total += s[axis];
  }
  shape[axis] = total;
  Tensor<T> out(shape);
  std::size_t outer, inner;
  kernel::split_axis(shape, axis, outer, inner);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor<T> &src = parts[k].value();
    const std::size_t len = extents[k];
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy(src.data() + o * len * inner, src.data() + (o + 1) * len * inner,
                out.data() + (o * total + offset) * inner);
    }
    offset += len;
  }
  return parts.front().tape().record(
      "concat", std::move(out), parts, [axis, extents](const Var<T> &g) {
        std::vector<Var<T>> grads;
        std::size_t start = 0;
        for (std::size_t len : extents) {
          grads.push_back(slice(g, axis, start, len));
          start += len;
        }
        return grads;
      });
}

/// Inverted dropout with a precomputed keep-mask already scaled by
/// 1/(1-ratio); see sampling.hpp for mask generation.
template <typename T>
Var<T> dropout(const Var<T> &x, const Tensor<T> &mask) {
  return mul(x, x.tape().constant(mask));
}

// ---------------------------------------------------------------------------

template <typename T>
std::vector<Var<T>> Tape<T>::grad(const Var<T> &output,
                                  std::span<const Var<T>> wrt,
                                  bool create_graph) {
  if (output.value().size() != 1) {
    throw NonScalarOutput("backward from output of shape "
                          + shape_str(output.shape()));
  }
  const std::size_t out = output.id();
  std::vector<Var<T>> grads(out + 1);
  std::optional<NoGradGuard> guard;
  if (!create_graph) guard.emplace(*this);

  grads[out] = constant(Tensor<T>(output.shape(), T(1)));
  for (std::size_t i = out + 1; i-- > 0;) {
    if (!grads[i].valid()) continue;
    const Node &node = nodes_[i];
    if (!node.requires_grad || !node.grad_fn) continue;
    std::vector<Var<T>> in_grads = node.grad_fn(grads[i]);
    for (std::size_t k = 0; k < node.inputs.size(); ++k) {
      const std::size_t id = node.inputs[k];
      if (!in_grads[k].valid() || !nodes_[id].requires_grad) continue;
      grads[id] = grads[id].valid() ? add(grads[id], in_grads[k]) : in_grads[k];
    }
  }

  std::vector<Var<T>> result;
  result.reserve(wrt.size());
  for (const auto &w : wrt) {
    if (w.id() <= out && grads[w.id()].valid()) {
      result.push_back(grads[w.id()]);
    } else {
      result.push_back(constant(Tensor<T>(w.shape())));
    }
  }
  return result;
}

}  // namespace molfedgan::ad
