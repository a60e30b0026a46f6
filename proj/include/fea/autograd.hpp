#pragma once

// Reverse-mode tape and the differentiable primitives everything else is
// built from. Each primitive records its output value plus a closure that
// pushes the output gradient back to its inputs; nodes whose inputs are all
// constants record no closure, so frozen sub-graphs cost a forward pass only.
//
// A tape is owned by one worker. Parallelism happens across tapes.

#include <cmath>
#include <deque>
#include <functional>
#include <vector>

#include "fea/tensor.hpp"

namespace fea::nn {

template <class T>
class Tape;

template <class T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, int id) : tape_(tape), id_(id) {}

  const Tensor<T>& value() const { return tape_->value(id_); }
  const Shape& shape() const { return value().shape(); }
  Tape<T>* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape<T>* tape_ = nullptr;
  int id_ = -1;
};

template <class T>
class Tape {
 public:
  using Backward = std::function<void(Tape&, int self)>;

  Var<T> constant(Tensor<T> value) { return push(std::move(value), nullptr, false); }
  Var<T> variable(Tensor<T> value) { return push(std::move(value), nullptr, true); }

  // Records an op output. The closure is dropped when no input needs a gradient.
  Var<T> record(Tensor<T> value, std::initializer_list<Var<T>> inputs, Backward backward) {
    bool rg = false;
    for (const auto& v : inputs) rg = rg || nodes_[v.id()].requires_grad;
    return push(std::move(value), rg ? std::move(backward) : nullptr, rg);
  }
  Var<T> record(Tensor<T> value, const std::vector<Var<T>>& inputs, Backward backward) {
    bool rg = false;
    for (const auto& v : inputs) rg = rg || nodes_[v.id()].requires_grad;
    return push(std::move(value), rg ? std::move(backward) : nullptr, rg);
  }

  const Tensor<T>& value(int id) const { return nodes_[id].value; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }

  // Gradient buffer of a node, zero-initialised on first touch.
  Tensor<T>& grad(int id) {
    Node& n = nodes_[id];
    if (n.grad.size() != n.value.size()) n.grad = Tensor<T>(n.value.shape());
    return n.grad;
  }
  bool has_grad(int id) const { return nodes_[id].grad.size() == nodes_[id].value.size(); }

  // Seeds d(root)/d(root) = 1 for a single-element root and runs every
  // recorded closure in reverse order.
  void backward(Var<T> root) {
    if (root.value().size() != 1) throw Error(ErrorKind::ShapeMismatch, "backward needs a scalar root");
    grad(root.id())[0] = T{1};
    for (int id = root.id(); id >= 0; --id) {
      Node& n = nodes_[id];
      if (n.backward && has_grad(id)) n.backward(*this, id);
    }
  }

  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    Backward backward;
    bool requires_grad = false;
  };

  Var<T> push(Tensor<T> value, Backward backward, bool rg) {
    nodes_.push_back(Node{std::move(value), Tensor<T>(), std::move(backward), rg});
    return Var<T>(this, static_cast<int>(nodes_.size() - 1));
  }

  std::deque<Node> nodes_;  // deque: value() references survive later pushes
};

// Gradient sink helper for closures: true when `v` wants a gradient.
template <class T>
bool wants_grad(Tape<T>& tape, const Var<T>& v) {
  return tape.requires_grad(v.id());
}

inline constexpr double kGeluScale = 0.7978845608;
inline constexpr double kGeluCubic = 0.044715;

template <class T>
T gelu_scalar(T x) {
  const T u = T(kGeluScale) * (x + T(kGeluCubic) * x * x * x);
  return T(0.5) * x * (T(1) + std::tanh(u));
}

// y = x W. x [n, d_in], W [d_in, d_out].
template <class T>
Var<T> linear(Var<T> x, Var<T> w);
template <class T>
Var<T> add(Var<T> a, Var<T> b);
// Elementwise product of equal-shape tensors.
template <class T>
Var<T> mul(Var<T> a, Var<T> b);
// x [n, d] + b broadcast over rows; b has d elements.
template <class T>
Var<T> add_row(Var<T> x, Var<T> b);
template <class T>
Var<T> scale(Var<T> x, T s);
// alpha is a single-element variable.
template <class T>
Var<T> scale_by(Var<T> x, Var<T> alpha);
template <class T>
Var<T> gelu(Var<T> x);
template <class T>
Var<T> logistic(Var<T> x);
template <class T>
Var<T> softmax_rows(Var<T> x);
template <class T>
Var<T> layer_norm(Var<T> x, Var<T> gamma, Var<T> beta, T eps = T(1e-5));
// softmax(q k^T / sqrt(d)) v
template <class T>
Var<T> sdp_attention(Var<T> q, Var<T> k, Var<T> v);
// linear -> GELU -> linear, biases broadcast over rows.
template <class T>
Var<T> mlp2(Var<T> x, Var<T> w1, Var<T> b1, Var<T> w2, Var<T> b2);

template <class T>
Var<T> concat_rows(Var<T> a, Var<T> b);
template <class T>
Var<T> concat_cols(Var<T> a, Var<T> b);
template <class T>
Var<T> slice_rows(Var<T> x, size_t begin, size_t end);
// Stacks k tensors of identical shape S into [k, S...].
template <class T>
Var<T> stack(const std::vector<Var<T>>& parts);
template <class T>
Var<T> sum(Var<T> x);
// Mean over rows of a 2-D tensor: [n, d] -> [1, d].
template <class T>
Var<T> mean_rows(Var<T> x);
// Mean of squared differences against a constant target of the same size.
template <class T>
Var<T> mse(Var<T> x, const Tensor<T>& target);

// Plain (non-recording) forward helpers shared with tests and oracles.
template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

}  // namespace fea::nn
