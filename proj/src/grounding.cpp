#include "fea/grounding.hpp"

#include <algorithm>
#include <cmath>

namespace fea {
namespace {

// Forward-mode dual number; the loss has six inputs, so six forward sweeps
// give its exact gradient.
struct Dual {
  double v = 0.0;
  double d = 0.0;
};

Dual operator+(Dual a, Dual b) { return {a.v + b.v, a.d + b.d}; }
Dual operator-(Dual a, Dual b) { return {a.v - b.v, a.d - b.d}; }
Dual operator*(Dual a, Dual b) { return {a.v * b.v, a.d * b.v + a.v * b.d}; }
Dual operator/(Dual a, Dual b) { return {a.v / b.v, (a.d * b.v - a.v * b.d) / (b.v * b.v)}; }
Dual operator-(double a, Dual b) { return {a - b.v, -b.d}; }
Dual operator-(Dual a, double b) { return {a.v - b, a.d}; }

double value(double x) { return x; }
double value(Dual x) { return x.v; }
Dual lift(double v, Dual) { return {v, 0.0}; }
double lift(double v, double) { return v; }

template <class S>
S min_of(S a, S b) { return value(a) <= value(b) ? a : b; }
template <class S>
S max_of(S a, S b) { return value(a) >= value(b) ? a : b; }
template <class S>
S abs_of(S a) { return value(a) < 0.0 ? S{} - a : a; }
template <>
double abs_of(double a) { return std::abs(a); }

// 1-D generalized IoU on [a0, a1] vs [b0, b1].
template <class S>
S giou_1d(S a0, S a1, S b0, S b1) {
  const S zero = lift(0.0, a0);
  const S inter = max_of(zero, min_of(a1, b1) - max_of(a0, b0));
  const S uni = (a1 - a0) + (b1 - b0) - inter;
  const S hull = max_of(a1, b1) - min_of(a0, b0);
  return inter / uni - (hull - uni) / hull;
}

template <class S>
S giou_box(const std::array<S, 6>& p, const Prediction& g) {
  const S zero = lift(0.0, p[0]);
  const S gx1 = lift(g[0], p[0]), gy1 = lift(g[1], p[0]), gx2 = lift(g[2], p[0]), gy2 = lift(g[3], p[0]);
  const S iw = max_of(zero, min_of(p[2], gx2) - max_of(p[0], gx1));
  const S ih = max_of(zero, min_of(p[3], gy2) - max_of(p[1], gy1));
  const S inter = iw * ih;
  const S uni = (p[2] - p[0]) * (p[3] - p[1]) + (gx2 - gx1) * (gy2 - gy1) - inter;
  const S hull = (max_of(p[2], gx2) - min_of(p[0], gx1)) * (max_of(p[3], gy2) - min_of(p[1], gy1));
  return inter / uni - (hull - uni) / hull;
}

void check_box(const Box& b) {
  for (double v : b) {
    if (!std::isfinite(v)) throw Error(ErrorKind::InvalidBox, "non-finite box");
  }
  if (b[0] > b[2] || b[1] > b[3]) throw Error(ErrorKind::InvalidBox, "box corners out of order");
}

}  // namespace

double s_iou(const Box& a, const Box& b) {
  check_box(a);
  check_box(b);
  const double iw = std::max(0.0, std::min(a[2], b[2]) - std::max(a[0], b[0]));
  const double ih = std::max(0.0, std::min(a[3], b[3]) - std::max(a[1], b[1]));
  const double inter = iw * ih;
  const double uni = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter;
  return uni > 0.0 ? inter / uni : (a == b ? 1.0 : 0.0);
}

double t_iou(const Interval& a, const Interval& b) {
  if (!std::isfinite(a[0]) || !std::isfinite(a[1]) || !std::isfinite(b[0]) || !std::isfinite(b[1]) || a[0] > a[1] ||
      b[0] > b[1]) {
    throw Error(ErrorKind::InvalidBox, "interval out of order");
  }
  const double inter = std::max(0.0, std::min(a[1], b[1]) - std::max(a[0], b[0]));
  const double uni = (a[1] - a[0]) + (b[1] - b[0]) - inter;
  return uni > 0.0 ? inter / uni : (a == b ? 1.0 : 0.0);
}

template <class S>
S grounding_loss_value(const std::array<S, 6>& pred, const Prediction& gt) {
  S l1 = lift(0.0, pred[0]);
  for (int i = 0; i < 6; ++i) l1 = l1 + abs_of(pred[i] - gt[i]);
  const S box = 1.0 - giou_box(pred, gt);
  const S span = 1.0 - giou_1d(pred[4], pred[5], lift(gt[4], pred[0]), lift(gt[5], pred[0]));
  return l1 + box + span;
}

double grounding_loss(const Prediction& pred, const Prediction& gt) {
  return grounding_loss_value<double>(pred, gt);
}

template <class T>
void register_head(ParamStore<T>& store, int d_tok, uint64_t seed) {
  const size_t dt = static_cast<size_t>(d_tok);
  store.add("head.pool", {1, dt}, Init::Uniform, seed);
  store.add("head.out_p", {dt, 4}, Init::Uniform, seed);
  store.add("head.b_p", {4}, Init::Zeros, seed);
  store.add("head.out_t", {dt, 2}, Init::Uniform, seed);
  store.add("head.b_t", {2}, Init::Zeros, seed);
}

template <class T>
nn::HeadVars<T> bind_head(Binding<T>& bind) {
  return {bind("head.pool"), bind("head.out_p"), bind("head.b_p"), bind("head.out_t"), bind("head.b_t")};
}

namespace nn {

template <class T>
Var<T> order_pairs(Var<T> raw) {
  if (raw.value().size() != 6) throw Error(ErrorKind::ShapeMismatch, "prediction must have 6 entries");
  static constexpr int kPairs[3][2] = {{0, 2}, {1, 3}, {4, 5}};
  Tensor<T> out({1, 6});
  std::array<int, 6> src{};
  for (const auto& pr : kPairs) {
    const bool swap = raw.value()[pr[0]] > raw.value()[pr[1]];
    src[pr[0]] = swap ? pr[1] : pr[0];
    src[pr[1]] = swap ? pr[0] : pr[1];
  }
  for (int i = 0; i < 6; ++i) out[i] = raw.value()[src[i]];
  return raw.tape()->record(std::move(out), {raw}, [raw, src](Tape<T>& t, int self) {
    const Tensor<T>& g = t.grad(self);
    Tensor<T>& gr = t.grad(raw.id());
    for (int i = 0; i < 6; ++i) gr[src[i]] += g[i];
  });
}

template <class T>
Var<T> ground(Var<T> tokens, const HeadVars<T>& p) {
  if (tokens.value().rank() != 2 || tokens.shape()[1] != p.pool.value().size()) {
    throw Error(ErrorKind::ShapeMismatch, "grounding head token width " + shape_str(tokens.shape()));
  }
  Var<T> pooled = sdp_attention(p.pool, tokens, tokens);
  Var<T> box = logistic(add_row(linear(pooled, p.out_p), p.b_p));
  Var<T> span = logistic(add_row(linear(pooled, p.out_t), p.b_t));
  return order_pairs(concat_cols(box, span));
}

template <class T>
Var<T> grounding_loss(Var<T> pred, const Prediction& gt) {
  if (pred.value().size() != 6) throw Error(ErrorKind::ShapeMismatch, "prediction must have 6 entries");
  std::array<double, 6> p{};
  for (int i = 0; i < 6; ++i) p[i] = static_cast<double>(pred.value()[i]);
  std::array<double, 6> grad{};
  double loss = 0.0;
  for (int k = 0; k < 6; ++k) {
    std::array<Dual, 6> x{};
    for (int i = 0; i < 6; ++i) x[i] = Dual{p[i], i == k ? 1.0 : 0.0};
    const Dual l = grounding_loss_value<Dual>(x, gt);
    grad[k] = l.d;
    loss = l.v;
  }
  return pred.tape()->record(Tensor<T>({1}, static_cast<T>(loss)), {pred}, [pred, grad](Tape<T>& t, int self) {
    const T g = t.grad(self)[0];
    Tensor<T>& gp = t.grad(pred.id());
    for (int i = 0; i < 6; ++i) gp[i] += g * static_cast<T>(grad[i]);
  });
}

}  // namespace nn

#define FEA_INSTANTIATE(T)                                                             \
  template void register_head<T>(ParamStore<T>&, int, uint64_t);                       \
  template nn::HeadVars<T> bind_head<T>(Binding<T>&);                                  \
  template nn::Var<T> nn::order_pairs<T>(nn::Var<T>);                                  \
  template nn::Var<T> nn::ground<T>(nn::Var<T>, const nn::HeadVars<T>&);               \
  template nn::Var<T> nn::grounding_loss<T>(nn::Var<T>, const Prediction&);

FEA_INSTANTIATE(float)
FEA_INSTANTIATE(double)

#undef FEA_INSTANTIATE

template double grounding_loss_value<double>(const std::array<double, 6>&, const Prediction&);

}  // namespace fea
