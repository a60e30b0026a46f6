#pragma once

#include <array>
#include <cstdint>

#include "fea/autograd.hpp"
#include "fea/params.hpp"

namespace fea {

using Box = std::array<double, 4>;       // x1 y1 x2 y2
using Interval = std::array<double, 2>;  // t0 t1
using Prediction = std::array<double, 6>;  // box then interval

// Intersection over union; 0 when disjoint or touching. Throws InvalidBox
// for unordered or non-finite inputs.
double s_iou(const Box& a, const Box& b);
double t_iou(const Interval& a, const Interval& b);

// Sum of |pred - gt| over the six coordinates + (1 - GIoU(box)) +
// (1 - GIoU(interval)). Generalized IoU keeps a gradient when the
// prediction and target do not overlap.
template <class S>
S grounding_loss_value(const std::array<S, 6>& pred, const Prediction& gt);

double grounding_loss(const Prediction& pred, const Prediction& gt);

template <class T>
void register_head(ParamStore<T>& store, int d_tok, uint64_t seed);

namespace nn {

template <class T>
struct HeadVars {
  Var<T> pool, out_p, b_p, out_t, b_t;
};

// Attention-pools the tokens with a learned query, then two linear maps and
// a logistic squash. Returns [1, 6] with x1<=x2, y1<=y2, t0<=t1.
template <class T>
Var<T> ground(Var<T> tokens, const HeadVars<T>& p);

// Swaps each (lo, hi) coordinate pair of a [1, 6] prediction into order.
template <class T>
Var<T> order_pairs(Var<T> raw);

template <class T>
Var<T> grounding_loss(Var<T> pred, const Prediction& gt);

}  // namespace nn

template <class T>
nn::HeadVars<T> bind_head(Binding<T>& bind);

}  // namespace fea
