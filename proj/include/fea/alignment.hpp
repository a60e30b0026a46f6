#pragma once

#include <array>
#include <cstdint>

#include "fea/autograd.hpp"
#include "fea/params.hpp"

namespace fea {

// A grounding query: the given half of (box, interval) is embedded, the
// other half enters as zeros.
struct CoordinateQuery {
  std::array<double, 4> p{};  // x1 y1 x2 y2 in [0,1]
  std::array<double, 2> t{};  // t0 t1 in [0,1]
  bool p_given = false;
  bool t_given = false;
};

void validate(const CoordinateQuery& q);

inline constexpr double kAlphaInit = 0.1;

template <class T>
void register_alignment(ParamStore<T>& store, int d, int d_tok, uint64_t seed);

namespace nn {

template <class T>
struct MlpVars {
  Var<T> w1, b1, w2, b2;
};

// Row-wise MLP2: [K, d] -> [K, d_tok].
template <class T>
Var<T> project_tokens(Var<T> f_st, const MlpVars<T>& p);

// v~ = p w_p + t w_t as a [1, d_tok] row; masked halves contribute zero.
template <class T>
Var<T> coord_token(const CoordinateQuery& q, Var<T> w_p, Var<T> w_t);

// v~_st[i] = v_st[i] + alpha v~ for every token row.
template <class T>
Var<T> embed_coordinates(Var<T> v_st, Var<T> coord, Var<T> alpha);

}  // namespace nn

template <class T>
nn::MlpVars<T> bind_projector(Binding<T>& bind);

}  // namespace fea
