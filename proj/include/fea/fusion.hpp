#pragma once

#include <cstdint>
#include <string>

#include "fea/autograd.hpp"
#include "fea/params.hpp"

namespace fea::nn {

template <class T>
struct AttentionVars {
  Var<T> w_q, w_k, w_v;
};

template <class T>
struct CrossAttentionVars {
  AttentionVars<T> attn;
  Var<T> gamma, beta;
};

// LayerNorm(primary + softmax(q k^T / sqrt d) v) with q from the primary
// branch and k, v from the secondary one.
template <class T>
Var<T> cross_attention(Var<T> primary, Var<T> secondary, const CrossAttentionVars<T>& p);

// Frame spatial tokens are primary; both modalities share the patch grid so
// the token counts must agree.
template <class T>
Var<T> cross_attn_spatial(Var<T> f_vs, Var<T> f_es, const CrossAttentionVars<T>& p);

// Event temporal tokens are primary; frame step count may differ from the
// event bin count.
template <class T>
Var<T> cross_attn_temporal(Var<T> f_et, Var<T> f_vt, const CrossAttentionVars<T>& p);

// f = [f_s; f_t]; one self-attention over f; split at N and re-join. No
// residual or norm unless `post_norm` carries gamma/beta (ablation variant).
template <class T>
Var<T> self_attn_match(Var<T> f_s, Var<T> f_t, const AttentionVars<T>& p, const Var<T>* post_norm_gamma = nullptr,
                       const Var<T>* post_norm_beta = nullptr);

}  // namespace fea::nn

namespace fea {

template <class T>
void register_fusion(ParamStore<T>& store, int d, bool post_norm, uint64_t seed);

template <class T>
nn::CrossAttentionVars<T> bind_cross(Binding<T>& bind, const std::string& prefix);
template <class T>
nn::AttentionVars<T> bind_attention(Binding<T>& bind, const std::string& prefix);

}  // namespace fea
