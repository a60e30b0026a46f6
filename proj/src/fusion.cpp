#include "fea/fusion.hpp"

namespace fea {
namespace nn {

template <class T>
Var<T> cross_attention(Var<T> primary, Var<T> secondary, const CrossAttentionVars<T>& p) {
  if (primary.value().rank() != 2 || secondary.value().rank() != 2 || primary.shape()[1] != secondary.shape()[1]) {
    throw Error(ErrorKind::ShapeMismatch, "cross attention " + shape_str(primary.shape()) + " vs " +
                                              shape_str(secondary.shape()));
  }
  Var<T> q = linear(primary, p.attn.w_q);
  Var<T> k = linear(secondary, p.attn.w_k);
  Var<T> v = linear(secondary, p.attn.w_v);
  return layer_norm(add(primary, sdp_attention(q, k, v)), p.gamma, p.beta);
}

template <class T>
Var<T> cross_attn_spatial(Var<T> f_vs, Var<T> f_es, const CrossAttentionVars<T>& p) {
  if (f_vs.shape() != f_es.shape()) {
    throw Error(ErrorKind::ShapeMismatch, "spatial fusion needs equal token grids: " + shape_str(f_vs.shape()) +
                                              " vs " + shape_str(f_es.shape()));
  }
  return cross_attention(f_vs, f_es, p);
}

template <class T>
Var<T> cross_attn_temporal(Var<T> f_et, Var<T> f_vt, const CrossAttentionVars<T>& p) {
  return cross_attention(f_et, f_vt, p);
}

template <class T>
Var<T> self_attn_match(Var<T> f_s, Var<T> f_t, const AttentionVars<T>& p, const Var<T>* post_norm_gamma,
                       const Var<T>* post_norm_beta) {
  if (f_s.value().rank() != 2 || f_t.value().rank() != 2 || f_s.shape()[1] != f_t.shape()[1]) {
    throw Error(ErrorKind::ShapeMismatch, "matching " + shape_str(f_s.shape()) + " vs " + shape_str(f_t.shape()));
  }
  const size_t n = f_s.shape()[0], total = n + f_t.shape()[0];
  Var<T> f = concat_rows(f_s, f_t);
  Var<T> mixed = sdp_attention(linear(f, p.w_q), linear(f, p.w_k), linear(f, p.w_v));
  if (post_norm_gamma != nullptr) mixed = layer_norm(add(f, mixed), *post_norm_gamma, *post_norm_beta);
  return concat_rows(slice_rows(mixed, 0, n), slice_rows(mixed, n, total));
}

}  // namespace nn

inline constexpr double kMatchQkGain = 2.0;

template <class T>
void register_fusion(ParamStore<T>& store, int d, bool post_norm, uint64_t seed) {
  const size_t dd = static_cast<size_t>(d);
  for (const char* prefix : {"fusion_spatial", "fusion_temporal"}) {
    const std::string p(prefix);
    store.add(p + ".w_q", {dd, dd}, Init::Uniform, seed);
    store.add(p + ".w_k", {dd, dd}, Init::Uniform, seed);
    store.add(p + ".w_v", {dd, dd}, Init::Uniform, seed);
    store.add(p + ".ln.gamma", {dd}, Init::Ones, seed);
    store.add(p + ".ln.beta", {dd}, Init::Zeros, seed);
  }
  // Near-identity start: each token first attends mostly to itself, so the
  // un-residualized matching layer does not wash out token identity.
  store.add("matching.w_q", {dd, dd}, Init::Identity, seed, kMatchQkGain);
  store.add("matching.w_k", {dd, dd}, Init::Identity, seed, kMatchQkGain);
  store.add("matching.w_v", {dd, dd}, Init::Identity, seed, 1.0);
  if (post_norm) {
    store.add("matching.ln.gamma", {dd}, Init::Ones, seed);
    store.add("matching.ln.beta", {dd}, Init::Zeros, seed);
  }
}

template <class T>
nn::AttentionVars<T> bind_attention(Binding<T>& bind, const std::string& prefix) {
  return {bind(prefix + ".w_q"), bind(prefix + ".w_k"), bind(prefix + ".w_v")};
}

template <class T>
nn::CrossAttentionVars<T> bind_cross(Binding<T>& bind, const std::string& prefix) {
  return {bind_attention(bind, prefix), bind(prefix + ".ln.gamma"), bind(prefix + ".ln.beta")};
}

#define FEA_INSTANTIATE(T)                                                                                   \
  template nn::Var<T> nn::cross_attention<T>(nn::Var<T>, nn::Var<T>, const nn::CrossAttentionVars<T>&);      \
  template nn::Var<T> nn::cross_attn_spatial<T>(nn::Var<T>, nn::Var<T>, const nn::CrossAttentionVars<T>&);   \
  template nn::Var<T> nn::cross_attn_temporal<T>(nn::Var<T>, nn::Var<T>, const nn::CrossAttentionVars<T>&);  \
  template nn::Var<T> nn::self_attn_match<T>(nn::Var<T>, nn::Var<T>, const nn::AttentionVars<T>&,            \
                                             const nn::Var<T>*, const nn::Var<T>*);                          \
  template void register_fusion<T>(ParamStore<T>&, int, bool, uint64_t);                                     \
  template nn::AttentionVars<T> bind_attention<T>(Binding<T>&, const std::string&);                          \
  template nn::CrossAttentionVars<T> bind_cross<T>(Binding<T>&, const std::string&);

FEA_INSTANTIATE(float)
FEA_INSTANTIATE(double)

#undef FEA_INSTANTIATE

}  // namespace fea
