#include "fea/alignment.hpp"

namespace fea {

void validate(const CoordinateQuery& q) {
  if (q.p_given) {
    for (double v : q.p) {
      if (!(v >= 0.0 && v <= 1.0)) throw Error(ErrorKind::InvalidCoordinate, "box component outside [0,1]");
    }
    if (!(q.p[0] < q.p[2] && q.p[1] < q.p[3])) throw Error(ErrorKind::InvalidCoordinate, "box not ordered");
  }
  if (q.t_given) {
    for (double v : q.t) {
      if (!(v >= 0.0 && v <= 1.0)) throw Error(ErrorKind::InvalidCoordinate, "interval outside [0,1]");
    }
    if (!(q.t[0] < q.t[1])) throw Error(ErrorKind::InvalidCoordinate, "interval not ordered");
  }
}

template <class T>
void register_alignment(ParamStore<T>& store, int d, int d_tok, uint64_t seed) {
  const size_t dd = static_cast<size_t>(d), dt = static_cast<size_t>(d_tok);
  store.add("projector.w1", {dd, dt}, Init::Uniform, seed);
  store.add("projector.b1", {dt}, Init::Zeros, seed);
  store.add("projector.w2", {dt, dt}, Init::Uniform, seed);
  store.add("projector.b2", {dt}, Init::Zeros, seed);
  store.add("coord.w_p", {4, dt}, Init::Uniform, seed);
  store.add("coord.w_t", {2, dt}, Init::Uniform, seed);
  store.add("coord.alpha", {1}, Init::Constant, seed, kAlphaInit);
}

template <class T>
nn::MlpVars<T> bind_projector(Binding<T>& bind) {
  return {bind("projector.w1"), bind("projector.b1"), bind("projector.w2"), bind("projector.b2")};
}

namespace nn {

template <class T>
Var<T> project_tokens(Var<T> f_st, const MlpVars<T>& p) {
  return mlp2(f_st, p.w1, p.b1, p.w2, p.b2);
}

template <class T>
Var<T> coord_token(const CoordinateQuery& q, Var<T> w_p, Var<T> w_t) {
  validate(q);
  if (w_p.shape().size() != 2 || w_p.shape()[0] != 4 || w_t.shape().size() != 2 || w_t.shape()[0] != 2 ||
      w_p.shape()[1] != w_t.shape()[1]) {
    throw Error(ErrorKind::ShapeMismatch, "coordinate maps must be [4, d_tok] and [2, d_tok]");
  }
  Tape<T>& tape = *w_p.tape();
  Tensor<T> p({1, 4});
  Tensor<T> t({1, 2});
  if (q.p_given)
    for (int i = 0; i < 4; ++i) p[i] = static_cast<T>(q.p[i]);
  if (q.t_given)
    for (int i = 0; i < 2; ++i) t[i] = static_cast<T>(q.t[i]);
  return add(linear(tape.constant(std::move(p)), w_p), linear(tape.constant(std::move(t)), w_t));
}

template <class T>
Var<T> embed_coordinates(Var<T> v_st, Var<T> coord, Var<T> alpha) {
  if (coord.value().size() != v_st.shape()[1]) {
    throw Error(ErrorKind::ShapeMismatch, "coordinate token width " + shape_str(coord.shape()) + " vs tokens " +
                                              shape_str(v_st.shape()));
  }
  return add_row(v_st, scale_by(coord, alpha));
}

}  // namespace nn

#define FEA_INSTANTIATE(T)                                                                         \
  template void register_alignment<T>(ParamStore<T>&, int, int, uint64_t);                         \
  template nn::MlpVars<T> bind_projector<T>(Binding<T>&);                                          \
  template nn::Var<T> nn::project_tokens<T>(nn::Var<T>, const nn::MlpVars<T>&);                    \
  template nn::Var<T> nn::coord_token<T>(const CoordinateQuery&, nn::Var<T>, nn::Var<T>);          \
  template nn::Var<T> nn::embed_coordinates<T>(nn::Var<T>, nn::Var<T>, nn::Var<T>);

FEA_INSTANTIATE(float)
FEA_INSTANTIATE(double)

#undef FEA_INSTANTIATE

}  // namespace fea
