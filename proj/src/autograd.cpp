#include "fea/autograd.hpp"

#include <algorithm>
#include <cmath>

#include "fea/kernels.hpp"

namespace fea::nn {
namespace {

template <class T>
void require_2d(const Var<T>& v, const char* op) {
  if (v.value().rank() != 2) {
    throw Error(ErrorKind::ShapeMismatch, std::string(op) + ": expected a 2-D tensor, got " + shape_str(v.shape()));
  }
}

template <class T>
void accumulate(Tensor<T>& dst, const Tensor<T>& src) {
  for (size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw Error(ErrorKind::ShapeMismatch, "matmul " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  Tensor<T> c({a.dim(0), b.dim(1)});
  kernels::gemm_nn_serial(a.data(), b.data(), c.data(), a.dim(0), a.dim(1), b.dim(1));
  return c;
}

template <class T>
Var<T> linear(Var<T> x, Var<T> w) {
  require_2d(x, "linear");
  require_2d(w, "linear");
  Tape<T>& tape = *x.tape();
  const size_t n = x.shape()[0], k = x.shape()[1], m = w.shape()[1];
  return tape.record(matmul(x.value(), w.value()), {x, w}, [x, w, n, k, m](Tape<T>& t, int self) {
    const Tensor<T>& g = t.grad(self);
    if (wants_grad(t, x)) kernels::gemm_nt_serial(g.data(), w.value().data(), t.grad(x.id()).data(), n, m, k);
    if (wants_grad(t, w)) kernels::gemm_tn_serial(x.value().data(), g.data(), t.grad(w.id()).data(), n, k, m);
  });
}

template <class T>
Var<T> add(Var<T> a, Var<T> b) {
  if (a.shape() != b.shape()) {
    throw Error(ErrorKind::ShapeMismatch, "add " + shape_str(a.shape()) + " + " + shape_str(b.shape()));
  }
  Tensor<T> out = a.value();
  accumulate(out, b.value());
  return a.tape()->record(std::move(out), {a, b}, [a, b](Tape<T>& t, int self) {
    const Tensor<T>& g = t.grad(self);
    if (wants_grad(t, a)) accumulate(t.grad(a.id()), g);
    if (wants_grad(t, b)) accumulate(t.grad(b.id()), g);
  });
}

template <class T>
Var<T> mul(Var<T> a, Var<T> b) {
  if (a.shape() != b.shape()) {
    throw Error(ErrorKind::ShapeMismatch, "mul " + shape_str(a.shape()) + " * " + shape_str(b.shape()));
  }
  Tensor<T> out = a.value();
  for (size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return a.tape()->record(std::move(out), {a, b}, [a, b](Tape<T>& t, int self) {
    const Tensor<T>& g = t.grad(self);
    if (wants_grad(t, a)) {
      Tensor<T>& ga = t.grad(a.id());
      for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * b.value()[i];
    }
    if (wants_grad(t, b)) {
      Tensor<T>& gb = t.grad(b.id());
      for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * a.value()[i];
    }
  });
}

template <class T>
Var<T> add_row(Var<T> x, Var<T> b) {
  require_2d(x, "add_row");
  const size_t n = x.shape()[0], d = x.shape()[1];
  if (b.value().size() != d) {
    throw Error(ErrorKind::ShapeMismatch, "add_row " + shape_str(x.shape()) + " + " + shape_str(b.shape()));
  }
  Tensor<T> out = x.value();
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j < d; ++j) out[i * d + j] += b.value()[j];
  return x.tape()->record(std::move(out), {x, b}, [x, b, n, d](Tape<T>& t, int self) {
    const Tensor<T>& g = t.grad(self);
    if (wants_grad(t, x)) accumulate(t.grad(x.id()), g);
    if (wants_grad(t, b)) {
      Tensor<T>& gb = t.grad(b.id());
      for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < d; ++j) gb[j] += g[i * d + j];
    }
  });
}

template <class T>
Var<T> scale(Var<T> x, T s) {
  Tensor<T> out = x.value();
  for (auto& v : out.values()) v *= s;
  return x.tape()->record(std::move(out), {x}, [x, s](Tape<T>& t, int self) {
    const Tensor<T>& g = t.grad(self);
    Tensor<T>& gx = t.grad(x.id());
    for (size_t i = 0; i < g.size(); ++i) gx[i] += s * g[i];
  });
}

template <class T>
Var<T> scale_by(Var<T> x, Var<T> alpha) {
  if (alpha.value().size() != 1) throw Error(ErrorKind::ShapeMismatch, "scale_by needs a scalar");
  const T a = alpha.value()[0];
  Tensor<T> out = x.value();
  for (auto& v : out.values()) v *= a;
  return x.tape()->record(std::move(out), {x, alpha}, [x, alpha](Tape<T>& t, int self) {
    const Tensor<T>& g = t.grad(self);
    const T a = alpha.value()[0];
    if (wants_grad(t, x)) {
      Tensor<T>& gx = t.grad(x.id());
      for (size_t i = 0; i < g.size(); ++i) gx[i] += a * g[i];
    }
    if (wants_grad(t, alpha)) {
      T acc = 0;
      for (size_t i = 0; i < g.size(); ++i) acc += g[i] * x.value()[i];
      t.grad(alpha.id())[0] += acc;
    }
  });
}

template <class T>
Var<T> gelu(Var<T> x) {
  Tensor<T> out = x.value();
  for (auto& v : out.values()) v = gelu_scalar(v);
  return x.tape()->record(std::move(out), {x}, [x](Tape<T>& t, int self) {
    const Tensor<T>& g = t.grad(self);
    Tensor<T>& gx = t.grad(x.id());
    const T c = T(kGeluScale), a = T(kGeluCubic);
    for (size_t i = 0; i < g.size(); ++i) {
      const T xv = x.value()[i];
      const T th = std::tanh(c * (xv + a * xv * xv * xv));
      const T d = T(0.5) * (T(1) + th) + T(0.5) * xv * (T(1) - th * th) * c * (T(1) + T(3) * a * xv * xv);
      gx[i] += g[i] * d;
    }
  });
}

template <class T>
Var<T> logistic(Var<T> x) {
  Tensor<T> out = x.value();
  for (auto& v : out.values()) v = T(1) / (T(1) + std::exp(-v));
  return x.tape()->record(std::move(out), {x}, [x](Tape<T>& t, int self) {
    const Tensor<T>& g = t.grad(self);
    const Tensor<T>& y = t.value(self);
    Tensor<T>& gx = t.grad(x.id());
    for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * y[i] * (T(1) - y[i]);
  });
}

namespace {

template <class T>
void softmax_rows_inplace(Tensor<T>& x) {
  const size_t n = x.rows(), m = x.cols();
  for (size_t i = 0; i < n; ++i) {
    T* r = x.data() + i * m;
    const T mx = *std::max_element(r, r + m);
    T s = 0;
    for (size_t j = 0; j < m; ++j) s += (r[j] = std::exp(r[j] - mx));
    for (size_t j = 0; j < m; ++j) r[j] /= s;
  }
}

// dx = y * (dy - rowsum(dy * y))
template <class T>
void softmax_rows_backward(const T* y, const T* dy, T* dx, size_t n, size_t m) {
  for (size_t i = 0; i < n; ++i) {
    T dot = 0;
    for (size_t j = 0; j < m; ++j) dot += dy[i * m + j] * y[i * m + j];
    for (size_t j = 0; j < m; ++j) dx[i * m + j] += y[i * m + j] * (dy[i * m + j] - dot);
  }
}

}  // namespace

template <class T>
Var<T> softmax_rows(Var<T> x) {
  require_2d(x, "softmax_rows");
  for (T v : x.value().values()) {
    if (!std::isfinite(v)) throw Error(ErrorKind::NonFiniteInput, "softmax_rows");
  }
  Tensor<T> out = x.value();
  softmax_rows_inplace(out);
  return x.tape()->record(std::move(out), {x}, [x](Tape<T>& t, int self) {
    const Tensor<T>& y = t.value(self);
    softmax_rows_backward(y.data(), t.grad(self).data(), t.grad(x.id()).data(), y.rows(), y.cols());
  });
}

template <class T>
Var<T> layer_norm(Var<T> x, Var<T> gamma, Var<T> beta, T eps) {
  require_2d(x, "layer_norm");
  const size_t n = x.shape()[0], d = x.shape()[1];
  if (d < 2 || gamma.value().size() != d || beta.value().size() != d) {
    throw Error(ErrorKind::ShapeMismatch, "layer_norm " + shape_str(x.shape()));
  }
  Tensor<T> xhat({n, d});
  std::vector<T> rstd(n);
  Tensor<T> out({n, d});
  for (size_t i = 0; i < n; ++i) {
    const T* r = x.value().data() + i * d;
    T mean = 0;
    for (size_t j = 0; j < d; ++j) mean += r[j];
    mean /= T(d);
    T var = 0;
    for (size_t j = 0; j < d; ++j) var += (r[j] - mean) * (r[j] - mean);
    var /= T(d);
    rstd[i] = T(1) / std::sqrt(var + eps);
    for (size_t j = 0; j < d; ++j) {
      xhat[i * d + j] = (r[j] - mean) * rstd[i];
      out[i * d + j] = xhat[i * d + j] * gamma.value()[j] + beta.value()[j];
    }
  }
  return x.tape()->record(std::move(out), {x, gamma, beta},
                          [x, gamma, beta, n, d, xhat = std::move(xhat), rstd = std::move(rstd)](Tape<T>& t, int self) {
    const Tensor<T>& g = t.grad(self);
    if (wants_grad(t, gamma) || wants_grad(t, beta)) {
      Tensor<T>& gg = t.grad(gamma.id());
      Tensor<T>& gb = t.grad(beta.id());
      for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < d; ++j) {
          gg[j] += g[i * d + j] * xhat[i * d + j];
          gb[j] += g[i * d + j];
        }
    }
    if (!wants_grad(t, x)) return;
    Tensor<T>& gx = t.grad(x.id());
    std::vector<T> dxhat(d);
    for (size_t i = 0; i < n; ++i) {
      T mean_d = 0, mean_dx = 0;
      for (size_t j = 0; j < d; ++j) {
        dxhat[j] = g[i * d + j] * gamma.value()[j];
        mean_d += dxhat[j];
        mean_dx += dxhat[j] * xhat[i * d + j];
      }
      mean_d /= T(d);
      mean_dx /= T(d);
      for (size_t j = 0; j < d; ++j) gx[i * d + j] += rstd[i] * (dxhat[j] - mean_d - xhat[i * d + j] * mean_dx);
    }
  });
}

template <class T>
Var<T> sdp_attention(Var<T> q, Var<T> k, Var<T> v) {
  require_2d(q, "sdp_attention");
  require_2d(k, "sdp_attention");
  require_2d(v, "sdp_attention");
  const size_t n = q.shape()[0], d = q.shape()[1], m = k.shape()[0], dv = v.shape()[1];
  if (k.shape()[1] != d || v.shape()[0] != m) {
    throw Error(ErrorKind::ShapeMismatch, "sdp_attention q" + shape_str(q.shape()) + " k" + shape_str(k.shape()) +
                                              " v" + shape_str(v.shape()));
  }
  const T inv_sqrt_d = T(1) / std::sqrt(T(d));
  Tensor<T> probs({n, m});
  kernels::gemm_nt_serial(q.value().data(), k.value().data(), probs.data(), n, d, m);
  for (auto& s : probs.values()) s *= inv_sqrt_d;
  softmax_rows_inplace(probs);
  Tensor<T> out({n, dv});
  kernels::gemm_nn_serial(probs.data(), v.value().data(), out.data(), n, m, dv);
  return q.tape()->record(std::move(out), {q, k, v},
                          [q, k, v, n, d, m, dv, inv_sqrt_d, probs = std::move(probs)](Tape<T>& t, int self) {
    const Tensor<T>& g = t.grad(self);
    if (wants_grad(t, v)) kernels::gemm_tn_serial(probs.data(), g.data(), t.grad(v.id()).data(), n, m, dv);
    if (!wants_grad(t, q) && !wants_grad(t, k)) return;
    Tensor<T> dprobs({n, m});
    kernels::gemm_nt_serial(g.data(), v.value().data(), dprobs.data(), n, dv, m);
    Tensor<T> dscores({n, m});
    softmax_rows_backward(probs.data(), dprobs.data(), dscores.data(), n, m);
    for (auto& s : dscores.values()) s *= inv_sqrt_d;
    if (wants_grad(t, q)) kernels::gemm_nn_serial(dscores.data(), k.value().data(), t.grad(q.id()).data(), n, m, d);
    if (wants_grad(t, k)) kernels::gemm_tn_serial(dscores.data(), q.value().data(), t.grad(k.id()).data(), n, m, d);
  });
}

template <class T>
Var<T> mlp2(Var<T> x, Var<T> w1, Var<T> b1, Var<T> w2, Var<T> b2) {
  return add_row(linear(gelu(add_row(linear(x, w1), b1)), w2), b2);
}

template <class T>
Var<T> concat_rows(Var<T> a, Var<T> b) {
  require_2d(a, "concat_rows");
  require_2d(b, "concat_rows");
  if (a.shape()[1] != b.shape()[1]) throw Error(ErrorKind::ShapeMismatch, "concat_rows column mismatch");
  const size_t na = a.value().size();
  Tensor<T> out({a.shape()[0] + b.shape()[0], a.shape()[1]});
  std::copy(a.value().values().begin(), a.value().values().end(), out.data());
  std::copy(b.value().values().begin(), b.value().values().end(), out.data() + na);
  return a.tape()->record(std::move(out), {a, b}, [a, b, na](Tape<T>& t, int self) {
    const Tensor<T>& g = t.grad(self);
    if (wants_grad(t, a)) {
      Tensor<T>& ga = t.grad(a.id());
      for (size_t i = 0; i < na; ++i) ga[i] += g[i];
    }
    if (wants_grad(t, b)) {
      Tensor<T>& gb = t.grad(b.id());
      for (size_t i = 0; i < gb.size(); ++i) gb[i] += g[na + i];
    }
  });
}

template <class T>
Var<T> concat_cols(Var<T> a, Var<T> b) {
  require_2d(a, "concat_cols");
  require_2d(b, "concat_cols");
  const size_t n = a.shape()[0], ca = a.shape()[1], cb = b.shape()[1];
  if (b.shape()[0] != n) throw Error(ErrorKind::ShapeMismatch, "concat_cols row mismatch");
  Tensor<T> out({n, ca + cb});
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = 0; j < ca; ++j) out[i * (ca + cb) + j] = a.value()[i * ca + j];
    for (size_t j = 0; j < cb; ++j) out[i * (ca + cb) + ca + j] = b.value()[i * cb + j];
  }
  return a.tape()->record(std::move(out), {a, b}, [a, b, n, ca, cb](Tape<T>& t, int self) {
    const Tensor<T>& g = t.grad(self);
    for (size_t i = 0; i < n; ++i) {
      if (wants_grad(t, a))
        for (size_t j = 0; j < ca; ++j) t.grad(a.id())[i * ca + j] += g[i * (ca + cb) + j];
      if (wants_grad(t, b))
        for (size_t j = 0; j < cb; ++j) t.grad(b.id())[i * cb + j] += g[i * (ca + cb) + ca + j];
    }
  });
}

template <class T>
Var<T> slice_rows(Var<T> x, size_t begin, size_t end) {
  require_2d(x, "slice_rows");
  if (begin > end || end > x.shape()[0]) throw Error(ErrorKind::ShapeMismatch, "slice_rows out of range");
  const size_t c = x.shape()[1];
  Tensor<T> out({end - begin, c});
  std::copy(x.value().data() + begin * c, x.value().data() + end * c, out.data());
  return x.tape()->record(std::move(out), {x}, [x, begin, c](Tape<T>& t, int self) {
    const Tensor<T>& g = t.grad(self);
    Tensor<T>& gx = t.grad(x.id());
    for (size_t i = 0; i < g.size(); ++i) gx[begin * c + i] += g[i];
  });
}

template <class T>
Var<T> stack(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw Error(ErrorKind::ShapeMismatch, "stack of nothing");
  const Shape& s = parts[0].shape();
  const size_t each = parts[0].value().size();
  Shape out_shape = {parts.size()};
  out_shape.insert(out_shape.end(), s.begin(), s.end());
  Tensor<T> out(out_shape);
  for (size_t i = 0; i < parts.size(); ++i) {
    if (parts[i].shape() != s) throw Error(ErrorKind::ShapeMismatch, "stack: mismatched part shapes");
    std::copy(parts[i].value().values().begin(), parts[i].value().values().end(), out.data() + i * each);
  }
  return parts[0].tape()->record(std::move(out), parts, [parts, each](Tape<T>& t, int self) {
    const Tensor<T>& g = t.grad(self);
    for (size_t i = 0; i < parts.size(); ++i) {
      if (!wants_grad(t, parts[i])) continue;
      Tensor<T>& gp = t.grad(parts[i].id());
      for (size_t j = 0; j < each; ++j) gp[j] += g[i * each + j];
    }
  });
}

template <class T>
Var<T> sum(Var<T> x) {
  T acc = 0;
  for (T v : x.value().values()) acc += v;
  return x.tape()->record(Tensor<T>({1}, acc), {x}, [x](Tape<T>& t, int self) {
    const T g = t.grad(self)[0];
    for (auto& v : t.grad(x.id()).values()) v += g;
  });
}

template <class T>
Var<T> mean_rows(Var<T> x) {
  require_2d(x, "mean_rows");
  const size_t n = x.shape()[0], d = x.shape()[1];
  Tensor<T> out({1, d});
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j < d; ++j) out[j] += x.value()[i * d + j];
  for (auto& v : out.values()) v /= T(n);
  return x.tape()->record(std::move(out), {x}, [x, n, d](Tape<T>& t, int self) {
    const Tensor<T>& g = t.grad(self);
    Tensor<T>& gx = t.grad(x.id());
    for (size_t i = 0; i < n; ++i)
      for (size_t j = 0; j < d; ++j) gx[i * d + j] += g[j] / T(n);
  });
}

template <class T>
Var<T> mse(Var<T> x, const Tensor<T>& target) {
  if (target.size() != x.value().size()) throw Error(ErrorKind::ShapeMismatch, "mse target size");
  T acc = 0;
  for (size_t i = 0; i < target.size(); ++i) {
    const T diff = x.value()[i] - target[i];
    acc += diff * diff;
  }
  const T n = T(target.size());
  return x.tape()->record(Tensor<T>({1}, acc / n), {x}, [x, target, n](Tape<T>& t, int self) {
    const T g = t.grad(self)[0];
    Tensor<T>& gx = t.grad(x.id());
    for (size_t i = 0; i < target.size(); ++i) gx[i] += g * T(2) * (x.value()[i] - target[i]) / n;
  });
}

#define FEA_INSTANTIATE(T)                                                        \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                  \
  template Var<T> linear(Var<T>, Var<T>);                                         \
  template Var<T> add(Var<T>, Var<T>);                                            \
  template Var<T> mul(Var<T>, Var<T>);                                            \
  template Var<T> add_row(Var<T>, Var<T>);                                        \
  template Var<T> scale(Var<T>, T);                                               \
  template Var<T> scale_by(Var<T>, Var<T>);                                       \
  template Var<T> gelu(Var<T>);                                                   \
  template Var<T> logistic(Var<T>);                                               \
  template Var<T> softmax_rows(Var<T>);                                           \
  template Var<T> layer_norm(Var<T>, Var<T>, Var<T>, T);                          \
  template Var<T> sdp_attention(Var<T>, Var<T>, Var<T>);                          \
  template Var<T> mlp2(Var<T>, Var<T>, Var<T>, Var<T>, Var<T>);                   \
  template Var<T> concat_rows(Var<T>, Var<T>);                                    \
  template Var<T> concat_cols(Var<T>, Var<T>);                                    \
  template Var<T> slice_rows(Var<T>, size_t, size_t);                             \
  template Var<T> stack(const std::vector<Var<T>>&);                              \
  template Var<T> sum(Var<T>);                                                    \
  template Var<T> mean_rows(Var<T>);                                              \
  template Var<T> mse(Var<T>, const Tensor<T>&);

FEA_INSTANTIATE(float)
FEA_INSTANTIATE(double)

#undef FEA_INSTANTIATE

}  // namespace fea::nn
