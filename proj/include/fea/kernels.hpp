#pragma once

// Dense matrix-product kernels. The *_serial variants are the reference used
// inside a single autograd graph (one graph per worker); the *_omp variants
// split output rows across OpenMP threads and must agree with the serial ones
// bit-for-bit, since every output element is reduced in the same order.

#include <cstddef>

namespace fea::kernels {

// C[n,m] += A[n,k] * B[k,m]
template <class T>
void gemm_nn_serial(const T* a, const T* b, T* c, size_t n, size_t k, size_t m) {
  for (size_t i = 0; i < n; ++i) {
    T* ci = c + i * m;
    const T* ai = a + i * k;
    for (size_t p = 0; p < k; ++p) {
      const T av = ai[p];
      const T* bp = b + p * m;
      for (size_t j = 0; j < m; ++j) ci[j] += av * bp[j];
    }
  }
}

// C[n,m] += A[n,k] * B[m,k]^T
template <class T>
void gemm_nt_serial(const T* a, const T* b, T* c, size_t n, size_t k, size_t m) {
  for (size_t i = 0; i < n; ++i) {
    const T* ai = a + i * k;
    for (size_t j = 0; j < m; ++j) {
      const T* bj = b + j * k;
      T acc = T{0};
      for (size_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
      c[i * m + j] += acc;
    }
  }
}

// C[k,m] += A[n,k]^T * B[n,m]
template <class T>
void gemm_tn_serial(const T* a, const T* b, T* c, size_t n, size_t k, size_t m) {
  for (size_t i = 0; i < n; ++i) {
    const T* ai = a + i * k;
    const T* bi = b + i * m;
    for (size_t p = 0; p < k; ++p) {
      const T av = ai[p];
      T* cp = c + p * m;
      for (size_t j = 0; j < m; ++j) cp[j] += av * bi[j];
    }
  }
}

template <class T>
void gemm_nn_omp(const T* a, const T* b, T* c, size_t n, size_t k, size_t m) {
#pragma omp parallel for schedule(static)
  for (ptrdiff_t i = 0; i < static_cast<ptrdiff_t>(n); ++i) {
    gemm_nn_serial(a + i * k, b, c + i * m, 1, k, m);
  }
}

template <class T>
void gemm_nt_omp(const T* a, const T* b, T* c, size_t n, size_t k, size_t m) {
#pragma omp parallel for schedule(static)
  for (ptrdiff_t i = 0; i < static_cast<ptrdiff_t>(n); ++i) {
    gemm_nt_serial(a + i * k, b, c + i * m, 1, k, m);
  }
}

}  // namespace fea::kernels
