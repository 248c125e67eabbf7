// SPDX-License-Identifier: Apache-2.0
//
// Reference kernels. Plain loops, no intrinsics; this translation unit is
// compiled without extended ISA flags so it stays the portable baseline the
// AVX2 variants are checked against.

#include <cmath>
#include <cstring>

#include "smallvae/kernels.hpp"

namespace smallvae::kernels {
namespace {

template <class T>
void gemm_nn(const T* a, const T* b, T* c, int64_t m, int64_t n, int64_t k,
             bool accumulate) {
  for (int64_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    if (!accumulate) {
      for (int64_t j = 0; j < n; ++j) crow[j] = T(0);
    }
    const T* arow = a + i * k;
    for (int64_t p = 0; p < k; ++p) {
      const T av = arow[p];
      const T* brow = b + p * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <class T>
void gemm_nt(const T* a, const T* b, T* c, int64_t m, int64_t n, int64_t k,
             bool accumulate) {
  for (int64_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    T* crow = c + i * n;
    for (int64_t j = 0; j < n; ++j) {
      const T* brow = b + j * k;
      T acc = T(0);
      for (int64_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      crow[j] = accumulate ? crow[j] + acc : acc;
    }
  }
}

template <class T>
void gemm_tn(const T* a, const T* b, T* c, int64_t m, int64_t n, int64_t k,
             bool accumulate) {
  for (int64_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    if (!accumulate) {
      for (int64_t j = 0; j < n; ++j) crow[j] = T(0);
    }
    for (int64_t p = 0; p < k; ++p) {
      const T av = a[p * m + i];
      const T* brow = b + p * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <class T>
void add(const T* a, const T* b, T* y, int64_t n) {
  for (int64_t i = 0; i < n; ++i) y[i] = a[i] + b[i];
}

template <class T>
void sub(const T* a, const T* b, T* y, int64_t n) {
  for (int64_t i = 0; i < n; ++i) y[i] = a[i] - b[i];
}

template <class T>
void mul(const T* a, const T* b, T* y, int64_t n) {
  for (int64_t i = 0; i < n; ++i) y[i] = a[i] * b[i];
}

template <class T>
void axpy(T alpha, const T* x, T* y, int64_t n) {
  for (int64_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <class T>
void scale(T alpha, const T* x, T* y, int64_t n) {
  for (int64_t i = 0; i < n; ++i) y[i] = alpha * x[i];
}

template <class T>
void relu_fwd(const T* x, T* y, int64_t n) {
  for (int64_t i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
}

template <class T>
void relu_bwd(const T* x, const T* dy, T* dx, int64_t n) {
  for (int64_t i = 0; i < n; ++i) {
    if (x[i] > T(0)) dx[i] += dy[i];
  }
}

template <class T>
T sum(const T* x, int64_t n) {
  T acc = T(0);
  for (int64_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}

template <class T>
T dot(const T* a, const T* b, int64_t n) {
  T acc = T(0);
  for (int64_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

template <class T>
T sq_diff_sum(const T* a, const T* b, int64_t n) {
  T acc = T(0);
  for (int64_t i = 0; i < n; ++i) {
    const T d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

template <class T>
void adam_update(T* p, const T* g, T* m, T* v, int64_t n, T lr, T beta1,
                 T beta2, T eps, T wd, T bc1, T bc2) {
  for (int64_t i = 0; i < n; ++i) {
    const T gi = g[i];
    m[i] = beta1 * m[i] + (T(1) - beta1) * gi;
    v[i] = beta2 * v[i] + (T(1) - beta2) * gi * gi;
    const T mhat = m[i] * bc1;
    const T vhat = v[i] * bc2;
    p[i] -= lr * mhat / (std::sqrt(vhat) + eps) + lr * wd * p[i];
  }
}

template <class T>
Backend<T> make_scalar() {
  Backend<T> b;
  b.name = "scalar";
  b.gemm_nn = &gemm_nn<T>;
  b.gemm_nt = &gemm_nt<T>;
  b.gemm_tn = &gemm_tn<T>;
  b.add = &add<T>;
  b.sub = &sub<T>;
  b.mul = &mul<T>;
  b.axpy = &axpy<T>;
  b.scale = &scale<T>;
  b.relu_fwd = &relu_fwd<T>;
  b.relu_bwd = &relu_bwd<T>;
  b.sum = &sum<T>;
  b.dot = &dot<T>;
  b.sq_diff_sum = &sq_diff_sum<T>;
  b.adam_update = &adam_update<T>;
  return b;
}

}  // namespace

template <>
const Backend<float>& scalar_backend<float>() {
  static const Backend<float> b = make_scalar<float>();
  return b;
}

template <>
const Backend<double>& scalar_backend<double>() {
  static const Backend<double> b = make_scalar<double>();
  return b;
}

}  // namespace smallvae::kernels
