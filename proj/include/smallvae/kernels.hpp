// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

namespace smallvae::kernels {

// Data-parallel inner loops behind the tensor and optimizer layers. Each entry
// has a scalar reference implementation and, on x86-64 builds, an AVX2+FMA
// variant selected at runtime. The two variants agree up to floating-point
// reassociation; the kernel tests pin that equivalence.
//
// Matrix arguments are dense row-major. The accumulate flag switches between
// C = ... and C += ... so callers can fold reductions without temporaries.
template <class T>
struct Backend {
  const char* name;

  // C[M x N] (+)= A[M x K] * B[K x N]
  void (*gemm_nn)(const T* a, const T* b, T* c, int64_t m, int64_t n, int64_t k,
                  bool accumulate);
  // C[M x N] (+)= A[M x K] * B[N x K]^T
  void (*gemm_nt)(const T* a, const T* b, T* c, int64_t m, int64_t n, int64_t k,
                  bool accumulate);
  // C[M x N] (+)= A[K x M]^T * B[K x N]
  void (*gemm_tn)(const T* a, const T* b, T* c, int64_t m, int64_t n, int64_t k,
                  bool accumulate);

  void (*add)(const T* a, const T* b, T* y, int64_t n);
  void (*sub)(const T* a, const T* b, T* y, int64_t n);
  void (*mul)(const T* a, const T* b, T* y, int64_t n);
  void (*axpy)(T alpha, const T* x, T* y, int64_t n);   // y += alpha * x
  void (*scale)(T alpha, const T* x, T* y, int64_t n);  // y  = alpha * x

  void (*relu_fwd)(const T* x, T* y, int64_t n);
  // dx += dy where x > 0 (subgradient 0 at x == 0)
  void (*relu_bwd)(const T* x, const T* dy, T* dx, int64_t n);

  T (*sum)(const T* x, int64_t n);
  T (*dot)(const T* a, const T* b, int64_t n);
  T (*sq_diff_sum)(const T* a, const T* b, int64_t n);  // sum((a-b)^2)

  // Fused Adam step with decoupled weight decay. bc1/bc2 are the
  // bias-correction reciprocals 1/(1-beta1^t), 1/(1-beta2^t).
  void (*adam_update)(T* p, const T* g, T* m, T* v, int64_t n, T lr, T beta1,
                      T beta2, T eps, T wd, T bc1, T bc2);
};

enum class Isa { scalar, avx2 };

template <class T>
const Backend<T>& scalar_backend();

// Non-null only when the AVX2 translation unit is compiled in (x86-64).
template <class T>
const Backend<T>* avx2_backend();

bool cpu_has_avx2();

// Active selection: SMALLVAE_SIMD=scalar|avx2|auto (default auto) read once,
// force_isa overrides afterwards (test hook). Requesting avx2 on a machine
// without it falls back to scalar.
Isa active_isa();
void force_isa(Isa isa);

template <class T>
const Backend<T>& active_backend();

}  // namespace smallvae::kernels
