// SPDX-License-Identifier: Apache-2.0
//
// AVX2+FMA kernel variants, 8-wide float / 4-wide double. Compiled with
// -mavx2 -mfma on x86-64 only; dispatch checks CPU support before handing
// these out. Summation order differs from the scalar reference (vector lanes,
// horizontal sums), so comparisons against it are tolerance-based.

#include "smallvae/kernels.hpp"

#if defined(SMALLVAE_HAVE_AVX2)

#include <immintrin.h>

#include <cmath>

namespace smallvae::kernels {
namespace {

inline float hsum(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  const __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_add_ps(lo, hi);
  __m128 shuf = _mm_movehdup_ps(lo);
  __m128 sums = _mm_add_ps(lo, shuf);
  shuf = _mm_movehl_ps(shuf, sums);
  sums = _mm_add_ss(sums, shuf);
  return _mm_cvtss_f32(sums);
}

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  const __m128d shuf = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, shuf));
}

// ---------------------------------------------------------------- float ----

void gemm_nn_f32(const float* a, const float* b, float* c, int64_t m,
                 int64_t n, int64_t k, bool accumulate) {
  // Four C rows per pass so each B row is streamed once per four A rows.
  int64_t i = 0;
  for (; i + 4 <= m; i += 4) {
    float* c0 = c + (i + 0) * n;
    float* c1 = c + (i + 1) * n;
    float* c2 = c + (i + 2) * n;
    float* c3 = c + (i + 3) * n;
    if (!accumulate) {
      for (int64_t j = 0; j < n; ++j) c0[j] = c1[j] = c2[j] = c3[j] = 0.0f;
    }
    for (int64_t p = 0; p < k; ++p) {
      const float s0 = a[(i + 0) * k + p];
      const float s1 = a[(i + 1) * k + p];
      const float s2 = a[(i + 2) * k + p];
      const float s3 = a[(i + 3) * k + p];
      const __m256 a0 = _mm256_set1_ps(s0);
      const __m256 a1 = _mm256_set1_ps(s1);
      const __m256 a2 = _mm256_set1_ps(s2);
      const __m256 a3 = _mm256_set1_ps(s3);
      const float* brow = b + p * n;
      int64_t j = 0;
      for (; j + 8 <= n; j += 8) {
        const __m256 bv = _mm256_loadu_ps(brow + j);
        _mm256_storeu_ps(c0 + j, _mm256_fmadd_ps(a0, bv, _mm256_loadu_ps(c0 + j)));
        _mm256_storeu_ps(c1 + j, _mm256_fmadd_ps(a1, bv, _mm256_loadu_ps(c1 + j)));
        _mm256_storeu_ps(c2 + j, _mm256_fmadd_ps(a2, bv, _mm256_loadu_ps(c2 + j)));
        _mm256_storeu_ps(c3 + j, _mm256_fmadd_ps(a3, bv, _mm256_loadu_ps(c3 + j)));
      }
      for (; j < n; ++j) {
        const float bv = brow[j];
        c0[j] += s0 * bv;
        c1[j] += s1 * bv;
        c2[j] += s2 * bv;
        c3[j] += s3 * bv;
      }
    }
  }
  for (; i < m; ++i) {
    float* crow = c + i * n;
    if (!accumulate) {
      for (int64_t j = 0; j < n; ++j) crow[j] = 0.0f;
    }
    for (int64_t p = 0; p < k; ++p) {
      const float s = a[i * k + p];
      const __m256 av = _mm256_set1_ps(s);
      const float* brow = b + p * n;
      int64_t j = 0;
      for (; j + 8 <= n; j += 8) {
        _mm256_storeu_ps(crow + j, _mm256_fmadd_ps(av, _mm256_loadu_ps(brow + j),
                                                   _mm256_loadu_ps(crow + j)));
      }
      for (; j < n; ++j) crow[j] += s * brow[j];
    }
  }
}

void gemm_nt_f32(const float* a, const float* b, float* c, int64_t m,
                 int64_t n, int64_t k, bool accumulate) {
  for (int64_t i = 0; i < m; ++i) {
    const float* arow = a + i * k;
    float* crow = c + i * n;
    int64_t j = 0;
    for (; j + 4 <= n; j += 4) {
      const float* b0 = b + (j + 0) * k;
      const float* b1 = b + (j + 1) * k;
      const float* b2 = b + (j + 2) * k;
      const float* b3 = b + (j + 3) * k;
      __m256 acc0 = _mm256_setzero_ps();
      __m256 acc1 = _mm256_setzero_ps();
      __m256 acc2 = _mm256_setzero_ps();
      __m256 acc3 = _mm256_setzero_ps();
      int64_t p = 0;
      for (; p + 8 <= k; p += 8) {
        const __m256 av = _mm256_loadu_ps(arow + p);
        acc0 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b0 + p), acc0);
        acc1 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b1 + p), acc1);
        acc2 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b2 + p), acc2);
        acc3 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b3 + p), acc3);
      }
      float s0 = hsum(acc0), s1 = hsum(acc1), s2 = hsum(acc2), s3 = hsum(acc3);
      for (; p < k; ++p) {
        const float av = arow[p];
        s0 += av * b0[p];
        s1 += av * b1[p];
        s2 += av * b2[p];
        s3 += av * b3[p];
      }
      if (accumulate) {
        crow[j + 0] += s0;
        crow[j + 1] += s1;
        crow[j + 2] += s2;
        crow[j + 3] += s3;
      } else {
        crow[j + 0] = s0;
        crow[j + 1] = s1;
        crow[j + 2] = s2;
        crow[j + 3] = s3;
      }
    }
    for (; j < n; ++j) {
      const float* brow = b + j * k;
      __m256 acc = _mm256_setzero_ps();
      int64_t p = 0;
      for (; p + 8 <= k; p += 8) {
        acc = _mm256_fmadd_ps(_mm256_loadu_ps(arow + p),
                              _mm256_loadu_ps(brow + p), acc);
      }
      float s = hsum(acc);
      for (; p < k; ++p) s += arow[p] * brow[p];
      crow[j] = accumulate ? crow[j] + s : s;
    }
  }
}

void gemm_tn_f32(const float* a, const float* b, float* c, int64_t m,
                 int64_t n, int64_t k, bool accumulate) {
  int64_t i = 0;
  for (; i + 4 <= m; i += 4) {
    float* c0 = c + (i + 0) * n;
    float* c1 = c + (i + 1) * n;
    float* c2 = c + (i + 2) * n;
    float* c3 = c + (i + 3) * n;
    if (!accumulate) {
      for (int64_t j = 0; j < n; ++j) c0[j] = c1[j] = c2[j] = c3[j] = 0.0f;
    }
    for (int64_t p = 0; p < k; ++p) {
      const float* acol = a + p * m + i;
      const float s0 = acol[0];
      const float s1 = acol[1];
      const float s2 = acol[2];
      const float s3 = acol[3];
      const __m256 a0 = _mm256_set1_ps(s0);
      const __m256 a1 = _mm256_set1_ps(s1);
      const __m256 a2 = _mm256_set1_ps(s2);
      const __m256 a3 = _mm256_set1_ps(s3);
      const float* brow = b + p * n;
      int64_t j = 0;
      for (; j + 8 <= n; j += 8) {
        const __m256 bv = _mm256_loadu_ps(brow + j);
        _mm256_storeu_ps(c0 + j, _mm256_fmadd_ps(a0, bv, _mm256_loadu_ps(c0 + j)));
        _mm256_storeu_ps(c1 + j, _mm256_fmadd_ps(a1, bv, _mm256_loadu_ps(c1 + j)));
        _mm256_storeu_ps(c2 + j, _mm256_fmadd_ps(a2, bv, _mm256_loadu_ps(c2 + j)));
        _mm256_storeu_ps(c3 + j, _mm256_fmadd_ps(a3, bv, _mm256_loadu_ps(c3 + j)));
      }
      for (; j < n; ++j) {
        const float bv = brow[j];
        c0[j] += s0 * bv;
        c1[j] += s1 * bv;
        c2[j] += s2 * bv;
        c3[j] += s3 * bv;
      }
    }
  }
  for (; i < m; ++i) {
    float* crow = c + i * n;
    if (!accumulate) {
      for (int64_t j = 0; j < n; ++j) crow[j] = 0.0f;
    }
    for (int64_t p = 0; p < k; ++p) {
      const float s = a[p * m + i];
      const __m256 av = _mm256_set1_ps(s);
      const float* brow = b + p * n;
      int64_t j = 0;
      for (; j + 8 <= n; j += 8) {
        _mm256_storeu_ps(crow + j, _mm256_fmadd_ps(av, _mm256_loadu_ps(brow + j),
                                                   _mm256_loadu_ps(crow + j)));
      }
      for (; j < n; ++j) crow[j] += s * brow[j];
    }
  }
}

void add_f32(const float* a, const float* b, float* y, int64_t n) {
  int64_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(y + i, _mm256_add_ps(_mm256_loadu_ps(a + i),
                                          _mm256_loadu_ps(b + i)));
  }
  for (; i < n; ++i) y[i] = a[i] + b[i];
}

void sub_f32(const float* a, const float* b, float* y, int64_t n) {
  int64_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(y + i, _mm256_sub_ps(_mm256_loadu_ps(a + i),
                                          _mm256_loadu_ps(b + i)));
  }
  for (; i < n; ++i) y[i] = a[i] - b[i];
}

void mul_f32(const float* a, const float* b, float* y, int64_t n) {
  int64_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(y + i, _mm256_mul_ps(_mm256_loadu_ps(a + i),
                                          _mm256_loadu_ps(b + i)));
  }
  for (; i < n; ++i) y[i] = a[i] * b[i];
}

void axpy_f32(float alpha, const float* x, float* y, int64_t n) {
  const __m256 av = _mm256_set1_ps(alpha);
  int64_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(y + i, _mm256_fmadd_ps(av, _mm256_loadu_ps(x + i),
                                            _mm256_loadu_ps(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void scale_f32(float alpha, const float* x, float* y, int64_t n) {
  const __m256 av = _mm256_set1_ps(alpha);
  int64_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(y + i, _mm256_mul_ps(av, _mm256_loadu_ps(x + i)));
  }
  for (; i < n; ++i) y[i] = alpha * x[i];
}

void relu_fwd_f32(const float* x, float* y, int64_t n) {
  const __m256 zero = _mm256_setzero_ps();
  int64_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(y + i, _mm256_max_ps(_mm256_loadu_ps(x + i), zero));
  }
  for (; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_bwd_f32(const float* x, const float* dy, float* dx, int64_t n) {
  const __m256 zero = _mm256_setzero_ps();
  int64_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 mask = _mm256_cmp_ps(_mm256_loadu_ps(x + i), zero, _CMP_GT_OQ);
    const __m256 gated = _mm256_and_ps(mask, _mm256_loadu_ps(dy + i));
    _mm256_storeu_ps(dx + i, _mm256_add_ps(_mm256_loadu_ps(dx + i), gated));
  }
  for (; i < n; ++i) {
    if (x[i] > 0.0f) dx[i] += dy[i];
  }
}

float sum_f32(const float* x, int64_t n) {
  __m256 acc = _mm256_setzero_ps();
  int64_t i = 0;
  for (; i + 8 <= n; i += 8) acc = _mm256_add_ps(acc, _mm256_loadu_ps(x + i));
  float s = hsum(acc);
  for (; i < n; ++i) s += x[i];
  return s;
}

float dot_f32(const float* a, const float* b, int64_t n) {
  __m256 acc = _mm256_setzero_ps();
  int64_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc);
  }
  float s = hsum(acc);
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

float sq_diff_sum_f32(const float* a, const float* b, int64_t n) {
  __m256 acc = _mm256_setzero_ps();
  int64_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 d = _mm256_sub_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i));
    acc = _mm256_fmadd_ps(d, d, acc);
  }
  float s = hsum(acc);
  for (; i < n; ++i) {
    const float d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

void adam_update_f32(float* p, const float* g, float* m, float* v, int64_t n,
                     float lr, float beta1, float beta2, float eps, float wd,
                     float bc1, float bc2) {
  const __m256 b1 = _mm256_set1_ps(beta1);
  const __m256 b2 = _mm256_set1_ps(beta2);
  const __m256 omb1 = _mm256_set1_ps(1.0f - beta1);
  const __m256 omb2 = _mm256_set1_ps(1.0f - beta2);
  const __m256 vbc1 = _mm256_set1_ps(bc1);
  const __m256 vbc2 = _mm256_set1_ps(bc2);
  const __m256 vlr = _mm256_set1_ps(lr);
  const __m256 veps = _mm256_set1_ps(eps);
  const __m256 vlrwd = _mm256_set1_ps(lr * wd);
  int64_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 gv = _mm256_loadu_ps(g + i);
    const __m256 mv = _mm256_fmadd_ps(omb1, gv, _mm256_mul_ps(b1, _mm256_loadu_ps(m + i)));
    const __m256 vv = _mm256_fmadd_ps(omb2, _mm256_mul_ps(gv, gv),
                                      _mm256_mul_ps(b2, _mm256_loadu_ps(v + i)));
    _mm256_storeu_ps(m + i, mv);
    _mm256_storeu_ps(v + i, vv);
    const __m256 mhat = _mm256_mul_ps(mv, vbc1);
    const __m256 vhat = _mm256_mul_ps(vv, vbc2);
    const __m256 denom = _mm256_add_ps(_mm256_sqrt_ps(vhat), veps);
    const __m256 pv = _mm256_loadu_ps(p + i);
    const __m256 step = _mm256_add_ps(
        _mm256_div_ps(_mm256_mul_ps(vlr, mhat), denom), _mm256_mul_ps(vlrwd, pv));
    _mm256_storeu_ps(p + i, _mm256_sub_ps(pv, step));
  }
  for (; i < n; ++i) {
    const float gi = g[i];
    m[i] = beta1 * m[i] + (1.0f - beta1) * gi;
    v[i] = beta2 * v[i] + (1.0f - beta2) * gi * gi;
    const float mhat = m[i] * bc1;
    const float vhat = v[i] * bc2;
    p[i] -= lr * mhat / (std::sqrt(vhat) + eps) + lr * wd * p[i];
  }
}

// --------------------------------------------------------------- double ----

void gemm_nn_f64(const double* a, const double* b, double* c, int64_t m,
                 int64_t n, int64_t k, bool accumulate) {
  for (int64_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    if (!accumulate) {
      for (int64_t j = 0; j < n; ++j) crow[j] = 0.0;
    }
    for (int64_t p = 0; p < k; ++p) {
      const double s = a[i * k + p];
      const __m256d av = _mm256_set1_pd(s);
      const double* brow = b + p * n;
      int64_t j = 0;
      for (; j + 4 <= n; j += 4) {
        _mm256_storeu_pd(crow + j, _mm256_fmadd_pd(av, _mm256_loadu_pd(brow + j),
                                                   _mm256_loadu_pd(crow + j)));
      }
      for (; j < n; ++j) crow[j] += s * brow[j];
    }
  }
}

void gemm_nt_f64(const double* a, const double* b, double* c, int64_t m,
                 int64_t n, int64_t k, bool accumulate) {
  for (int64_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (int64_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      __m256d acc = _mm256_setzero_pd();
      int64_t p = 0;
      for (; p + 4 <= k; p += 4) {
        acc = _mm256_fmadd_pd(_mm256_loadu_pd(arow + p),
                              _mm256_loadu_pd(brow + p), acc);
      }
      double s = hsum(acc);
      for (; p < k; ++p) s += arow[p] * brow[p];
      crow[j] = accumulate ? crow[j] + s : s;
    }
  }
}

void gemm_tn_f64(const double* a, const double* b, double* c, int64_t m,
                 int64_t n, int64_t k, bool accumulate) {
  for (int64_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    if (!accumulate) {
      for (int64_t j = 0; j < n; ++j) crow[j] = 0.0;
    }
    for (int64_t p = 0; p < k; ++p) {
      const double s = a[p * m + i];
      const __m256d av = _mm256_set1_pd(s);
      const double* brow = b + p * n;
      int64_t j = 0;
      for (; j + 4 <= n; j += 4) {
        _mm256_storeu_pd(crow + j, _mm256_fmadd_pd(av, _mm256_loadu_pd(brow + j),
                                                   _mm256_loadu_pd(crow + j)));
      }
      for (; j < n; ++j) crow[j] += s * brow[j];
    }
  }
}

void add_f64(const double* a, const double* b, double* y, int64_t n) {
  int64_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(a + i),
                                          _mm256_loadu_pd(b + i)));
  }
  for (; i < n; ++i) y[i] = a[i] + b[i];
}

void sub_f64(const double* a, const double* b, double* y, int64_t n) {
  int64_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_sub_pd(_mm256_loadu_pd(a + i),
                                          _mm256_loadu_pd(b + i)));
  }
  for (; i < n; ++i) y[i] = a[i] - b[i];
}

void mul_f64(const double* a, const double* b, double* y, int64_t n) {
  int64_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_mul_pd(_mm256_loadu_pd(a + i),
                                          _mm256_loadu_pd(b + i)));
  }
  for (; i < n; ++i) y[i] = a[i] * b[i];
}

void axpy_f64(double alpha, const double* x, double* y, int64_t n) {
  const __m256d av = _mm256_set1_pd(alpha);
  int64_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i),
                                            _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void scale_f64(double alpha, const double* x, double* y, int64_t n) {
  const __m256d av = _mm256_set1_pd(alpha);
  int64_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_mul_pd(av, _mm256_loadu_pd(x + i)));
  }
  for (; i < n; ++i) y[i] = alpha * x[i];
}

void relu_fwd_f64(const double* x, double* y, int64_t n) {
  const __m256d zero = _mm256_setzero_pd();
  int64_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_max_pd(_mm256_loadu_pd(x + i), zero));
  }
  for (; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_bwd_f64(const double* x, const double* dy, double* dx, int64_t n) {
  const __m256d zero = _mm256_setzero_pd();
  int64_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d mask = _mm256_cmp_pd(_mm256_loadu_pd(x + i), zero, _CMP_GT_OQ);
    const __m256d gated = _mm256_and_pd(mask, _mm256_loadu_pd(dy + i));
    _mm256_storeu_pd(dx + i, _mm256_add_pd(_mm256_loadu_pd(dx + i), gated));
  }
  for (; i < n; ++i) {
    if (x[i] > 0.0) dx[i] += dy[i];
  }
}

double sum_f64(const double* x, int64_t n) {
  __m256d acc = _mm256_setzero_pd();
  int64_t i = 0;
  for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
  double s = hsum(acc);
  for (; i < n; ++i) s += x[i];
  return s;
}

double dot_f64(const double* a, const double* b, int64_t n) {
  __m256d acc = _mm256_setzero_pd();
  int64_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc);
  }
  double s = hsum(acc);
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

double sq_diff_sum_f64(const double* a, const double* b, int64_t n) {
  __m256d acc = _mm256_setzero_pd();
  int64_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
    acc = _mm256_fmadd_pd(d, d, acc);
  }
  double s = hsum(acc);
  for (; i < n; ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

void adam_update_f64(double* p, const double* g, double* m, double* v,
                     int64_t n, double lr, double beta1, double beta2,
                     double eps, double wd, double bc1, double bc2) {
  const __m256d b1 = _mm256_set1_pd(beta1);
  const __m256d b2 = _mm256_set1_pd(beta2);
  const __m256d omb1 = _mm256_set1_pd(1.0 - beta1);
  const __m256d omb2 = _mm256_set1_pd(1.0 - beta2);
  const __m256d vbc1 = _mm256_set1_pd(bc1);
  const __m256d vbc2 = _mm256_set1_pd(bc2);
  const __m256d vlr = _mm256_set1_pd(lr);
  const __m256d veps = _mm256_set1_pd(eps);
  const __m256d vlrwd = _mm256_set1_pd(lr * wd);
  int64_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d gv = _mm256_loadu_pd(g + i);
    const __m256d mv = _mm256_fmadd_pd(omb1, gv, _mm256_mul_pd(b1, _mm256_loadu_pd(m + i)));
    const __m256d vv = _mm256_fmadd_pd(omb2, _mm256_mul_pd(gv, gv),
                                       _mm256_mul_pd(b2, _mm256_loadu_pd(v + i)));
    _mm256_storeu_pd(m + i, mv);
    _mm256_storeu_pd(v + i, vv);
    const __m256d mhat = _mm256_mul_pd(mv, vbc1);
    const __m256d vhat = _mm256_mul_pd(vv, vbc2);
    const __m256d denom = _mm256_add_pd(_mm256_sqrt_pd(vhat), veps);
    const __m256d pv = _mm256_loadu_pd(p + i);
    const __m256d step = _mm256_add_pd(
        _mm256_div_pd(_mm256_mul_pd(vlr, mhat), denom), _mm256_mul_pd(vlrwd, pv));
    _mm256_storeu_pd(p + i, _mm256_sub_pd(pv, step));
  }
  for (; i < n; ++i) {
    const double gi = g[i];
    m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
    v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
    const double mhat = m[i] * bc1;
    const double vhat = v[i] * bc2;
    p[i] -= lr * mhat / (std::sqrt(vhat) + eps) + lr * wd * p[i];
  }
}

}  // namespace

template <>
const Backend<float>* avx2_backend<float>() {
  static const Backend<float> b = {
      "avx2",        &gemm_nn_f32, &gemm_nt_f32,     &gemm_tn_f32,
      &add_f32,      &sub_f32,     &mul_f32,         &axpy_f32,
      &scale_f32,    &relu_fwd_f32, &relu_bwd_f32,   &sum_f32,
      &dot_f32,      &sq_diff_sum_f32, &adam_update_f32};
  return &b;
}

template <>
const Backend<double>* avx2_backend<double>() {
  static const Backend<double> b = {
      "avx2",        &gemm_nn_f64, &gemm_nt_f64,     &gemm_tn_f64,
      &add_f64,      &sub_f64,     &mul_f64,         &axpy_f64,
      &scale_f64,    &relu_fwd_f64, &relu_bwd_f64,   &sum_f64,
      &dot_f64,      &sq_diff_sum_f64, &adam_update_f64};
  return &b;
}

}  // namespace smallvae::kernels

#else  // !SMALLVAE_HAVE_AVX2

namespace smallvae::kernels {

template <>
const Backend<float>* avx2_backend<float>() {
  return nullptr;
}

template <>
const Backend<double>* avx2_backend<double>() {
  return nullptr;
}

}  // namespace smallvae::kernels

#endif
