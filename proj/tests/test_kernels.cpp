// SPDX-License-Identifier: Apache-2.0
//
// Scalar reference vs AVX2 kernel equivalence, plus triple-loop gemm oracles.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "smallvae/kernels.hpp"

using namespace smallvae;
using oracles::random_tensor;

namespace {

template <class T>
std::vector<const kernels::Backend<T>*> available_backends() {
  std::vector<const kernels::Backend<T>*> out{&kernels::scalar_backend<T>()};
  if (kernels::cpu_has_avx2() && kernels::avx2_backend<T>()) {
    out.push_back(kernels::avx2_backend<T>());
  }
  return out;
}

template <class T>
void check_gemm_against_naive(const kernels::Backend<T>& be, int64_t m, int64_t n,
                              int64_t k, uint64_t seed, double tol) {
  Rng rng(seed);
  Tensor<T> a = random_tensor<T>({m, k}, rng);
  Tensor<T> bnn = random_tensor<T>({k, n}, rng);
  Tensor<T> bnt = random_tensor<T>({n, k}, rng);
  Tensor<T> atn = random_tensor<T>({k, m}, rng);

  const std::vector<double> ref_nn = oracles::naive_matmul(a.data(), bnn.data(), m, n, k);
  Tensor<T> c({m, n});
  be.gemm_nn(a.data(), bnn.data(), c.data(), m, n, k, false);
  for (int64_t i = 0; i < m * n; ++i) {
    CHECK(oracles::rel_error(c[i], ref_nn[static_cast<size_t>(i)]) < tol);
  }
  // accumulate: C += A*B on top of the previous result doubles it
  be.gemm_nn(a.data(), bnn.data(), c.data(), m, n, k, true);
  for (int64_t i = 0; i < m * n; ++i) {
    CHECK(oracles::rel_error(c[i], 2.0 * ref_nn[static_cast<size_t>(i)]) < tol);
  }

  // NT: against naive with B transposed
  Tensor<T> bt({k, n});
  for (int64_t j = 0; j < n; ++j) {
    for (int64_t p = 0; p < k; ++p) bt[p * n + j] = bnt[j * k + p];
  }
  const std::vector<double> ref_nt = oracles::naive_matmul(a.data(), bt.data(), m, n, k);
  be.gemm_nt(a.data(), bnt.data(), c.data(), m, n, k, false);
  for (int64_t i = 0; i < m * n; ++i) {
    CHECK(oracles::rel_error(c[i], ref_nt[static_cast<size_t>(i)]) < tol);
  }

  // TN: against naive with A transposed
  Tensor<T> at({m, k});
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t p = 0; p < k; ++p) at[i * k + p] = atn[p * m + i];
  }
  const std::vector<double> ref_tn = oracles::naive_matmul(at.data(), bnn.data(), m, n, k);
  be.gemm_tn(atn.data(), bnn.data(), c.data(), m, n, k, false);
  for (int64_t i = 0; i < m * n; ++i) {
    CHECK(oracles::rel_error(c[i], ref_tn[static_cast<size_t>(i)]) < tol);
  }
}

}  // namespace

TEST_CASE("gemm variants match the triple-loop oracle (f32)") {
  for (const auto* be : available_backends<float>()) {
    INFO("backend ", be->name);
    check_gemm_against_naive<float>(*be, 7, 9, 13, 1, 2e-4);
    check_gemm_against_naive<float>(*be, 16, 32, 64, 2, 2e-4);
    check_gemm_against_naive<float>(*be, 1, 1, 1, 3, 2e-4);
    check_gemm_against_naive<float>(*be, 5, 8, 100, 4, 2e-4);
  }
}

TEST_CASE("gemm variants match the triple-loop oracle (f64)") {
  for (const auto* be : available_backends<double>()) {
    INFO("backend ", be->name);
    check_gemm_against_naive<double>(*be, 7, 9, 13, 11, 1e-12);
    check_gemm_against_naive<double>(*be, 16, 33, 65, 12, 1e-12);
    check_gemm_against_naive<double>(*be, 3, 4, 2, 13, 1e-12);
  }
}

TEST_CASE("random 3x4 by 4x2 matmul equals the naive reference within 1e-12") {
  Rng rng(99);
  Tensor<double> a = random_tensor<double>({3, 4}, rng);
  Tensor<double> b = random_tensor<double>({4, 2}, rng);
  const auto ref = oracles::naive_matmul(a.data(), b.data(), 3, 2, 4);
  for (const auto* be : available_backends<double>()) {
    Tensor<double> c({3, 2});
    be->gemm_nn(a.data(), b.data(), c.data(), 3, 2, 4, false);
    for (int64_t i = 0; i < 6; ++i) {
      CHECK(std::abs(c[i] - ref[static_cast<size_t>(i)]) < 1e-12);
    }
  }
}

TEST_CASE("scalar and AVX2 elementwise kernels agree") {
  if (!kernels::cpu_has_avx2() || !kernels::avx2_backend<float>()) {
    MESSAGE("AVX2 unavailable; scalar-only build");
    return;
  }
  const auto& sc = kernels::scalar_backend<float>();
  const auto& vx = *kernels::avx2_backend<float>();
  Rng rng(5);
  for (int64_t n : {1, 7, 8, 64, 1000, 1023}) {
    Tensor<float> a = random_tensor<float>({n}, rng);
    Tensor<float> b = random_tensor<float>({n}, rng);
    Tensor<float> y1({n}), y2({n});

    sc.add(a.data(), b.data(), y1.data(), n);
    vx.add(a.data(), b.data(), y2.data(), n);
    for (int64_t i = 0; i < n; ++i) CHECK(y1[i] == y2[i]);

    sc.sub(a.data(), b.data(), y1.data(), n);
    vx.sub(a.data(), b.data(), y2.data(), n);
    for (int64_t i = 0; i < n; ++i) CHECK(y1[i] == y2[i]);

    sc.mul(a.data(), b.data(), y1.data(), n);
    vx.mul(a.data(), b.data(), y2.data(), n);
    for (int64_t i = 0; i < n; ++i) CHECK(y1[i] == y2[i]);

    sc.scale(1.5f, a.data(), y1.data(), n);
    vx.scale(1.5f, a.data(), y2.data(), n);
    for (int64_t i = 0; i < n; ++i) CHECK(y1[i] == y2[i]);

    sc.relu_fwd(a.data(), y1.data(), n);
    vx.relu_fwd(a.data(), y2.data(), n);
    for (int64_t i = 0; i < n; ++i) CHECK(y1[i] == y2[i]);

    Tensor<float> d1 = Tensor<float>::zeros({n}), d2 = Tensor<float>::zeros({n});
    sc.relu_bwd(a.data(), b.data(), d1.data(), n);
    vx.relu_bwd(a.data(), b.data(), d2.data(), n);
    for (int64_t i = 0; i < n; ++i) CHECK(d1[i] == d2[i]);

    // axpy uses FMA on the vector path; inputs are O(1), so compare absolutely
    Tensor<float> z1 = b, z2 = b;
    sc.axpy(0.37f, a.data(), z1.data(), n);
    vx.axpy(0.37f, a.data(), z2.data(), n);
    for (int64_t i = 0; i < n; ++i) {
      CHECK(std::abs(z1[i] - z2[i]) < 1e-6f);
    }

    CHECK(oracles::rel_error(sc.sum(a.data(), n), vx.sum(a.data(), n)) < 1e-4);
    CHECK(oracles::rel_error(sc.dot(a.data(), b.data(), n),
                             vx.dot(a.data(), b.data(), n)) < 1e-3);
    CHECK(oracles::rel_error(sc.sq_diff_sum(a.data(), b.data(), n),
                             vx.sq_diff_sum(a.data(), b.data(), n)) < 1e-3);
  }
}

TEST_CASE("adam kernel: scalar vs AVX2 vs straight-line update") {
  Rng rng(17);
  const int64_t n = 37;
  Tensor<float> p0 = random_tensor<float>({n}, rng);
  Tensor<float> g = random_tensor<float>({n}, rng);
  Tensor<float> m0 = random_tensor<float>({n}, rng, 0.1);
  Tensor<float> v0 = random_tensor<float>({n}, rng, 0.1);
  for (int64_t i = 0; i < n; ++i) v0[i] = std::abs(v0[i]);

  const float lr = 1e-3f, b1 = 0.9f, b2 = 0.999f, eps = 1e-8f, wd = 1e-2f;
  const float bc1 = 1.0f / (1.0f - b1), bc2 = 1.0f / (1.0f - b2);

  // straight-line reimplementation
  std::vector<float> pref(p0.data(), p0.data() + n);
  {
    std::vector<float> m(m0.data(), m0.data() + n), v(v0.data(), v0.data() + n);
    for (int64_t i = 0; i < n; ++i) {
      m[static_cast<size_t>(i)] = b1 * m[static_cast<size_t>(i)] + (1 - b1) * g[i];
      v[static_cast<size_t>(i)] =
          b2 * v[static_cast<size_t>(i)] + (1 - b2) * g[i] * g[i];
      const float mhat = m[static_cast<size_t>(i)] * bc1;
      const float vhat = v[static_cast<size_t>(i)] * bc2;
      pref[static_cast<size_t>(i)] -=
          lr * mhat / (std::sqrt(vhat) + eps) + lr * wd * pref[static_cast<size_t>(i)];
    }
  }

  for (const auto* be : available_backends<float>()) {
    Tensor<float> p = p0, m = m0, v = v0;
    be->adam_update(p.data(), g.data(), m.data(), v.data(), n, lr, b1, b2, eps,
                    wd, bc1, bc2);
    for (int64_t i = 0; i < n; ++i) {
      CHECK(oracles::rel_error(p[i], pref[static_cast<size_t>(i)]) < 1e-5);
    }
  }
}

TEST_CASE("forced ISA selection falls back safely") {
  const kernels::Isa original = kernels::active_isa();
  kernels::force_isa(kernels::Isa::scalar);
  CHECK(kernels::active_isa() == kernels::Isa::scalar);
  CHECK(std::string(kernels::active_backend<float>().name) == "scalar");
  kernels::force_isa(kernels::Isa::avx2);
  if (kernels::cpu_has_avx2()) {
    CHECK(std::string(kernels::active_backend<float>().name) == "avx2");
  } else {
    CHECK(std::string(kernels::active_backend<float>().name) == "scalar");
  }
  kernels::force_isa(original);
}
