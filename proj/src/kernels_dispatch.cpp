// SPDX-License-Identifier: Apache-2.0
#include <atomic>
#include <cstdlib>
#include <cstring>

#include "smallvae/kernels.hpp"

namespace smallvae::kernels {
namespace {

Isa detect() {
  if (const char* env = std::getenv("SMALLVAE_SIMD")) {
    if (std::strcmp(env, "scalar") == 0) return Isa::scalar;
    if (std::strcmp(env, "avx2") == 0) {
      return cpu_has_avx2() && avx2_backend<float>() ? Isa::avx2 : Isa::scalar;
    }
    // anything else falls through to auto
  }
  return cpu_has_avx2() && avx2_backend<float>() ? Isa::avx2 : Isa::scalar;
}

std::atomic<Isa>& selected() {
  static std::atomic<Isa> isa{detect()};
  return isa;
}

}  // namespace

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(_M_X64)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa active_isa() { return selected().load(std::memory_order_relaxed); }

void force_isa(Isa isa) {
  if (isa == Isa::avx2 && (!cpu_has_avx2() || !avx2_backend<float>())) {
    isa = Isa::scalar;
  }
  selected().store(isa, std::memory_order_relaxed);
}

template <class T>
const Backend<T>& active_backend() {
  if (active_isa() == Isa::avx2) {
    if (const Backend<T>* b = avx2_backend<T>()) return *b;
  }
  return scalar_backend<T>();
}

template const Backend<float>& active_backend<float>();
template const Backend<double>& active_backend<double>();

}  // namespace smallvae::kernels
