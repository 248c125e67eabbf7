// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "smallvae/tensor.hpp"

namespace smallvae {

// Seeded generator with named sub-streams. All randomness in a run flows from
// one config seed; independent consumers (init / shuffle / noise / eval / ...)
// derive their own stream as
//
//   stream_seed = splitmix64(seed ^ fnv1a64(stream_name)) then mixed with the
//   stream index (epoch, class, ...) via another splitmix64 round.
//
// Adding a new stream name never perturbs the draws of existing streams.
// The engine is std::mt19937_64, which the standard pins bit-exactly, and
// normals come from Box-Muller over our own 53-bit uniforms, so sequences are
// reproducible across platforms.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}
  Rng(uint64_t seed, std::string_view stream, uint64_t index = 0)
      : eng_(split_seed(seed, stream, index)) {}

  static uint64_t fnv1a64(std::string_view s);
  static uint64_t splitmix64(uint64_t x);
  static uint64_t split_seed(uint64_t seed, std::string_view stream,
                             uint64_t index = 0);

  uint64_t next_u64() { return eng_(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform();

  // Standard normal via Box-Muller; the paired draw is cached.
  double normal();

  // Uniform integer on [0, n), unbiased (rejection sampling).
  int64_t uniform_int(int64_t n);

  template <class T>
  void fill_normal(Tensor<T>& t, double mean, double stddev) {
    for (int64_t i = 0; i < t.numel(); ++i) {
      t[i] = static_cast<T>(mean + stddev * normal());
    }
  }

  template <class It>
  void shuffle(It first, It last) {
    const int64_t n = static_cast<int64_t>(last - first);
    for (int64_t i = n - 1; i > 0; --i) {
      const int64_t j = uniform_int(i + 1);
      std::swap(first[i], first[j]);
    }
  }

 private:
  std::mt19937_64 eng_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace smallvae
