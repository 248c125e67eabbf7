// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "smallvae/rng.hpp"
#include "smallvae/tensor.hpp"

namespace smallvae::data {

struct Dataset {
  Tensor<float> images;  // N x 3 x H x W, values in [0, 1]
  std::optional<std::vector<int32_t>> labels;  // class ids in [0, 9]
  std::string split;   // "train" or "test"
  std::string source;  // provenance descriptor

  int64_t size() const { return images.dim(0); }
  bool labeled() const { return labels.has_value(); }
};

struct LabeledSubset {
  std::vector<int64_t> indices;  // unique, n_per_class per class
  int64_t n_per_class = 0;
  uint64_t seed = 0;
};

struct BatchPlan {
  int64_t batch_size = 16;
  uint64_t seed = 1;
  bool drop_last = false;
};

struct Batch {
  Tensor<float> images;
  std::vector<int32_t> labels;  // empty when the dataset is unlabeled
};

// CIFAR-10 binary archives: data_batch_{1..5}.bin plus test_batch.bin, each a
// sequence of 3073-byte records (label u8, then 1024 R, 1024 G, 1024 B bytes,
// row-major 32x32). Pixels are normalized as byte/255 exactly.
std::pair<Dataset, Dataset> load_cifar10(const std::string& dir);

// Loads one binary file in the record format above (fixtures, subsets).
Dataset load_cifar10_file(const std::string& path, const std::string& split);

// Stratified uniform sample without replacement, deterministic in the seed.
LabeledSubset sample_labeled_subset(const Dataset& ds, int64_t n_per_class,
                                    uint64_t seed);

// Per-epoch permutation derived from (seed, epoch); contiguous batches over
// the shuffled order. Rerunning an epoch reproduces its permutation exactly.
std::vector<std::vector<int64_t>> batch_indices(int64_t n, const BatchPlan& plan,
                                                int64_t epoch);

Batch gather_batch(const Dataset& ds, const std::vector<int64_t>& indices);
Dataset gather_dataset(const Dataset& ds, const std::vector<int64_t>& indices,
                       const std::string& split_tag);

// Deterministic tiny fixtures: "constant" (all pixels 0.5), "gradient-patterns"
// (oriented linear ramps), "two-gaussians" (binary labels separable by mean
// intensity with a wide margin).
Dataset synth_dataset(const std::string& kind, int64_t n, int64_t size,
                      uint64_t seed);

}  // namespace smallvae::data
