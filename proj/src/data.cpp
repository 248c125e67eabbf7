// SPDX-License-Identifier: Apache-2.0
#include "smallvae/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "smallvae/error.hpp"

namespace smallvae::data {

namespace {

constexpr int64_t kImageDim = 32;
constexpr int64_t kChannels = 3;
constexpr int64_t kRecordBytes = 1 + kChannels * kImageDim * kImageDim;  // 3073

std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cifar10: missing file " + path);
  in.seekg(0, std::ios::end);
  const std::streamoff len = in.tellg();
  in.seekg(0, std::ios::beg);
  std::vector<unsigned char> bytes(static_cast<size_t>(len));
  if (len > 0) in.read(reinterpret_cast<char*>(bytes.data()), len);
  if (!in) throw DataError("cifar10: failed reading " + path);
  return bytes;
}

void parse_records(const std::vector<unsigned char>& bytes,
                   const std::string& path, std::vector<float>& pixels,
                   std::vector<int32_t>& labels) {
  if (bytes.size() % kRecordBytes != 0) {
    throw DataError("cifar10: file size " + std::to_string(bytes.size()) +
                    " of " + path + " is not a multiple of " +
                    std::to_string(kRecordBytes));
  }
  const int64_t n = static_cast<int64_t>(bytes.size()) / kRecordBytes;
  const int64_t plane = kChannels * kImageDim * kImageDim;
  pixels.reserve(pixels.size() + static_cast<size_t>(n * plane));
  labels.reserve(labels.size() + static_cast<size_t>(n));
  for (int64_t r = 0; r < n; ++r) {
    const unsigned char* rec = bytes.data() + r * kRecordBytes;
    if (rec[0] > 9) {
      throw DataError("cifar10: label byte " + std::to_string(rec[0]) +
                      " out of range in " + path + " record " + std::to_string(r));
    }
    labels.push_back(static_cast<int32_t>(rec[0]));
    for (int64_t i = 0; i < plane; ++i) {
      pixels.push_back(static_cast<float>(rec[1 + i]) / 255.0f);
    }
  }
}

Dataset from_records(std::vector<float> pixels, std::vector<int32_t> labels,
                     const std::string& split, const std::string& source) {
  const int64_t n = static_cast<int64_t>(labels.size());
  if (n == 0) throw DataError("cifar10: no records in " + source);
  Dataset ds;
  ds.images = Tensor<float>({n, kChannels, kImageDim, kImageDim}, std::move(pixels));
  ds.labels = std::move(labels);
  ds.split = split;
  ds.source = source;
  return ds;
}

}  // namespace

Dataset load_cifar10_file(const std::string& path, const std::string& split) {
  std::vector<float> pixels;
  std::vector<int32_t> labels;
  parse_records(read_file(path), path, pixels, labels);
  return from_records(std::move(pixels), std::move(labels), split, path);
}

std::pair<Dataset, Dataset> load_cifar10(const std::string& dir) {
  namespace fs = std::filesystem;
  std::vector<float> pixels;
  std::vector<int32_t> labels;
  for (int i = 1; i <= 5; ++i) {
    const std::string path =
        (fs::path(dir) / ("data_batch_" + std::to_string(i) + ".bin")).string();
    parse_records(read_file(path), path, pixels, labels);
  }
  Dataset train = from_records(std::move(pixels), std::move(labels), "train", dir);
  Dataset test =
      load_cifar10_file((fs::path(dir) / "test_batch.bin").string(), "test");
  test.split = "test";
  test.source = dir;
  return {std::move(train), std::move(test)};
}

LabeledSubset sample_labeled_subset(const Dataset& ds, int64_t n_per_class,
                                    uint64_t seed) {
  if (!ds.labeled()) {
    throw DataError("sample_labeled_subset: dataset '" + ds.source +
                    "' has no labels");
  }
  std::vector<std::vector<int64_t>> by_class(10);
  for (int64_t i = 0; i < ds.size(); ++i) {
    by_class[static_cast<size_t>((*ds.labels)[static_cast<size_t>(i)])].push_back(i);
  }
  LabeledSubset subset;
  subset.n_per_class = n_per_class;
  subset.seed = seed;
  for (size_t cls = 0; cls < by_class.size(); ++cls) {
    auto& pool = by_class[cls];
    if (pool.empty()) continue;  // absent class (binary synthetic sets)
    if (n_per_class > static_cast<int64_t>(pool.size())) {
      throw DataError("sample_labeled_subset: class " + std::to_string(cls) +
                      " has only " + std::to_string(pool.size()) + " examples, " +
                      std::to_string(n_per_class) + " requested");
    }
    Rng rng(seed, "subset", static_cast<uint64_t>(cls));
    rng.shuffle(pool.begin(), pool.end());
    subset.indices.insert(subset.indices.end(), pool.begin(),
                          pool.begin() + n_per_class);
  }
  return subset;
}

std::vector<std::vector<int64_t>> batch_indices(int64_t n, const BatchPlan& plan,
                                                int64_t epoch) {
  if (plan.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  std::vector<int64_t> order(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
  Rng rng(plan.seed, "shuffle", static_cast<uint64_t>(epoch));
  rng.shuffle(order.begin(), order.end());
  std::vector<std::vector<int64_t>> batches;
  for (int64_t start = 0; start < n; start += plan.batch_size) {
    const int64_t end = std::min(n, start + plan.batch_size);
    if (plan.drop_last && end - start < plan.batch_size) break;
    batches.emplace_back(order.begin() + start, order.begin() + end);
  }
  return batches;
}

Batch gather_batch(const Dataset& ds, const std::vector<int64_t>& indices) {
  const int64_t per_image = ds.images.numel() / ds.size();
  Batch batch;
  Shape shape = ds.images.shape();
  shape[0] = static_cast<int64_t>(indices.size());
  batch.images = Tensor<float>(shape);
  for (size_t i = 0; i < indices.size(); ++i) {
    std::copy_n(ds.images.data() + indices[i] * per_image, per_image,
                batch.images.data() + static_cast<int64_t>(i) * per_image);
    if (ds.labeled()) {
      batch.labels.push_back((*ds.labels)[static_cast<size_t>(indices[i])]);
    }
  }
  return batch;
}

Dataset gather_dataset(const Dataset& ds, const std::vector<int64_t>& indices,
                       const std::string& split_tag) {
  Batch b = gather_batch(ds, indices);
  Dataset out;
  out.images = std::move(b.images);
  if (ds.labeled()) out.labels = std::move(b.labels);
  out.split = split_tag;
  out.source = ds.source + ":subset";
  return out;
}

Dataset synth_dataset(const std::string& kind, int64_t n, int64_t size,
                      uint64_t seed) {
  if (n < 1) throw ConfigError("synth_dataset: n must be >= 1");
  Dataset ds;
  ds.images = Tensor<float>({n, kChannels, size, size});
  ds.split = "train";
  ds.source = "synth:" + kind;
  Rng rng(seed, "synth");
  float* px = ds.images.data();
  const int64_t plane = size * size;
  auto clip01 = [](double v) {
    return static_cast<float>(std::min(1.0, std::max(0.0, v)));
  };

  if (kind == "constant") {
    std::fill(px, px + ds.images.numel(), 0.5f);
  } else if (kind == "gradient-patterns") {
    for (int64_t img = 0; img < n; ++img) {
      const double theta = rng.uniform() * 2.0 * std::numbers::pi;
      const double offset = 0.25 + 0.5 * rng.uniform();
      const double slope = 0.3 + 0.4 * rng.uniform();
      const double cx = std::cos(theta), sx = std::sin(theta);
      for (int64_t c = 0; c < kChannels; ++c) {
        const double tint = 0.9 + 0.1 * static_cast<double>(c) / kChannels;
        float* p = px + (img * kChannels + c) * plane;
        for (int64_t y = 0; y < size; ++y) {
          for (int64_t x = 0; x < size; ++x) {
            const double u = static_cast<double>(x) / static_cast<double>(size);
            const double v = static_cast<double>(y) / static_cast<double>(size);
            p[y * size + x] = clip01(tint * (offset + slope * (u * cx + v * sx) - slope / 2.0));
          }
        }
      }
    }
  } else if (kind == "two-gaussians") {
    // Each image is a solid intensity drawn from its class Gaussian,
    // N(0.3, 0.05) or N(0.7, 0.05), truncated away from the 0.5 boundary so
    // per-image means are always separable by that threshold.
    std::vector<int32_t> labels(static_cast<size_t>(n));
    for (int64_t img = 0; img < n; ++img) {
      const int32_t label = static_cast<int32_t>(img % 2);
      labels[static_cast<size_t>(img)] = label;
      const double mean = label == 0 ? 0.3 : 0.7;
      double value = mean + 0.05 * rng.normal();
      value = label == 0 ? std::min(0.48, std::max(0.05, value))
                         : std::min(0.95, std::max(0.52, value));
      for (int64_t i = 0; i < kChannels * plane; ++i) {
        px[img * kChannels * plane + i] = clip01(value);
      }
    }
    ds.labels = std::move(labels);
  } else {
    throw ConfigError("synth_dataset: unknown kind '" + kind + "'");
  }
  return ds;
}

}  // namespace smallvae::data
