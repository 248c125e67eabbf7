// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "smallvae/pipeline.hpp"

// Checkpoint container, bit-exact by construction:
//   magic "VAECKPT1" | version u32 | meta_len u64 | metadata (key=value lines)
//   then tensor entries until EOF:
//   name_len u32 | name | dtype u8 (0=f32, 1=f64) | ndim u32 | dims u64[] |
//   payload (little-endian floats)
// All integers little-endian regardless of host. Unknown versions and any
// declared-length/actual-size disagreement are rejected.
namespace smallvae::ckpt {

constexpr char kMagic[8] = {'V', 'A', 'E', 'C', 'K', 'P', 'T', '1'};
constexpr uint32_t kVersion = 1;

struct TensorEntry {
  std::string name;
  uint8_t dtype = 0;  // 0 = f32, 1 = f64
  Shape dims;
  std::vector<float> f32;
  std::vector<double> f64;
};

class Checkpoint {
 public:
  std::vector<std::pair<std::string, std::string>> metadata;  // ordered
  std::vector<TensorEntry> entries;

  void set_meta(const std::string& key, const std::string& value);
  std::optional<std::string> meta(const std::string& key) const;
  std::string require_meta(const std::string& key) const;

  void add_tensor(const std::string& name, const Tensor<float>& t);
  void add_tensor(const std::string& name, const Tensor<double>& t);
  bool has_tensor(const std::string& name) const;
  Tensor<float> tensor_f32(const std::string& name) const;
  Tensor<double> tensor_f64(const std::string& name) const;

  std::vector<std::byte> serialize() const;
  static Checkpoint deserialize(const std::vector<std::byte>& bytes,
                                const std::string& origin);

  // Atomic: writes to a temp file, then renames over the target.
  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);
};

// ---- run-level state ----

struct RunState {
  pipeline::ExperimentConfig cfg;
  vae::VaeModel model;
  bool has_optimizer = false;
  std::vector<Tensor<float>> adam_m, adam_v;
  int64_t adam_t = 0;
  double sched_best = 0;
  int sched_since = 0;
  double sched_lr = 0;
  int epoch = 0;
  std::string phase;  // "pretrain" or "finetune"
  pipeline::MetricsLog log;  // rows recorded up to `epoch`
  std::optional<nn::ClassifierHead<float>> head;
};

void save_run(const std::string& path, const pipeline::ExperimentConfig& cfg,
              vae::VaeModel& model, const pipeline::AdamF* opt,
              const optim::PlateauScheduler* sched, int epoch,
              const std::string& phase,
              nn::ClassifierHead<float>* head = nullptr,
              const pipeline::MetricsLog* log = nullptr);

RunState load_run(const std::string& path);

pipeline::ResumeState to_resume_state(RunState&& run);

}  // namespace smallvae::ckpt
