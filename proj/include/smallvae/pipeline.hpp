// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <string>
#include <vector>

#include "smallvae/data.hpp"
#include "smallvae/optim.hpp"
#include "smallvae/vae.hpp"

// Experiment driver: VAE pre-training, encoder freezing, classifier
// fine-tuning, evaluation metrics, pixel-density estimates, and the
// latent-size sweep.
namespace smallvae::pipeline {

using vae::ElboTerms;
using vae::VaeModel;
using ClassifierHead = nn::ClassifierHead<float>;
using AdamF = optim::Adam<float>;

struct PretrainParams {
  int epochs = 100;
  double lr = 1e-4;
  int64_t batch = 16;
  double weight_decay = 1e-3;
  uint64_t seed = 1;
};

struct FinetuneParams {
  int epochs = 50;
  double lr = 1e-3;
  int64_t batch = 32;
  int64_t labels_per_class = 100;
  uint64_t seed = 1;
};

struct DensityLocation {
  int c = 0, h = 0, w = 0;
  bool pooled = false;  // all pixels of channel c across the dataset
  std::string name() const;
};

struct DensityParams {
  std::vector<DensityLocation> locations;
  int grid_points = 101;
  static DensityParams defaults();
};

struct ExperimentConfig {
  nn::LatentConfig latent;
  nn::ArchParams arch;
  PretrainParams pretrain;
  FinetuneParams finetune;
  optim::PlateauScheduler::Config scheduler;
  vae::ReconKind recon = vae::ReconKind::gaussian;
  DensityParams density = DensityParams::defaults();
  std::string data_source = "cifar";  // "cifar" or "synth"
  std::string data_dir = "./data";
  std::string synth_kind = "gradient-patterns";
  int64_t synth_n = 512;
  int64_t synth_size = 32;
  std::string out_dir;

  void validate() const;
};

struct PretrainRow {
  int epoch;
  double train_total, train_kl, train_recon, test_total, test_rmse, lr;
};

struct FinetuneRow {
  int epoch;
  double train_ce, test_ce, test_accuracy, lr;
};

struct MetricsLog {
  std::vector<PretrainRow> pretrain;
  std::vector<FinetuneRow> finetune;
};

struct DensityTable {
  std::vector<double> grid;  // intensity grid over [0, 1]
  std::vector<DensityLocation> locations;
  std::vector<std::vector<double>> density_input;  // one row per location
  std::vector<std::vector<double>> density_recon;
};

// Restored training state for resuming a pre-training run.
struct ResumeState {
  VaeModel model;
  std::vector<Tensor<float>> adam_m, adam_v;
  int64_t adam_t = 0;
  double sched_best = 0.0;
  int sched_since = 0;
  double sched_lr = 0.0;
  int epoch = 0;            // completed epochs
  MetricsLog prior_log;     // rows already trained; resumed runs append to it
};

struct PretrainHooks {
  // Called after every epoch with the live model/optimizer/scheduler; used by
  // the CLI to keep a valid last checkpoint on disk at all times.
  std::function<void(int epoch, VaeModel& model, const AdamF& opt,
                     const optim::PlateauScheduler& sched, const MetricsLog& log)>
      on_epoch_end;
};

struct PretrainResult {
  VaeModel model;
  MetricsLog log;
};

PretrainResult pretrain(const ExperimentConfig& cfg, const data::Dataset& train,
                        const data::Dataset& test, const PretrainHooks& hooks = {},
                        ResumeState* resume = nullptr);

// sqrt(mean over all pixels of (x - decode(mu))^2); deterministic (uses mu).
double test_rmse(const VaeModel& model, const data::Dataset& test);

struct VaeEvalResult {
  double total = 0, kl = 0, recon = 0, rmse = 0;
};

// Per-example test objective (single noise sample from the fixed "eval"
// stream, so successive epochs are compared against identical draws) plus
// the mu-reconstruction RMSE.
VaeEvalResult evaluate_vae(const VaeModel& model, const data::Dataset& test,
                           uint64_t seed, vae::ReconKind kind);

// Deterministic mu features of every example, flattened to [N, flat].
Tensor<float> encode_features(const VaeModel& model, const data::Dataset& ds);

struct FinetuneResult {
  ClassifierHead head;
  MetricsLog log;
};

// Trains the classifier head on frozen-encoder mu features. The encoder and
// decoder parameter bytes are fingerprinted before and after; any change is a
// fatal internal error.
FinetuneResult finetune(const ExperimentConfig& cfg, VaeModel& model,
                        const data::Dataset& train, const data::LabeledSubset& subset,
                        const data::Dataset& test);

// Mean of argmax(logits) == label; ties resolve to the lowest class index.
double accuracy_of_logits(const Tensor<float>& logits,
                          const std::vector<int32_t>& labels);

double evaluate_classifier(const VaeModel& model, const ClassifierHead& head,
                           const data::Dataset& test);

// Gaussian KDE (Silverman bandwidth clamped at 1e-3, reflected at the domain
// ends) of pixel intensities at each location, for inputs and reconstructions,
// on a uniform grid over [0, 1]. Every density is trapezoid-normalized.
DensityTable pixel_density_estimate(const Tensor<float>& inputs,
                                    const Tensor<float>& recons,
                                    const std::vector<DensityLocation>& locations,
                                    int grid_points = 101);

// Density table of a dataset against its mu reconstructions.
DensityTable model_density(const VaeModel& model, const data::Dataset& ds,
                           const DensityParams& params);

struct SweepArm {
  int64_t spatial = 0;
  int64_t flat_size = 0;
  int64_t labels_per_class = 0;
  double test_elbo = 0, test_rmse = 0, test_accuracy = 0;
  bool failed = false;
  std::string error;
};

struct SweepReport {
  std::vector<SweepArm> arms;
};

struct SweepHooks {
  // Fires when an arm's pre-training completes (per-arm artifact writing).
  std::function<void(int64_t spatial, VaeModel& model, const MetricsLog& log,
                     const DensityTable& density)>
      on_pretrained;
  std::function<void(const SweepArm& arm, const MetricsLog& finetune_log)> on_arm;
};

// One pre-training per spatial size, one fine-tune per label budget, identical
// seeds and subsets across sizes. A failed arm is reported, not fatal.
SweepReport sweep(const ExperimentConfig& base, const data::Dataset& train,
                  const data::Dataset& test, const std::vector<int64_t>& spatial_sizes,
                  const std::vector<int64_t>& label_budgets,
                  const SweepHooks& hooks = {});

// Loads the dataset pair named by the config (real archives or synthetic).
std::pair<data::Dataset, data::Dataset> load_config_data(const ExperimentConfig& cfg);

}  // namespace smallvae::pipeline
