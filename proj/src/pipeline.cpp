// SPDX-License-Identifier: Apache-2.0
#include "smallvae/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace smallvae::pipeline {

namespace {

constexpr int64_t kEvalBatch = 64;

std::vector<std::vector<int64_t>> sequential_chunks(int64_t n, int64_t chunk) {
  std::vector<std::vector<int64_t>> out;
  for (int64_t start = 0; start < n; start += chunk) {
    const int64_t end = std::min(n, start + chunk);
    std::vector<int64_t> idx(static_cast<size_t>(end - start));
    for (int64_t i = start; i < end; ++i) idx[static_cast<size_t>(i - start)] = i;
    out.push_back(std::move(idx));
  }
  return out;
}

}  // namespace

std::string DensityLocation::name() const {
  if (pooled) return "c" + std::to_string(c) + "_pooled";
  return "c" + std::to_string(c) + "_h" + std::to_string(h) + "_w" +
         std::to_string(w);
}

DensityParams DensityParams::defaults() {
  DensityParams p;
  p.locations = {{0, 8, 8, false}, {0, 8, 24, false}, {0, 24, 8, false},
                 {0, 24, 24, false}, {0, 0, 0, true}};
  return p;
}

void ExperimentConfig::validate() const {
  if (latent.channels < 1 || latent.spatial < 1) {
    throw ConfigError("config: latent dimensions must be positive");
  }
  if (pretrain.epochs < 0 || pretrain.lr <= 0 || pretrain.batch < 1 ||
      pretrain.weight_decay < 0) {
    throw ConfigError("config: invalid pretrain parameters");
  }
  if (finetune.epochs < 0 || finetune.lr <= 0 || finetune.batch < 1 ||
      finetune.labels_per_class < 1) {
    throw ConfigError("config: invalid finetune parameters");
  }
  if (density.grid_points < 2) {
    throw ConfigError("config: density grid needs at least 2 points");
  }
  if (data_source != "cifar" && data_source != "synth") {
    throw ConfigError("config: data source must be 'cifar' or 'synth', got '" +
                      data_source + "'");
  }
}

std::pair<data::Dataset, data::Dataset> load_config_data(const ExperimentConfig& cfg) {
  if (cfg.data_source == "cifar") {
    return data::load_cifar10(cfg.data_dir);
  }
  data::Dataset train =
      data::synth_dataset(cfg.synth_kind, cfg.synth_n, cfg.synth_size,
                          cfg.pretrain.seed);
  data::Dataset test =
      data::synth_dataset(cfg.synth_kind, std::max<int64_t>(1, cfg.synth_n / 4),
                          cfg.synth_size, cfg.pretrain.seed + 1);
  test.split = "test";
  return {std::move(train), std::move(test)};
}

double test_rmse(const VaeModel& model, const data::Dataset& test) {
  if (test.size() == 0) throw DataError("test_rmse: empty dataset");
  double sq = 0.0;
  for (const auto& idx : sequential_chunks(test.size(), kEvalBatch)) {
    const data::Batch b = data::gather_batch(test, idx);
    auto [mu, logvar] = model.encode_infer(b.images);
    const Tensor<float> recon = model.decode_infer(mu);
    sq += static_cast<double>(nnops::be<float>().sq_diff_sum(
        recon.data(), b.images.data(), b.images.numel()));
  }
  return std::sqrt(sq / static_cast<double>(test.images.numel()));
}

VaeEvalResult evaluate_vae(const VaeModel& model, const data::Dataset& test,
                           uint64_t seed, vae::ReconKind kind) {
  if (test.size() == 0) throw DataError("evaluate_vae: empty dataset");
  Rng eval_rng(seed, "eval");
  VaeEvalResult r;
  double sq = 0.0;
  auto& m = const_cast<VaeModel&>(model);  // forward passes do not mutate
  for (const auto& idx : sequential_chunks(test.size(), kEvalBatch)) {
    const data::Batch b = data::gather_batch(test, idx);
    const double weight = static_cast<double>(idx.size());
    ag::Graph<float> g;
    auto ev = vae::elbo_graph(g, m, b.images, eval_rng, kind);
    const ElboTerms terms = ev.terms();
    r.total += terms.total * weight;
    r.kl += terms.kl * weight;
    r.recon += terms.recon * weight;
    const Tensor<float> recon_mu = model.decode_infer(ev.mu.value());
    sq += static_cast<double>(nnops::be<float>().sq_diff_sum(
        recon_mu.data(), b.images.data(), b.images.numel()));
  }
  const double n = static_cast<double>(test.size());
  r.total /= n;
  r.kl /= n;
  r.recon /= n;
  r.rmse = std::sqrt(sq / static_cast<double>(test.images.numel()));
  return r;
}

PretrainResult pretrain(const ExperimentConfig& cfg, const data::Dataset& train,
                        const data::Dataset& test, const PretrainHooks& hooks,
                        ResumeState* resume) {
  cfg.validate();
  PretrainResult result;
  int start_epoch = 0;
  if (resume) {
    result.model = std::move(resume->model);
    result.log = std::move(resume->prior_log);
    start_epoch = resume->epoch;
  } else {
    Rng init_rng(cfg.pretrain.seed, "init");
    result.model = vae::build_vae<float>(cfg.latent, cfg.arch, init_rng);
  }
  result.model.recon = cfg.recon;

  AdamF::Hyper hyper;
  hyper.lr = static_cast<float>(cfg.pretrain.lr);
  hyper.weight_decay = static_cast<float>(cfg.pretrain.weight_decay);
  AdamF opt(result.model.parameters(), hyper);
  optim::PlateauScheduler sched(cfg.pretrain.lr, cfg.scheduler);
  if (resume) {
    opt.restore(std::move(resume->adam_m), std::move(resume->adam_v), resume->adam_t);
    sched.restore(resume->sched_best, resume->sched_since, resume->sched_lr);
    opt.set_lr(static_cast<float>(sched.lr()));
  }

  const data::BatchPlan plan{cfg.pretrain.batch, cfg.pretrain.seed, false};
  for (int epoch = start_epoch + 1; epoch <= cfg.pretrain.epochs; ++epoch) {
    Rng noise(cfg.pretrain.seed, "noise", static_cast<uint64_t>(epoch));
    double sum_total = 0, sum_kl = 0, sum_recon = 0;
    const auto batches = data::batch_indices(train.size(), plan, epoch);
    for (size_t bi = 0; bi < batches.size(); ++bi) {
      const data::Batch b = data::gather_batch(train, batches[bi]);
      opt.zero_grad();
      ag::Graph<float> g;
      auto ev = vae::elbo_graph(g, result.model, b.images, noise, cfg.recon);
      const ElboTerms terms = ev.terms();
      if (!std::isfinite(terms.total)) {
        throw NumericError("pretrain: non-finite loss at epoch " +
                           std::to_string(epoch) + " batch " + std::to_string(bi));
      }
      g.backward(ev.total);
      g.accumulate_param_grads();
      opt.step();
      const double w = static_cast<double>(batches[bi].size());
      sum_total += terms.total * w;
      sum_kl += terms.kl * w;
      sum_recon += terms.recon * w;
    }
    const double n = static_cast<double>(train.size());
    const VaeEvalResult ev = evaluate_vae(result.model, test, cfg.pretrain.seed,
                                          cfg.recon);
    const double lr = sched.step(ev.rmse);
    opt.set_lr(static_cast<float>(lr));
    result.log.pretrain.push_back({epoch, sum_total / n, sum_kl / n, sum_recon / n,
                                   ev.total, ev.rmse, lr});
    if (hooks.on_epoch_end) {
      hooks.on_epoch_end(epoch, result.model, opt, sched, result.log);
    }
  }
  return result;
}

Tensor<float> encode_features(const VaeModel& model, const data::Dataset& ds) {
  const int64_t flat = model.latent.flat();
  Tensor<float> features({ds.size(), flat});
  for (const auto& idx : sequential_chunks(ds.size(), kEvalBatch)) {
    const data::Batch b = data::gather_batch(ds, idx);
    auto [mu, logvar] = model.encode_infer(b.images);
    std::copy_n(mu.data(), mu.numel(), features.data() + idx.front() * flat);
  }
  return features;
}

double accuracy_of_logits(const Tensor<float>& logits,
                          const std::vector<int32_t>& labels) {
  const int64_t n = logits.dim(0), classes = logits.dim(1);
  int64_t hits = 0;
  for (int64_t i = 0; i < n; ++i) {
    const float* row = logits.data() + i * classes;
    int32_t arg = 0;
    for (int64_t c = 1; c < classes; ++c) {
      if (row[c] > row[arg]) arg = static_cast<int32_t>(c);  // ties keep lowest
    }
    if (arg == labels[static_cast<size_t>(i)]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(n);
}

namespace {

double mean_cross_entropy(const Tensor<float>& logits,
                          const std::vector<int32_t>& labels) {
  return static_cast<double>(nnops::softmax_ce_value(logits, labels).first);
}

Tensor<float> gather_rows(const Tensor<float>& mat, const std::vector<int64_t>& idx) {
  const int64_t width = mat.dim(1);
  Tensor<float> out({static_cast<int64_t>(idx.size()), width});
  for (size_t i = 0; i < idx.size(); ++i) {
    std::copy_n(mat.data() + idx[i] * width, width,
                out.data() + static_cast<int64_t>(i) * width);
  }
  return out;
}

}  // namespace

FinetuneResult finetune(const ExperimentConfig& cfg, VaeModel& model,
                        const data::Dataset& train, const data::LabeledSubset& subset,
                        const data::Dataset& test) {
  cfg.validate();
  if (!train.labeled() || !test.labeled()) {
    throw DataError("finetune: labeled train and test datasets required");
  }
  const uint64_t before = model.fingerprint();
  model.set_trainable(false);

  const data::Dataset sub = data::gather_dataset(train, subset.indices, "train");
  const Tensor<float> train_feats = encode_features(model, sub);
  const std::vector<int32_t>& train_labels = *sub.labels;
  const Tensor<float> test_feats = encode_features(model, test);
  const std::vector<int32_t>& test_labels = *test.labels;

  FinetuneResult result;
  Rng head_rng(cfg.finetune.seed, "init");
  result.head = nn::build_classifier<float>(cfg.latent, cfg.arch, head_rng);

  AdamF::Hyper hyper;
  hyper.lr = static_cast<float>(cfg.finetune.lr);
  AdamF opt(result.head.parameters(), hyper);

  const data::BatchPlan plan{cfg.finetune.batch, cfg.finetune.seed, false};
  const int64_t n = sub.size();
  for (int epoch = 1; epoch <= cfg.finetune.epochs; ++epoch) {
    double ce_sum = 0;
    for (const auto& idx : data::batch_indices(n, plan, epoch)) {
      Tensor<float> feats = gather_rows(train_feats, idx);
      std::vector<int32_t> labels(idx.size());
      for (size_t i = 0; i < idx.size(); ++i) {
        labels[i] = train_labels[static_cast<size_t>(idx[i])];
      }
      opt.zero_grad();
      ag::Graph<float> g;
      ag::Var<float> logits = result.head.forward(g, g.constant(std::move(feats)));
      ag::Var<float> loss = ag::cross_entropy(logits, labels);
      if (!std::isfinite(loss.value()[0])) {
        throw NumericError("finetune: non-finite loss at epoch " +
                           std::to_string(epoch));
      }
      g.backward(loss);
      g.accumulate_param_grads();
      opt.step();
      ce_sum += static_cast<double>(loss.value()[0]) * static_cast<double>(idx.size());
    }
    const Tensor<float> test_logits = result.head.infer(test_feats);
    result.log.finetune.push_back({epoch, ce_sum / static_cast<double>(n),
                                   mean_cross_entropy(test_logits, test_labels),
                                   accuracy_of_logits(test_logits, test_labels),
                                   static_cast<double>(opt.lr())});
  }

  if (model.fingerprint() != before) {
    throw Error("finetune: frozen encoder/decoder parameters were mutated");
  }
  model.set_trainable(true);
  return result;
}

double evaluate_classifier(const VaeModel& model, const ClassifierHead& head,
                           const data::Dataset& test) {
  if (!test.labeled()) throw DataError("evaluate_classifier: unlabeled dataset");
  const Tensor<float> feats = encode_features(model, test);
  return accuracy_of_logits(head.infer(feats), *test.labels);
}

// ------------------------------------------------------------------- KDE ---

namespace {

// Gaussian KDE on [0, 1] with reflection at both ends; contributions beyond
// 8 bandwidths are dropped. The result is normalized so the trapezoid
// integral over the grid is exactly 1.
std::vector<double> kde_on_grid(const std::vector<double>& samples,
                                const std::vector<double>& grid) {
  const size_t n = samples.size();
  double mean = 0;
  for (double v : samples) mean += v;
  mean /= static_cast<double>(n);
  double var = 0;
  for (double v : samples) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n);
  const double sd = std::sqrt(var);
  std::vector<double> sorted(samples);
  std::sort(sorted.begin(), sorted.end());
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(n - 1);
    const size_t lo = static_cast<size_t>(pos);
    const size_t hi = std::min(n - 1, lo + 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
  };
  const double iqr = quantile(0.75) - quantile(0.25);
  double spread = sd;
  if (iqr > 0) spread = std::min(spread, iqr / 1.34);
  double h = 0.9 * spread * std::pow(static_cast<double>(n), -0.2);
  h = std::max(h, 1e-3);  // Silverman bandwidth, clamped

  const double step = grid[1] - grid[0];
  std::vector<double> density(grid.size(), 0.0);
  const double window = 8.0 * h;
  auto deposit = [&](double center) {
    const int64_t lo = std::max<int64_t>(
        0, static_cast<int64_t>(std::ceil((center - window - grid[0]) / step)));
    const int64_t hi = std::min<int64_t>(
        static_cast<int64_t>(grid.size()) - 1,
        static_cast<int64_t>(std::floor((center + window - grid[0]) / step)));
    for (int64_t j = lo; j <= hi; ++j) {
      const double t = (grid[static_cast<size_t>(j)] - center) / h;
      density[static_cast<size_t>(j)] += std::exp(-0.5 * t * t);
    }
  };
  for (double x : samples) {
    deposit(x);
    deposit(-x);        // reflection at 0
    deposit(2.0 - x);   // reflection at 1
  }
  const double scale =
      1.0 / (static_cast<double>(n) * h * std::sqrt(2.0 * std::numbers::pi));
  for (double& d : density) d *= scale;

  double integral = 0;
  for (size_t j = 0; j + 1 < density.size(); ++j) {
    integral += 0.5 * (density[j] + density[j + 1]) * step;
  }
  if (integral > 0) {
    for (double& d : density) d /= integral;
  }
  return density;
}

std::vector<double> collect_samples(const Tensor<float>& t,
                                    const DensityLocation& loc) {
  const int64_t n = t.dim(0), c = t.dim(1), h = t.dim(2), w = t.dim(3);
  if (loc.c < 0 || loc.c >= c ||
      (!loc.pooled && (loc.h < 0 || loc.h >= h || loc.w < 0 || loc.w >= w))) {
    throw ConfigError("density: location " + loc.name() + " out of range for " +
                      shape_str(t.shape()));
  }
  std::vector<double> out;
  if (loc.pooled) {
    out.reserve(static_cast<size_t>(n * h * w));
    for (int64_t i = 0; i < n; ++i) {
      const float* plane = t.data() + (i * c + loc.c) * h * w;
      for (int64_t p = 0; p < h * w; ++p) out.push_back(plane[p]);
    }
  } else {
    out.reserve(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
      out.push_back(t.data()[((i * c + loc.c) * h + loc.h) * w + loc.w]);
    }
  }
  return out;
}

}  // namespace

DensityTable pixel_density_estimate(const Tensor<float>& inputs,
                                    const Tensor<float>& recons,
                                    const std::vector<DensityLocation>& locations,
                                    int grid_points) {
  if (!inputs.same_shape(recons)) {
    throw ShapeError("density: inputs " + shape_str(inputs.shape()) +
                     " vs recons " + shape_str(recons.shape()));
  }
  if (inputs.dim(0) < 1) throw DataError("density: empty dataset");
  DensityTable table;
  table.grid.resize(static_cast<size_t>(grid_points));
  for (int j = 0; j < grid_points; ++j) {
    table.grid[static_cast<size_t>(j)] =
        static_cast<double>(j) / static_cast<double>(grid_points - 1);
  }
  table.locations = locations;
  for (const DensityLocation& loc : locations) {
    table.density_input.push_back(kde_on_grid(collect_samples(inputs, loc), table.grid));
    table.density_recon.push_back(kde_on_grid(collect_samples(recons, loc), table.grid));
  }
  return table;
}

DensityTable model_density(const VaeModel& model, const data::Dataset& ds,
                           const DensityParams& params) {
  Tensor<float> recons(ds.images.shape());
  const int64_t per_image = ds.images.numel() / ds.size();
  for (const auto& idx : sequential_chunks(ds.size(), kEvalBatch)) {
    const data::Batch b = data::gather_batch(ds, idx);
    auto [mu, logvar] = model.encode_infer(b.images);
    const Tensor<float> r = model.decode_infer(mu);
    std::copy_n(r.data(), r.numel(), recons.data() + idx.front() * per_image);
  }
  return pixel_density_estimate(ds.images, recons, params.locations,
                                params.grid_points);
}

// ----------------------------------------------------------------- sweep ---

SweepReport sweep(const ExperimentConfig& base, const data::Dataset& train,
                  const data::Dataset& test, const std::vector<int64_t>& spatial_sizes,
                  const std::vector<int64_t>& label_budgets,
                  const SweepHooks& hooks) {
  SweepReport report;
  const std::vector<int64_t> budgets =
      label_budgets.empty() ? std::vector<int64_t>{base.finetune.labels_per_class}
                            : label_budgets;
  for (int64_t spatial : spatial_sizes) {
    ExperimentConfig cfg = base;
    cfg.latent.spatial = spatial;
    try {
      PretrainResult pre = pretrain(cfg, train, test);
      const VaeEvalResult ev =
          evaluate_vae(pre.model, test, cfg.pretrain.seed, cfg.recon);
      if (hooks.on_pretrained) {
        const DensityTable density = model_density(pre.model, test, cfg.density);
        hooks.on_pretrained(spatial, pre.model, pre.log, density);
      }
      for (int64_t budget : budgets) {
        SweepArm arm;
        arm.spatial = spatial;
        arm.flat_size = cfg.latent.flat();
        arm.labels_per_class = budget;
        try {
          ExperimentConfig arm_cfg = cfg;
          arm_cfg.finetune.labels_per_class = budget;
          const data::LabeledSubset subset =
              data::sample_labeled_subset(train, budget, arm_cfg.finetune.seed);
          FinetuneResult fine = finetune(arm_cfg, pre.model, train, subset, test);
          arm.test_elbo = ev.total;
          arm.test_rmse = ev.rmse;
          arm.test_accuracy = fine.log.finetune.empty()
                                  ? evaluate_classifier(pre.model, fine.head, test)
                                  : fine.log.finetune.back().test_accuracy;
          if (hooks.on_arm) hooks.on_arm(arm, fine.log);
        } catch (const std::exception& e) {
          arm.failed = true;
          arm.error = e.what();
          if (hooks.on_arm) hooks.on_arm(arm, MetricsLog{});
        }
        report.arms.push_back(std::move(arm));
      }
    } catch (const std::exception& e) {
      SweepArm arm;
      arm.spatial = spatial;
      arm.flat_size = cfg.latent.flat();
      arm.labels_per_class = budgets.front();
      arm.failed = true;
      arm.error = e.what();
      if (hooks.on_arm) hooks.on_arm(arm, MetricsLog{});
      report.arms.push_back(std::move(arm));
    }
  }
  return report;
}

}  // namespace smallvae::pipeline
