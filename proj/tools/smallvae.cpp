// SPDX-License-Identifier: Apache-2.0
//
// smallvae command line: pretrain | finetune | sweep | eval | inspect-data.
// Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numeric failure.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "smallvae/checkpoint.hpp"
#include "smallvae/config.hpp"
#include "smallvae/csv.hpp"
#include "smallvae/data.hpp"
#include "smallvae/pipeline.hpp"

namespace fs = std::filesystem;
using namespace smallvae;

namespace {

struct CommonOpts {
  std::string config_path;
  std::string data_dir;
  std::string out_dir;
};

pipeline::ExperimentConfig load_config(const CommonOpts& opts) {
  pipeline::ExperimentConfig cfg = opts.config_path.empty()
                                       ? config::defaults()
                                       : config::parse_file(opts.config_path);
  if (!opts.data_dir.empty()) cfg.data_dir = opts.data_dir;
  if (!opts.out_dir.empty()) cfg.out_dir = opts.out_dir;
  return cfg;
}

void prepare_out_dir(const pipeline::ExperimentConfig& cfg) {
  if (cfg.out_dir.empty()) throw ConfigError("an output directory is required (--out)");
  fs::create_directories(cfg.out_dir);
  config::write_resolved((fs::path(cfg.out_dir) / "config_resolved.toml").string(), cfg);
}

std::vector<int64_t> parse_int_list(const std::string& text, const char* what) {
  std::vector<int64_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    char* end = nullptr;
    const long long v = std::strtoll(item.c_str(), &end, 10);
    if (end == item.c_str() || *end != '\0' || v < 1) {
      throw ConfigError(std::string("invalid ") + what + " entry '" + item + "'");
    }
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError(std::string("empty ") + what + " list");
  return out;
}

int run_pretrain(const CommonOpts& opts, const std::string& resume_path,
                 int epochs_override, int64_t seed_override) {
  pipeline::ExperimentConfig cfg;
  pipeline::ResumeState resume_state;
  pipeline::ResumeState* resume = nullptr;
  if (!resume_path.empty()) {
    ckpt::RunState run = ckpt::load_run(resume_path);
    cfg = run.cfg;  // a resumed run continues under its recorded config
    if (!opts.data_dir.empty()) cfg.data_dir = opts.data_dir;
    if (!opts.out_dir.empty()) cfg.out_dir = opts.out_dir;
    resume_state = ckpt::to_resume_state(std::move(run));
    resume = &resume_state;
    std::printf("resuming from %s at epoch %d\n", resume_path.c_str(),
                resume_state.epoch);
  } else {
    cfg = load_config(opts);
  }
  if (epochs_override > 0) cfg.pretrain.epochs = epochs_override;
  if (seed_override >= 0) cfg.pretrain.seed = static_cast<uint64_t>(seed_override);
  cfg.validate();
  prepare_out_dir(cfg);

  auto [train, test] = pipeline::load_config_data(cfg);
  std::printf("pretrain: %lld train / %lld test images, latent %lld (%lldx%lldx%lld)\n",
              static_cast<long long>(train.size()), static_cast<long long>(test.size()),
              static_cast<long long>(cfg.latent.flat()),
              static_cast<long long>(cfg.latent.channels),
              static_cast<long long>(cfg.latent.spatial),
              static_cast<long long>(cfg.latent.spatial));

  const std::string ckpt_path = (fs::path(cfg.out_dir) / "last.ckpt").string();
  const std::string csv_path = (fs::path(cfg.out_dir) / "metrics_pretrain.csv").string();
  pipeline::PretrainHooks hooks;
  hooks.on_epoch_end = [&](int epoch, vae::VaeModel& model,
                           const pipeline::AdamF& opt,
                           const optim::PlateauScheduler& sched,
                           const pipeline::MetricsLog& log) {
    ckpt::save_run(ckpt_path, cfg, model, &opt, &sched, epoch, "pretrain",
                   nullptr, &log);
    csvio::write_pretrain_csv(csv_path, log);
    const auto& row = log.pretrain.back();
    std::printf("epoch %3d  train %.6g  test %.6g  rmse %.6g  lr %.3g\n", row.epoch,
                row.train_total, row.test_total, row.test_rmse, row.lr);
    std::fflush(stdout);
  };

  pipeline::PretrainResult result = pipeline::pretrain(cfg, train, test, hooks, resume);
  const pipeline::DensityTable density =
      pipeline::model_density(result.model, test, cfg.density);
  csvio::write_density_csv((fs::path(cfg.out_dir) / "density.csv").string(), density);
  std::printf("done: checkpoint %s\n", ckpt_path.c_str());
  return 0;
}

int run_finetune(const CommonOpts& opts, const std::string& ckpt_path,
                 int64_t labels_per_class, int epochs_override) {
  if (ckpt_path.empty()) throw ConfigError("finetune requires --checkpoint");
  ckpt::RunState run = ckpt::load_run(ckpt_path);
  pipeline::ExperimentConfig cfg = run.cfg;
  if (!opts.data_dir.empty()) cfg.data_dir = opts.data_dir;
  if (!opts.out_dir.empty()) cfg.out_dir = opts.out_dir;
  if (labels_per_class > 0) cfg.finetune.labels_per_class = labels_per_class;
  if (epochs_override > 0) cfg.finetune.epochs = epochs_override;
  cfg.validate();
  prepare_out_dir(cfg);

  auto [train, test] = pipeline::load_config_data(cfg);
  const data::LabeledSubset subset = data::sample_labeled_subset(
      train, cfg.finetune.labels_per_class, cfg.finetune.seed);
  std::printf("finetune: %zu labeled examples (%lld per class), flat latent %lld\n",
              subset.indices.size(),
              static_cast<long long>(cfg.finetune.labels_per_class),
              static_cast<long long>(cfg.latent.flat()));

  pipeline::FinetuneResult result =
      pipeline::finetune(cfg, run.model, train, subset, test);
  csvio::write_finetune_csv(
      (fs::path(cfg.out_dir) / "metrics_finetune.csv").string(), result.log);
  ckpt::save_run((fs::path(cfg.out_dir) / "finetune.ckpt").string(), cfg, run.model,
                 nullptr, nullptr, cfg.finetune.epochs, "finetune", &result.head);
  const double acc = result.log.finetune.empty()
                         ? 0.0
                         : result.log.finetune.back().test_accuracy;
  std::printf("done: test accuracy %.4f\n", acc);
  return 0;
}

int run_sweep(const CommonOpts& opts, const std::string& sizes_text,
              const std::string& budgets_text) {
  pipeline::ExperimentConfig cfg = load_config(opts);
  cfg.validate();
  prepare_out_dir(cfg);
  const std::vector<int64_t> sizes = parse_int_list(sizes_text, "sizes");
  const std::vector<int64_t> budgets =
      budgets_text.empty() ? std::vector<int64_t>{cfg.finetune.labels_per_class}
                           : parse_int_list(budgets_text, "label budget");

  auto [train, test] = pipeline::load_config_data(cfg);
  pipeline::SweepHooks hooks;
  hooks.on_pretrained = [&](int64_t spatial, vae::VaeModel& model,
                            const pipeline::MetricsLog& log,
                            const pipeline::DensityTable& density) {
    const fs::path arm_dir = fs::path(cfg.out_dir) / ("s" + std::to_string(spatial));
    fs::create_directories(arm_dir);
    csvio::write_pretrain_csv((arm_dir / "metrics_pretrain.csv").string(), log);
    csvio::write_density_csv((arm_dir / "density.csv").string(), density);
    pipeline::ExperimentConfig arm_cfg = cfg;
    arm_cfg.latent.spatial = spatial;
    ckpt::save_run((arm_dir / "last.ckpt").string(), arm_cfg, model, nullptr,
                   nullptr, arm_cfg.pretrain.epochs, "pretrain");
  };
  hooks.on_arm = [&](const pipeline::SweepArm& arm,
                     const pipeline::MetricsLog& log) {
    if (arm.failed) {
      std::printf("arm s=%lld b=%lld FAILED: %s\n",
                  static_cast<long long>(arm.spatial),
                  static_cast<long long>(arm.labels_per_class), arm.error.c_str());
      return;
    }
    const fs::path arm_dir = fs::path(cfg.out_dir) / ("s" + std::to_string(arm.spatial));
    fs::create_directories(arm_dir);
    csvio::write_finetune_csv(
        (arm_dir / ("metrics_finetune_b" + std::to_string(arm.labels_per_class) +
                    ".csv")).string(),
        log);
    std::printf("arm s=%lld flat=%lld b=%lld: elbo %.6g rmse %.6g acc %.4f\n",
                static_cast<long long>(arm.spatial),
                static_cast<long long>(arm.flat_size),
                static_cast<long long>(arm.labels_per_class), arm.test_elbo,
                arm.test_rmse, arm.test_accuracy);
    std::fflush(stdout);
  };

  const pipeline::SweepReport report =
      pipeline::sweep(cfg, train, test, sizes, budgets, hooks);
  csvio::write_sweep_csv((fs::path(cfg.out_dir) / "sweep_report.csv").string(),
                         report);
  std::printf("sweep report written to %s\n",
              (fs::path(cfg.out_dir) / "sweep_report.csv").string().c_str());
  return 0;
}

int run_eval(const CommonOpts& opts, const std::string& ckpt_path) {
  if (ckpt_path.empty()) throw ConfigError("eval requires --checkpoint");
  ckpt::RunState run = ckpt::load_run(ckpt_path);
  pipeline::ExperimentConfig cfg = run.cfg;
  if (!opts.data_dir.empty()) cfg.data_dir = opts.data_dir;
  auto [train, test] = pipeline::load_config_data(cfg);
  (void)train;
  const pipeline::VaeEvalResult ev =
      pipeline::evaluate_vae(run.model, test, cfg.pretrain.seed, cfg.recon);
  std::printf("test ELBO total %.9g (kl %.9g, recon %.9g)\n", ev.total, ev.kl,
              ev.recon);
  std::printf("test RMSE %.9g\n", ev.rmse);
  if (run.head && test.labeled()) {
    const double acc = pipeline::evaluate_classifier(run.model, *run.head, test);
    std::printf("test accuracy %.4f\n", acc);
  }
  if (!opts.out_dir.empty()) {
    cfg.out_dir = opts.out_dir;
    fs::create_directories(cfg.out_dir);
    const pipeline::DensityTable density =
        pipeline::model_density(run.model, test, cfg.density);
    csvio::write_density_csv((fs::path(cfg.out_dir) / "density.csv").string(),
                             density);
  }
  return 0;
}

int run_inspect(const std::string& data_dir) {
  if (data_dir.empty()) throw ConfigError("inspect-data requires --data");
  auto [train, test] = data::load_cifar10(data_dir);
  for (const data::Dataset* ds : {&train, &test}) {
    float lo = 1.0f, hi = 0.0f;
    for (int64_t i = 0; i < ds->images.numel(); ++i) {
      lo = std::min(lo, ds->images[i]);
      hi = std::max(hi, ds->images[i]);
    }
    std::vector<int64_t> hist(10, 0);
    for (int32_t label : *ds->labels) ++hist[static_cast<size_t>(label)];
    std::printf("%s: %lld images of %lldx%lldx%lld, pixels in [%.6g, %.6g]\n",
                ds->split.c_str(), static_cast<long long>(ds->size()),
                static_cast<long long>(ds->images.dim(1)),
                static_cast<long long>(ds->images.dim(2)),
                static_cast<long long>(ds->images.dim(3)), lo, hi);
    std::printf("  labels:");
    for (size_t c = 0; c < hist.size(); ++c) {
      std::printf(" %zu:%lld", c, static_cast<long long>(hist[c]));
    }
    std::printf("\n");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"smallvae: VAE pre-training and small-data fine-tuning toolkit"};
  app.require_subcommand(1);

  CommonOpts opts;
  std::string resume_path, ckpt_path, sizes_text = "8,10,12", budgets_text;
  int epochs_override = 0;
  int64_t labels_per_class = 0, seed_override = -1;

  auto add_common = [&](CLI::App* cmd, bool with_out) {
    cmd->add_option("--config", opts.config_path, "run configuration file (TOML subset)");
    cmd->add_option("--data", opts.data_dir, "dataset directory (CIFAR-10 binaries)");
    if (with_out) cmd->add_option("--out", opts.out_dir, "output directory");
  };

  CLI::App* pretrain = app.add_subcommand("pretrain", "pre-train the VAE");
  add_common(pretrain, true);
  pretrain->add_option("--resume", resume_path, "checkpoint to resume from");
  pretrain->add_option("--epochs", epochs_override, "override pretrain.epochs");
  pretrain->add_option("--seed", seed_override, "override pretrain.seed");

  CLI::App* finetune = app.add_subcommand("finetune", "fine-tune a classifier head");
  add_common(finetune, true);
  finetune->add_option("--checkpoint", ckpt_path, "pre-trained checkpoint")->required();
  finetune->add_option("--labels-per-class", labels_per_class,
                       "labeled examples per class");
  finetune->add_option("--epochs", epochs_override, "override finetune.epochs");

  CLI::App* sweep = app.add_subcommand("sweep", "latent-size sweep");
  add_common(sweep, true);
  sweep->add_option("--sizes", sizes_text, "latent spatial sizes, comma separated");
  sweep->add_option("--label-budgets", budgets_text,
                    "labels-per-class budgets, comma separated");

  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(eval, true);
  eval->add_option("--checkpoint", ckpt_path, "checkpoint to evaluate")->required();

  CLI::App* inspect = app.add_subcommand("inspect-data", "show dataset facts");
  inspect->add_option("--data", opts.data_dir, "dataset directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (pretrain->parsed()) {
      return run_pretrain(opts, resume_path, epochs_override, seed_override);
    }
    if (finetune->parsed()) {
      return run_finetune(opts, ckpt_path, labels_per_class, epochs_override);
    }
    if (sweep->parsed()) return run_sweep(opts, sizes_text, budgets_text);
    if (eval->parsed()) return run_eval(opts, ckpt_path);
    if (inspect->parsed()) return run_inspect(opts.data_dir);
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
