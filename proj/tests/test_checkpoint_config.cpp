// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "smallvae/checkpoint.hpp"
#include "smallvae/config.hpp"
#include "smallvae/csv.hpp"

using namespace smallvae;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
  const fs::path dir = fs::temp_directory_path() / ("smallvae_ckpt_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::vector<std::byte> read_all(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  in.seekg(0, std::ios::end);
  const std::streamoff len = in.tellg();
  in.seekg(0, std::ios::beg);
  std::vector<std::byte> bytes(static_cast<size_t>(len));
  in.read(reinterpret_cast<char*>(bytes.data()), len);
  return bytes;
}

}  // namespace

TEST_CASE("checkpoint serialization matches the golden byte layout") {
  ckpt::Checkpoint ck;
  ck.set_meta("k", "v");
  ck.add_tensor("t", Tensor<float>({2, 2}, {1.0f, -2.5f, 3.25f, 0.0f}));
  const std::vector<std::byte> bytes = ck.serialize();

  const unsigned char golden[] = {
      'V', 'A', 'E', 'C', 'K', 'P', 'T', '1',              // magic
      0x01, 0x00, 0x00, 0x00,                              // version u32le
      0x04, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00,      // meta length u64le
      'k', '=', 'v', '\n',                                 // metadata
      0x01, 0x00, 0x00, 0x00,                              // name length
      't',                                                 // name
      0x00,                                                // dtype f32
      0x02, 0x00, 0x00, 0x00,                              // ndim
      0x02, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00,      // dim 0
      0x02, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00,      // dim 1
      0x00, 0x00, 0x80, 0x3F,                              // 1.0f LE
      0x00, 0x00, 0x20, 0xC0,                              // -2.5f
      0x00, 0x00, 0x50, 0x40,                              // 3.25f
      0x00, 0x00, 0x00, 0x00,                              // 0.0f
  };
  REQUIRE(bytes.size() == sizeof golden);
  for (size_t i = 0; i < sizeof golden; ++i) {
    CHECK(static_cast<unsigned char>(bytes[i]) == golden[i]);
  }
}

TEST_CASE("checkpoint save/load/save is byte-identical, f64 supported") {
  const fs::path dir = temp_dir("roundtrip");
  ckpt::Checkpoint ck;
  ck.set_meta("epoch", "3");
  ck.set_meta("note", "alpha=1");
  ck.add_tensor("w", Tensor<float>({3}, {0.5f, -1.25f, 1e-7f}));
  ck.add_tensor("d", Tensor<double>({2}, {3.14159, -2.71828}));
  const fs::path p1 = dir / "a.ckpt";
  const fs::path p2 = dir / "b.ckpt";
  ck.save(p1.string());
  ckpt::Checkpoint loaded = ckpt::Checkpoint::load(p1.string());
  loaded.save(p2.string());
  CHECK(read_all(p1) == read_all(p2));

  const Tensor<double> d = loaded.tensor_f64("d");
  CHECK(d[0] == 3.14159);
  CHECK(d[1] == -2.71828);
  CHECK(loaded.require_meta("note") == "alpha=1");
  CHECK_THROWS_AS(loaded.tensor_f32("d"), DataError);
  CHECK_THROWS_AS(loaded.tensor_f32("missing"), DataError);
}

TEST_CASE("checkpoint reader rejects corruption") {
  ckpt::Checkpoint ck;
  ck.set_meta("a", "b");
  ck.add_tensor("t", Tensor<float>({4}, {1, 2, 3, 4}));
  std::vector<std::byte> bytes = ck.serialize();

  // bad magic
  std::vector<std::byte> bad = bytes;
  bad[0] = static_cast<std::byte>('X');
  try {
    ckpt::Checkpoint::deserialize(bad, "bad.ckpt");
    FAIL("expected DataError");
  } catch (const DataError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("bad magic") != std::string::npos);
    CHECK(msg.find("bad.ckpt") != std::string::npos);
  }

  // unknown future version
  std::vector<std::byte> vfut = bytes;
  vfut[8] = static_cast<std::byte>(0x09);
  CHECK_THROWS_AS(ckpt::Checkpoint::deserialize(vfut, "v.ckpt"), DataError);

  // truncated payload: declared dims disagree with actual size
  std::vector<std::byte> cut(bytes.begin(), bytes.end() - 5);
  CHECK_THROWS_AS(ckpt::Checkpoint::deserialize(cut, "cut.ckpt"), IoError);

  // unknown dtype tag (name is "t", length 1; tag follows the name)
  std::vector<std::byte> dt = bytes;
  const size_t dtype_pos = 8 + 4 + 8 + 4 + (4 + 1);  // header, meta "a=b\n", name
  dt[dtype_pos] = static_cast<std::byte>(7);
  CHECK_THROWS_AS(ckpt::Checkpoint::deserialize(dt, "dt.ckpt"), DataError);
}

TEST_CASE("config: defaults, overrides, unknown keys, type errors") {
  const pipeline::ExperimentConfig def = config::defaults();
  CHECK(def.pretrain.epochs == 100);
  CHECK(def.pretrain.lr == 1e-4);
  CHECK(def.pretrain.batch == 16);
  CHECK(def.pretrain.weight_decay == 1e-3);
  CHECK(def.finetune.labels_per_class == 100);
  CHECK(def.latent.channels == 100);
  CHECK(def.scheduler.patience == 5);

  const std::string text = R"(
# comment
[latent]
spatial = 10

[pretrain]
epochs = 7         # trailing comment
lr = 2e-4

[vae]
recon = "bernoulli"

[data]
source = "synth"
synth_kind = "two-gaussians"
)";
  const pipeline::ExperimentConfig cfg = config::parse_text(text, "inline");
  CHECK(cfg.latent.spatial == 10);
  CHECK(cfg.latent.channels == 100);  // untouched default
  CHECK(cfg.pretrain.epochs == 7);
  CHECK(cfg.pretrain.lr == 2e-4);
  CHECK(cfg.recon == vae::ReconKind::bernoulli);
  CHECK(cfg.data_source == "synth");
  CHECK(cfg.synth_kind == "two-gaussians");

  try {
    config::parse_text("[pretrain]\nlearning_rate = 1\n", "inline");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("pretrain.learning_rate") != std::string::npos);
  }
  CHECK_THROWS_AS(config::parse_text("[pretrain]\nepochs = soon\n", "inline"),
                  ConfigError);
  CHECK_THROWS_AS(config::parse_text("[vae]\nrecon = \"poisson\"\n", "inline"),
                  ConfigError);
}

TEST_CASE("resolved config round-trips exactly") {
  pipeline::ExperimentConfig cfg = config::defaults();
  cfg.pretrain.lr = 0.000137;
  cfg.latent.spatial = 12;
  cfg.scheduler.threshold = 1e-4;
  cfg.data_source = "synth";
  const std::string once = config::to_toml(cfg);
  const pipeline::ExperimentConfig parsed = config::parse_text(once, "roundtrip");
  const std::string twice = config::to_toml(parsed);
  CHECK(once == twice);
  CHECK(parsed.pretrain.lr == cfg.pretrain.lr);
}

TEST_CASE("metrics CSV: header-only, LF endings, deterministic") {
  pipeline::MetricsLog empty;
  CHECK(csvio::pretrain_csv(empty) ==
        "epoch,train_total,train_kl,train_recon,test_total,test_rmse,lr\n");

  pipeline::MetricsLog log;
  log.pretrain.push_back({1, 1.5, 0.25, 1.25, 1.75, 0.31, 1e-4});
  log.pretrain.push_back({2, 1.25, 0.3, 0.95, 1.5, 0.29, 1e-4});
  const std::string text = csvio::pretrain_csv(log);
  CHECK(csvio::pretrain_csv(log) == text);  // deterministic
  int lines = 0;
  for (char c : text) {
    if (c == '\n') ++lines;
  }
  CHECK(lines == 3);
  CHECK(text.find('\r') == std::string::npos);
  CHECK(text.find("1,1.5,0.25,1.25,1.75,0.31,0.0001\n") != std::string::npos);

  // non-contiguous epochs violate the log invariant
  pipeline::MetricsLog gapped;
  gapped.pretrain.push_back({1, 1, 1, 1, 1, 1, 1});
  gapped.pretrain.push_back({3, 1, 1, 1, 1, 1, 1});
  CHECK_THROWS_AS(csvio::pretrain_csv(gapped), DataError);

  pipeline::MetricsLog fin;
  fin.finetune.push_back({1, 2.302, 2.301, 0.11, 1e-3});
  const std::string ft = csvio::finetune_csv(fin);
  CHECK(ft.rfind("epoch,train_ce,test_ce,test_accuracy,lr\n", 0) == 0);
}

TEST_CASE("run checkpoints rebuild the model and optimizer state") {
  const fs::path dir = temp_dir("run");
  pipeline::ExperimentConfig cfg = config::defaults();
  cfg.latent = {4, 2};
  cfg.arch.image_size = 8;
  cfg.arch.stem_channels = 4;
  cfg.arch.growth = 2;
  cfg.arch.block_layers = 1;
  cfg.arch.trans_channels = 4;
  cfg.pretrain.seed = 5;

  Rng init(cfg.pretrain.seed, "init");
  vae::VaeModel model = vae::build_vae<float>(cfg.latent, cfg.arch, init);
  pipeline::AdamF::Hyper hyper;
  hyper.lr = 1e-4f;
  pipeline::AdamF opt(model.parameters(), hyper);
  optim::PlateauScheduler sched(1e-4, cfg.scheduler);

  const std::string path = (dir / "last.ckpt").string();
  ckpt::save_run(path, cfg, model, &opt, &sched, 4, "pretrain");

  ckpt::RunState run = ckpt::load_run(path);
  CHECK(run.epoch == 4);
  CHECK(run.phase == "pretrain");
  CHECK(run.cfg.latent.spatial == 2);
  CHECK(run.cfg.arch.stem_channels == 4);
  CHECK(run.has_optimizer);
  CHECK(run.adam_t == 0);
  CHECK(run.model.fingerprint() == model.fingerprint());
  CHECK(run.adam_m.size() == model.parameters().size());
}
