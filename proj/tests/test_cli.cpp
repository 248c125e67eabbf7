// SPDX-License-Identifier: Apache-2.0
//
// End-to-end runs of the smallvae binary: exit codes, emitted files, and the
// resolved-config reproducibility contract.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"

namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(SMALLVAE_BIN) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

fs::path temp_dir(const std::string& tag) {
  const fs::path dir = fs::temp_directory_path() / ("smallvae_cli_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const char* kToyConfig = R"(
[latent]
channels = 4
spatial = 2
[arch]
image_size = 8
stem_channels = 4
growth = 2
block_layers = 1
trans_channels = 4
[pretrain]
epochs = 2
lr = 1e-3
batch = 8
seed = 3
[finetune]
epochs = 3
labels_per_class = 4
seed = 3
[data]
source = "synth"
synth_kind = "two-gaussians"
synth_n = 32
synth_size = 8
[density]
locations = "0:2:2"
pooled = true
)";

}  // namespace

TEST_CASE("usage errors exit 1") {
  CHECK(run("") == 1);
  CHECK(run("frobnicate") == 1);
  CHECK(run("pretrain --no-such-flag") == 1);
  CHECK(run("--help") == 0);
}

TEST_CASE("missing data directory exits 2") {
  const fs::path dir = temp_dir("missing");
  CHECK(run("pretrain --data " + (dir / "absent").string() + " --out " +
            (dir / "out").string()) == 2);
  CHECK(run("inspect-data --data " + (dir / "absent").string()) == 2);
}

TEST_CASE("pretrain/finetune/eval round trip with artifacts") {
  const fs::path dir = temp_dir("e2e");
  const fs::path cfg = dir / "run.toml";
  {
    std::ofstream out(cfg);
    out << kToyConfig;
  }
  const fs::path run1 = dir / "run1";
  REQUIRE(run("pretrain --config " + cfg.string() + " --out " + run1.string()) == 0);
  CHECK(fs::exists(run1 / "config_resolved.toml"));
  CHECK(fs::exists(run1 / "last.ckpt"));
  CHECK(fs::exists(run1 / "metrics_pretrain.csv"));
  CHECK(fs::exists(run1 / "density.csv"));

  // re-running from the resolved config reproduces the metrics byte-for-byte
  const fs::path run2 = dir / "run2";
  REQUIRE(run("pretrain --config " + (run1 / "config_resolved.toml").string() +
              " --out " + run2.string()) == 0);
  CHECK(read_text(run1 / "metrics_pretrain.csv") ==
        read_text(run2 / "metrics_pretrain.csv"));
  CHECK(read_text(run1 / "config_resolved.toml") ==
        read_text(run2 / "config_resolved.toml"));

  const fs::path tuned = dir / "tuned";
  REQUIRE(run("finetune --checkpoint " + (run1 / "last.ckpt").string() +
              " --out " + tuned.string() + " --labels-per-class 4") == 0);
  CHECK(fs::exists(tuned / "metrics_finetune.csv"));
  CHECK(fs::exists(tuned / "finetune.ckpt"));

  CHECK(run("eval --checkpoint " + (tuned / "finetune.ckpt").string()) == 0);

  // corrupt checkpoint magic -> data error
  {
    std::fstream f(run1 / "last.ckpt",
                   std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    f.put('X');
  }
  CHECK(run("eval --checkpoint " + (run1 / "last.ckpt").string()) == 2);
}

TEST_CASE("checkpoint resume continues to the same metrics file") {
  const fs::path dir = temp_dir("resume");
  const fs::path cfg = dir / "run.toml";
  {
    std::ofstream out(cfg);
    out << kToyConfig;
  }
  const fs::path ref = dir / "ref";
  REQUIRE(run("pretrain --config " + cfg.string() + " --out " + ref.string() +
              " --epochs 4") == 0);
  const fs::path part = dir / "part";
  REQUIRE(run("pretrain --config " + cfg.string() + " --out " + part.string() +
              " --epochs 2") == 0);
  REQUIRE(run("pretrain --resume " + (part / "last.ckpt").string() + " --out " +
              part.string() + " --epochs 4") == 0);
  CHECK(read_text(part / "metrics_pretrain.csv") ==
        read_text(ref / "metrics_pretrain.csv"));
}

TEST_CASE("toy sweep writes per-arm artifacts and the report") {
  const fs::path dir = temp_dir("sweep");
  const fs::path cfg = dir / "run.toml";
  {
    std::ofstream out(cfg);
    out << kToyConfig;
  }
  const fs::path out = dir / "sweep_out";
  REQUIRE(run("sweep --config " + cfg.string() + " --out " + out.string() +
              " --sizes 2,4 --label-budgets 4") == 0);
  CHECK(fs::exists(out / "sweep_report.csv"));
  CHECK(fs::exists(out / "s2" / "metrics_pretrain.csv"));
  CHECK(fs::exists(out / "s2" / "metrics_finetune_b4.csv"));
  CHECK(fs::exists(out / "s2" / "density.csv"));
  CHECK(fs::exists(out / "s4" / "last.ckpt"));
  const std::string report = read_text(out / "sweep_report.csv");
  CHECK(report.find("flat_size,labels_per_class,test_elbo,test_rmse,test_accuracy,status") == 0);
  CHECK(report.find("16,4,") != std::string::npos);   // 4 * 2 * 2
  CHECK(report.find("64,4,") != std::string::npos);   // 4 * 4 * 4
}
