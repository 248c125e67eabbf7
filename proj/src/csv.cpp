// SPDX-License-Identifier: Apache-2.0
#include "smallvae/csv.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

namespace smallvae::csvio {

namespace {

void check_finite(const double* values, int count, const char* what) {
  for (int i = 0; i < count; ++i) {
    if (!std::isfinite(values[i])) {
      throw NumericError(std::string("metrics: non-finite value in ") + what);
    }
  }
}

}  // namespace

std::string format_g9(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string pretrain_csv(const pipeline::MetricsLog& log) {
  std::string out = "epoch,train_total,train_kl,train_recon,test_total,test_rmse,lr\n";
  int prev = -1;
  for (const auto& r : log.pretrain) {
    if (prev >= 0 && r.epoch != prev + 1) {
      throw DataError("metrics: pretrain epochs not contiguous");
    }
    if (prev < 0 && r.epoch < 1) {
      throw DataError("metrics: pretrain epochs must start at >= 1");
    }
    prev = r.epoch;
    double vals[] = {r.train_total, r.train_kl, r.train_recon,
                     r.test_total, r.test_rmse, r.lr};
    check_finite(vals, 6, "pretrain log");
    out += std::to_string(r.epoch) + "," + format_g9(r.train_total) + "," +
           format_g9(r.train_kl) + "," + format_g9(r.train_recon) + "," +
           format_g9(r.test_total) + "," + format_g9(r.test_rmse) + "," +
           format_g9(r.lr) + "\n";
  }
  return out;
}

std::string finetune_csv(const pipeline::MetricsLog& log) {
  std::string out = "epoch,train_ce,test_ce,test_accuracy,lr\n";
  int prev = -1;
  for (const auto& r : log.finetune) {
    if (prev >= 0 && r.epoch != prev + 1) {
      throw DataError("metrics: finetune epochs not contiguous");
    }
    if (prev < 0 && r.epoch < 1) {
      throw DataError("metrics: finetune epochs must start at >= 1");
    }
    prev = r.epoch;
    double vals[] = {r.train_ce, r.test_ce, r.test_accuracy, r.lr};
    check_finite(vals, 4, "finetune log");
    out += std::to_string(r.epoch) + "," + format_g9(r.train_ce) + "," +
           format_g9(r.test_ce) + "," + format_g9(r.test_accuracy) + "," +
           format_g9(r.lr) + "\n";
  }
  return out;
}

std::string density_csv(const pipeline::DensityTable& table) {
  std::string out = "location,intensity,density_input,density_recon\n";
  for (size_t loc = 0; loc < table.locations.size(); ++loc) {
    const std::string name = table.locations[loc].name();
    for (size_t j = 0; j < table.grid.size(); ++j) {
      out += name + "," + format_g9(table.grid[j]) + "," +
             format_g9(table.density_input[loc][j]) + "," +
             format_g9(table.density_recon[loc][j]) + "\n";
    }
  }
  return out;
}

std::string sweep_csv(const pipeline::SweepReport& report) {
  std::string out =
      "flat_size,labels_per_class,test_elbo,test_rmse,test_accuracy,status\n";
  for (const auto& arm : report.arms) {
    out += std::to_string(arm.flat_size) + "," +
           std::to_string(arm.labels_per_class) + ",";
    if (arm.failed) {
      out += ",,,failed\n";
    } else {
      out += format_g9(arm.test_elbo) + "," + format_g9(arm.test_rmse) + "," +
             format_g9(arm.test_accuracy) + ",ok\n";
    }
  }
  return out;
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("csv: cannot write " + path);
  out << text;
  if (!out) throw IoError("csv: failed writing " + path);
}

void write_pretrain_csv(const std::string& path, const pipeline::MetricsLog& log) {
  write_file(path, pretrain_csv(log));
}

void write_finetune_csv(const std::string& path, const pipeline::MetricsLog& log) {
  write_file(path, finetune_csv(log));
}

void write_density_csv(const std::string& path, const pipeline::DensityTable& table) {
  write_file(path, density_csv(table));
}

void write_sweep_csv(const std::string& path, const pipeline::SweepReport& report) {
  write_file(path, sweep_csv(report));
}

}  // namespace smallvae::csvio
