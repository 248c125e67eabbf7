// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "smallvae/pipeline.hpp"

// Deterministic CSV emission: header row, %.9g floats, comma separators,
// LF line endings.
namespace smallvae::csvio {

std::string format_g9(double v);

std::string pretrain_csv(const pipeline::MetricsLog& log);
std::string finetune_csv(const pipeline::MetricsLog& log);
std::string density_csv(const pipeline::DensityTable& table);
std::string sweep_csv(const pipeline::SweepReport& report);

void write_file(const std::string& path, const std::string& text);

void write_pretrain_csv(const std::string& path, const pipeline::MetricsLog& log);
void write_finetune_csv(const std::string& path, const pipeline::MetricsLog& log);
void write_density_csv(const std::string& path, const pipeline::DensityTable& table);
void write_sweep_csv(const std::string& path, const pipeline::SweepReport& report);

}  // namespace smallvae::csvio
