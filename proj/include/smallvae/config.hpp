// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <utility>
#include <vector>

#include "smallvae/pipeline.hpp"

// Plain-text run configuration: a TOML subset with [section] headers and flat
// key = value pairs (strings, ints, floats, booleans). Unknown keys are
// rejected by name; omitted keys keep their defaults. Floats are emitted with
// round-trip precision so a resolved file reproduces the run exactly.
namespace smallvae::config {

pipeline::ExperimentConfig defaults();

pipeline::ExperimentConfig parse_text(const std::string& text,
                                      const std::string& origin);
pipeline::ExperimentConfig parse_file(const std::string& path);

// Flat "section.key" -> value pairs covering every effective setting; shared
// between the TOML writer and checkpoint metadata.
std::vector<std::pair<std::string, std::string>> to_pairs(
    const pipeline::ExperimentConfig& cfg);

// Applies one flat pair; throws ConfigError on unknown keys or bad values.
void apply_pair(pipeline::ExperimentConfig& cfg, const std::string& key,
                const std::string& value);

std::string to_toml(const pipeline::ExperimentConfig& cfg);
void write_resolved(const std::string& path, const pipeline::ExperimentConfig& cfg);

}  // namespace smallvae::config
