// SPDX-License-Identifier: Apache-2.0
#include "smallvae/config.hpp"

#include <cctype>
#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace smallvae::config {

namespace {

std::string trim(const std::string& s) {
  size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

std::string fmt_f(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_i(int64_t v) { return std::to_string(v); }

std::string fmt_u(uint64_t v) { return std::to_string(v); }

std::string fmt_b(bool v) { return v ? "true" : "false"; }

int64_t parse_i(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const long long x = std::strtoll(v.c_str(), &end, 10);
  if (end == v.c_str() || *end != '\0') {
    throw ConfigError("config: key '" + key + "' expects an integer, got '" + v + "'");
  }
  return static_cast<int64_t>(x);
}

uint64_t parse_u(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const unsigned long long x = std::strtoull(v.c_str(), &end, 10);
  if (end == v.c_str() || *end != '\0') {
    throw ConfigError("config: key '" + key + "' expects an unsigned integer, got '" +
                      v + "'");
  }
  return static_cast<uint64_t>(x);
}

double parse_f(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const double x = std::strtod(v.c_str(), &end);
  if (end == v.c_str() || *end != '\0') {
    throw ConfigError("config: key '" + key + "' expects a number, got '" + v + "'");
  }
  return x;
}

bool parse_b(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw ConfigError("config: key '" + key + "' expects true/false, got '" + v + "'");
}

std::string locations_to_string(const pipeline::DensityParams& d) {
  std::string out;
  for (const auto& loc : d.locations) {
    if (loc.pooled) continue;
    if (!out.empty()) out += ",";
    out += std::to_string(loc.c) + ":" + std::to_string(loc.h) + ":" +
           std::to_string(loc.w);
  }
  return out;
}

bool has_pooled(const pipeline::DensityParams& d) {
  for (const auto& loc : d.locations) {
    if (loc.pooled) return true;
  }
  return false;
}

std::vector<pipeline::DensityLocation> parse_locations(const std::string& key,
                                                       const std::string& v) {
  std::vector<pipeline::DensityLocation> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    pipeline::DensityLocation loc;
    if (std::sscanf(item.c_str(), "%d:%d:%d", &loc.c, &loc.h, &loc.w) != 3) {
      throw ConfigError("config: key '" + key + "' expects c:h:w triples, got '" +
                        item + "'");
    }
    out.push_back(loc);
  }
  return out;
}

void set_pooled(pipeline::DensityParams& d, bool pooled) {
  std::vector<pipeline::DensityLocation> kept;
  for (const auto& loc : d.locations) {
    if (!loc.pooled) kept.push_back(loc);
  }
  if (pooled) kept.push_back({0, 0, 0, true});
  d.locations = std::move(kept);
}

}  // namespace

pipeline::ExperimentConfig defaults() { return pipeline::ExperimentConfig{}; }

void apply_pair(pipeline::ExperimentConfig& cfg, const std::string& key,
                const std::string& value) {
  if (key == "latent.channels") cfg.latent.channels = parse_i(key, value);
  else if (key == "latent.spatial") cfg.latent.spatial = parse_i(key, value);
  else if (key == "arch.image_channels") cfg.arch.image_channels = parse_i(key, value);
  else if (key == "arch.image_size") cfg.arch.image_size = parse_i(key, value);
  else if (key == "arch.stem_channels") cfg.arch.stem_channels = parse_i(key, value);
  else if (key == "arch.stem_kernel") cfg.arch.stem_kernel = parse_i(key, value);
  else if (key == "arch.growth") cfg.arch.growth = parse_i(key, value);
  else if (key == "arch.block_layers") cfg.arch.block_layers = parse_i(key, value);
  else if (key == "arch.trans_channels") cfg.arch.trans_channels = parse_i(key, value);
  else if (key == "arch.out_kernel") cfg.arch.out_kernel = parse_i(key, value);
  else if (key == "arch.classifier_hidden") cfg.arch.classifier_hidden = parse_i(key, value);
  else if (key == "arch.hidden_threshold") cfg.arch.hidden_threshold = parse_i(key, value);
  else if (key == "arch.logvar_bias_init") cfg.arch.logvar_bias_init = parse_f(key, value);
  else if (key == "pretrain.epochs") cfg.pretrain.epochs = static_cast<int>(parse_i(key, value));
  else if (key == "pretrain.lr") cfg.pretrain.lr = parse_f(key, value);
  else if (key == "pretrain.batch") cfg.pretrain.batch = parse_i(key, value);
  else if (key == "pretrain.weight_decay") cfg.pretrain.weight_decay = parse_f(key, value);
  else if (key == "pretrain.seed") cfg.pretrain.seed = parse_u(key, value);
  else if (key == "finetune.epochs") cfg.finetune.epochs = static_cast<int>(parse_i(key, value));
  else if (key == "finetune.lr") cfg.finetune.lr = parse_f(key, value);
  else if (key == "finetune.batch") cfg.finetune.batch = parse_i(key, value);
  else if (key == "finetune.labels_per_class") cfg.finetune.labels_per_class = parse_i(key, value);
  else if (key == "finetune.seed") cfg.finetune.seed = parse_u(key, value);
  else if (key == "scheduler.factor") cfg.scheduler.factor = parse_f(key, value);
  else if (key == "scheduler.patience") cfg.scheduler.patience = static_cast<int>(parse_i(key, value));
  else if (key == "scheduler.min_lr") cfg.scheduler.min_lr = parse_f(key, value);
  else if (key == "scheduler.threshold") cfg.scheduler.threshold = parse_f(key, value);
  else if (key == "vae.recon") {
    if (value == "gaussian") cfg.recon = vae::ReconKind::gaussian;
    else if (value == "bernoulli") cfg.recon = vae::ReconKind::bernoulli;
    else throw ConfigError("config: vae.recon must be gaussian or bernoulli, got '" + value + "'");
  }
  else if (key == "data.source") {
    if (value != "cifar" && value != "synth") {
      throw ConfigError("config: data.source must be cifar or synth, got '" + value + "'");
    }
    cfg.data_source = value;
  }
  else if (key == "data.dir") cfg.data_dir = value;
  else if (key == "data.synth_kind") cfg.synth_kind = value;
  else if (key == "data.synth_n") cfg.synth_n = parse_i(key, value);
  else if (key == "data.synth_size") cfg.synth_size = parse_i(key, value);
  else if (key == "density.locations") {
    const bool pooled = has_pooled(cfg.density);
    cfg.density.locations = parse_locations(key, value);
    set_pooled(cfg.density, pooled);
  }
  else if (key == "density.pooled") set_pooled(cfg.density, parse_b(key, value));
  else if (key == "density.grid_points") cfg.density.grid_points = static_cast<int>(parse_i(key, value));
  else throw ConfigError("config: unknown key '" + key + "'");
}

std::vector<std::pair<std::string, std::string>> to_pairs(
    const pipeline::ExperimentConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> p;
  p.emplace_back("latent.channels", fmt_i(cfg.latent.channels));
  p.emplace_back("latent.spatial", fmt_i(cfg.latent.spatial));
  p.emplace_back("arch.image_channels", fmt_i(cfg.arch.image_channels));
  p.emplace_back("arch.image_size", fmt_i(cfg.arch.image_size));
  p.emplace_back("arch.stem_channels", fmt_i(cfg.arch.stem_channels));
  p.emplace_back("arch.stem_kernel", fmt_i(cfg.arch.stem_kernel));
  p.emplace_back("arch.growth", fmt_i(cfg.arch.growth));
  p.emplace_back("arch.block_layers", fmt_i(cfg.arch.block_layers));
  p.emplace_back("arch.trans_channels", fmt_i(cfg.arch.trans_channels));
  p.emplace_back("arch.out_kernel", fmt_i(cfg.arch.out_kernel));
  p.emplace_back("arch.classifier_hidden", fmt_i(cfg.arch.classifier_hidden));
  p.emplace_back("arch.hidden_threshold", fmt_i(cfg.arch.hidden_threshold));
  p.emplace_back("arch.logvar_bias_init", fmt_f(cfg.arch.logvar_bias_init));
  p.emplace_back("pretrain.epochs", fmt_i(cfg.pretrain.epochs));
  p.emplace_back("pretrain.lr", fmt_f(cfg.pretrain.lr));
  p.emplace_back("pretrain.batch", fmt_i(cfg.pretrain.batch));
  p.emplace_back("pretrain.weight_decay", fmt_f(cfg.pretrain.weight_decay));
  p.emplace_back("pretrain.seed", fmt_u(cfg.pretrain.seed));
  p.emplace_back("finetune.epochs", fmt_i(cfg.finetune.epochs));
  p.emplace_back("finetune.lr", fmt_f(cfg.finetune.lr));
  p.emplace_back("finetune.batch", fmt_i(cfg.finetune.batch));
  p.emplace_back("finetune.labels_per_class", fmt_i(cfg.finetune.labels_per_class));
  p.emplace_back("finetune.seed", fmt_u(cfg.finetune.seed));
  p.emplace_back("scheduler.factor", fmt_f(cfg.scheduler.factor));
  p.emplace_back("scheduler.patience", fmt_i(cfg.scheduler.patience));
  p.emplace_back("scheduler.min_lr", fmt_f(cfg.scheduler.min_lr));
  p.emplace_back("scheduler.threshold", fmt_f(cfg.scheduler.threshold));
  p.emplace_back("vae.recon",
                 cfg.recon == vae::ReconKind::gaussian ? "gaussian" : "bernoulli");
  p.emplace_back("data.source", cfg.data_source);
  p.emplace_back("data.dir", cfg.data_dir);
  p.emplace_back("data.synth_kind", cfg.synth_kind);
  p.emplace_back("data.synth_n", fmt_i(cfg.synth_n));
  p.emplace_back("data.synth_size", fmt_i(cfg.synth_size));
  p.emplace_back("density.locations", locations_to_string(cfg.density));
  p.emplace_back("density.pooled", fmt_b(has_pooled(cfg.density)));
  p.emplace_back("density.grid_points", fmt_i(cfg.density.grid_points));
  return p;
}

namespace {

const char* kStringKeys[] = {"vae.recon", "data.source", "data.dir",
                             "data.synth_kind", "density.locations"};

bool is_string_key(const std::string& key) {
  for (const char* k : kStringKeys) {
    if (key == k) return true;
  }
  return false;
}

}  // namespace

std::string to_toml(const pipeline::ExperimentConfig& cfg) {
  std::string out;
  std::string section;
  for (const auto& [key, value] : to_pairs(cfg)) {
    const size_t dot = key.find('.');
    const std::string sec = key.substr(0, dot);
    const std::string name = key.substr(dot + 1);
    if (sec != section) {
      if (!out.empty()) out += "\n";
      out += "[" + sec + "]\n";
      section = sec;
    }
    if (is_string_key(key)) {
      out += name + " = \"" + value + "\"\n";
    } else {
      out += name + " = " + value + "\n";
    }
  }
  return out;
}

pipeline::ExperimentConfig parse_text(const std::string& text,
                                      const std::string& origin) {
  pipeline::ExperimentConfig cfg = defaults();
  std::stringstream ss(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    // comments start at an unquoted '#'
    bool quoted = false;
    for (size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') quoted = !quoted;
      if (line[i] == '#' && !quoted) {
        line = line.substr(0, i);
        break;
      }
    }
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ConfigError("config: malformed section at " + origin + ":" +
                          std::to_string(lineno));
      }
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config: expected key = value at " + origin + ":" +
                        std::to_string(lineno));
    }
    const std::string name = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
      value = value.substr(1, value.size() - 2);
    }
    const std::string key = section.empty() ? name : section + "." + name;
    apply_pair(cfg, key, value);
  }
  return cfg;
}

pipeline::ExperimentConfig parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_text(ss.str(), path);
}

void write_resolved(const std::string& path, const pipeline::ExperimentConfig& cfg) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("config: cannot write " + path);
  out << to_toml(cfg);
  if (!out) throw IoError("config: failed writing " + path);
}

}  // namespace smallvae::config
