// SPDX-License-Identifier: Apache-2.0
#include "smallvae/checkpoint.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "smallvae/config.hpp"

namespace smallvae::ckpt {

namespace {

void put_u32(std::vector<std::byte>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) {
    out.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xff));
  }
}

void put_u64(std::vector<std::byte>& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    out.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xff));
  }
}

struct Reader {
  const std::vector<std::byte>& bytes;
  size_t pos = 0;
  std::string origin;

  void need(size_t n, const char* what) const {
    if (pos + n > bytes.size()) {
      throw IoError("checkpoint: " + origin + " truncated while reading " + what);
    }
  }
  uint8_t u8(const char* what) {
    need(1, what);
    return static_cast<uint8_t>(bytes[pos++]);
  }
  uint32_t u32(const char* what) {
    need(4, what);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<uint32_t>(bytes[pos + static_cast<size_t>(i)]) << (8 * i);
    }
    pos += 4;
    return v;
  }
  uint64_t u64(const char* what) {
    need(8, what);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      v |= static_cast<uint64_t>(bytes[pos + static_cast<size_t>(i)]) << (8 * i);
    }
    pos += 8;
    return v;
  }
  std::string str(size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(bytes.data() + pos), n);
    pos += n;
    return s;
  }
  bool eof() const { return pos == bytes.size(); }
};

}  // namespace

void Checkpoint::set_meta(const std::string& key, const std::string& value) {
  for (auto& [k, v] : metadata) {
    if (k == key) {
      v = value;
      return;
    }
  }
  metadata.emplace_back(key, value);
}

std::optional<std::string> Checkpoint::meta(const std::string& key) const {
  for (const auto& [k, v] : metadata) {
    if (k == key) return v;
  }
  return std::nullopt;
}

std::string Checkpoint::require_meta(const std::string& key) const {
  if (auto v = meta(key)) return *v;
  throw DataError("checkpoint: missing metadata key '" + key + "'");
}

void Checkpoint::add_tensor(const std::string& name, const Tensor<float>& t) {
  TensorEntry e;
  e.name = name;
  e.dtype = 0;
  e.dims = t.shape();
  e.f32.assign(t.data(), t.data() + t.numel());
  entries.push_back(std::move(e));
}

void Checkpoint::add_tensor(const std::string& name, const Tensor<double>& t) {
  TensorEntry e;
  e.name = name;
  e.dtype = 1;
  e.dims = t.shape();
  e.f64.assign(t.data(), t.data() + t.numel());
  entries.push_back(std::move(e));
}

bool Checkpoint::has_tensor(const std::string& name) const {
  for (const auto& e : entries) {
    if (e.name == name) return true;
  }
  return false;
}

Tensor<float> Checkpoint::tensor_f32(const std::string& name) const {
  for (const auto& e : entries) {
    if (e.name != name) continue;
    if (e.dtype != 0) throw DataError("checkpoint: tensor '" + name + "' is not f32");
    return Tensor<float>(e.dims, e.f32);
  }
  throw DataError("checkpoint: missing tensor '" + name + "'");
}

Tensor<double> Checkpoint::tensor_f64(const std::string& name) const {
  for (const auto& e : entries) {
    if (e.name != name) continue;
    if (e.dtype != 1) throw DataError("checkpoint: tensor '" + name + "' is not f64");
    return Tensor<double>(e.dims, e.f64);
  }
  throw DataError("checkpoint: missing tensor '" + name + "'");
}

std::vector<std::byte> Checkpoint::serialize() const {
  std::vector<std::byte> out;
  for (char c : kMagic) out.push_back(static_cast<std::byte>(c));
  put_u32(out, kVersion);
  std::string meta;
  for (const auto& [k, v] : metadata) meta += k + "=" + v + "\n";
  put_u64(out, meta.size());
  for (char c : meta) out.push_back(static_cast<std::byte>(c));
  for (const TensorEntry& e : entries) {
    put_u32(out, static_cast<uint32_t>(e.name.size()));
    for (char c : e.name) out.push_back(static_cast<std::byte>(c));
    out.push_back(static_cast<std::byte>(e.dtype));
    put_u32(out, static_cast<uint32_t>(e.dims.size()));
    for (int64_t d : e.dims) put_u64(out, static_cast<uint64_t>(d));
    if (e.dtype == 0) {
      for (float f : e.f32) {
        uint32_t bits;
        std::memcpy(&bits, &f, 4);
        put_u32(out, bits);
      }
    } else {
      for (double d : e.f64) {
        uint64_t bits;
        std::memcpy(&bits, &d, 8);
        put_u64(out, bits);
      }
    }
  }
  return out;
}

Checkpoint Checkpoint::deserialize(const std::vector<std::byte>& bytes,
                                   const std::string& origin) {
  Reader r{bytes, 0, origin};
  const std::string magic = r.str(8, "magic");
  if (std::memcmp(magic.data(), kMagic, 8) != 0) {
    throw DataError("checkpoint: bad magic in " + origin);
  }
  const uint32_t version = r.u32("version");
  if (version != kVersion) {
    throw DataError("checkpoint: unsupported version " + std::to_string(version) +
                    " in " + origin);
  }
  Checkpoint ck;
  const uint64_t meta_len = r.u64("metadata length");
  const std::string meta = r.str(meta_len, "metadata");
  size_t start = 0;
  while (start < meta.size()) {
    size_t end = meta.find('\n', start);
    if (end == std::string::npos) end = meta.size();
    const std::string line = meta.substr(start, end - start);
    start = end + 1;
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw DataError("checkpoint: malformed metadata line in " + origin);
    }
    ck.metadata.emplace_back(line.substr(0, eq), line.substr(eq + 1));
  }
  while (!r.eof()) {
    TensorEntry e;
    const uint32_t name_len = r.u32("tensor name length");
    e.name = r.str(name_len, "tensor name");
    e.dtype = r.u8("dtype tag");
    if (e.dtype > 1) {
      throw DataError("checkpoint: unknown dtype tag " + std::to_string(e.dtype) +
                      " for tensor '" + e.name + "' in " + origin);
    }
    const uint32_t ndim = r.u32("rank");
    uint64_t numel = 1;
    for (uint32_t i = 0; i < ndim; ++i) {
      const uint64_t d = r.u64("dimension");
      if (d == 0) throw DataError("checkpoint: zero dimension in " + origin);
      e.dims.push_back(static_cast<int64_t>(d));
      numel *= d;
    }
    if (e.dtype == 0) {
      e.f32.resize(numel);
      for (uint64_t i = 0; i < numel; ++i) {
        const uint32_t bits = r.u32("f32 payload");
        std::memcpy(&e.f32[i], &bits, 4);
      }
    } else {
      e.f64.resize(numel);
      for (uint64_t i = 0; i < numel; ++i) {
        const uint64_t bits = r.u64("f64 payload");
        std::memcpy(&e.f64[i], &bits, 8);
      }
    }
    ck.entries.push_back(std::move(e));
  }
  return ck;
}

void Checkpoint::save(const std::string& path) const {
  const std::vector<std::byte> bytes = serialize();
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("checkpoint: cannot write " + tmp);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("checkpoint: failed writing " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("checkpoint: cannot rename " + tmp + " to " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("checkpoint: cannot open " + path);
  in.seekg(0, std::ios::end);
  const std::streamoff len = in.tellg();
  in.seekg(0, std::ios::beg);
  std::vector<std::byte> bytes(static_cast<size_t>(len));
  if (len > 0) in.read(reinterpret_cast<char*>(bytes.data()), len);
  if (!in) throw IoError("checkpoint: failed reading " + path);
  return deserialize(bytes, path);
}

// ------------------------------------------------------------- run state ---

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void save_run(const std::string& path, const pipeline::ExperimentConfig& cfg,
              vae::VaeModel& model, const pipeline::AdamF* opt,
              const optim::PlateauScheduler* sched, int epoch,
              const std::string& phase, nn::ClassifierHead<float>* head,
              const pipeline::MetricsLog* log) {
  Checkpoint ck;
  ck.set_meta("format.phase", phase);
  ck.set_meta("format.epoch", std::to_string(epoch));
  // streams are re-derived from (seed, stream name, epoch), so the generator
  // state is fully described by the scheme tag plus the config seed
  ck.set_meta("rng.scheme", "per-epoch-derived");
  ck.set_meta("rng.seed", std::to_string(cfg.pretrain.seed));
  if (opt) {
    ck.set_meta("adam.t", std::to_string(opt->t()));
  }
  if (sched) {
    ck.set_meta("sched.best", fmt17(sched->best()));
    ck.set_meta("sched.since", std::to_string(sched->since_improvement()));
    ck.set_meta("sched.lr", fmt17(sched->lr()));
  }
  for (const auto& [k, v] : config::to_pairs(cfg)) ck.set_meta("config." + k, v);
  if (log) {
    // past metric rows travel with the checkpoint so resumed runs rebuild
    // the full history
    for (const auto& r : log->pretrain) {
      ck.set_meta("log.pretrain." + std::to_string(r.epoch),
                  fmt17(r.train_total) + "," + fmt17(r.train_kl) + "," +
                      fmt17(r.train_recon) + "," + fmt17(r.test_total) + "," +
                      fmt17(r.test_rmse) + "," + fmt17(r.lr));
    }
  }
  for (const auto* p : model.parameters()) {
    ck.add_tensor("model." + p->name, p->value);
  }
  if (opt) {
    const auto& params = opt->params();
    for (size_t i = 0; i < params.size(); ++i) {
      ck.add_tensor("optim." + params[i]->name + ".m", opt->m(i));
      ck.add_tensor("optim." + params[i]->name + ".v", opt->v(i));
    }
  }
  if (head) {
    for (const auto* p : head->parameters()) {
      ck.add_tensor("model." + p->name, p->value);
    }
  }
  ck.save(path);
}

RunState load_run(const std::string& path) {
  const Checkpoint ck = Checkpoint::load(path);
  RunState run;
  run.cfg = config::defaults();
  for (const auto& [k, v] : ck.metadata) {
    if (k.rfind("config.", 0) == 0) {
      config::apply_pair(run.cfg, k.substr(7), v);
    }
  }
  run.phase = ck.require_meta("format.phase");
  run.epoch = std::atoi(ck.require_meta("format.epoch").c_str());

  for (const auto& [k, v] : ck.metadata) {
    if (k.rfind("log.pretrain.", 0) != 0) continue;
    pipeline::PretrainRow row;
    row.epoch = std::atoi(k.substr(13).c_str());
    const char* s = v.c_str();
    char* end = nullptr;
    double* fields[] = {&row.train_total, &row.train_kl, &row.train_recon,
                        &row.test_total, &row.test_rmse, &row.lr};
    for (double* field : fields) {
      *field = std::strtod(s, &end);
      if (end == s) throw DataError("checkpoint: malformed metrics row '" + k + "'");
      s = (*end == ',') ? end + 1 : end;
    }
    run.log.pretrain.push_back(row);
  }
  std::sort(run.log.pretrain.begin(), run.log.pretrain.end(),
            [](const auto& a, const auto& b) { return a.epoch < b.epoch; });

  Rng scratch_rng(0, "init");
  run.model = vae::build_vae<float>(run.cfg.latent, run.cfg.arch, scratch_rng);
  run.model.recon = run.cfg.recon;
  for (auto* p : run.model.parameters()) {
    Tensor<float> t = ck.tensor_f32("model." + p->name);
    if (!t.same_shape(p->value)) {
      throw DataError("checkpoint: tensor 'model." + p->name + "' has shape " +
                      shape_str(t.shape()) + ", expected " +
                      shape_str(p->value.shape()));
    }
    p->value = std::move(t);
    p->grad = Tensor<float>::zeros(p->value.shape());
  }

  if (auto t = ck.meta("adam.t")) {
    run.has_optimizer = true;
    run.adam_t = std::atoll(t->c_str());
    for (auto* p : run.model.parameters()) {
      run.adam_m.push_back(ck.tensor_f32("optim." + p->name + ".m"));
      run.adam_v.push_back(ck.tensor_f32("optim." + p->name + ".v"));
    }
    run.sched_best = std::strtod(ck.require_meta("sched.best").c_str(), nullptr);
    run.sched_since = std::atoi(ck.require_meta("sched.since").c_str());
    run.sched_lr = std::strtod(ck.require_meta("sched.lr").c_str(), nullptr);
  }

  if (ck.has_tensor("model.classifier.out.w")) {
    Rng head_rng(0, "init");
    run.head = nn::build_classifier<float>(run.cfg.latent, run.cfg.arch, head_rng);
    for (auto* p : run.head->parameters()) {
      Tensor<float> t = ck.tensor_f32("model." + p->name);
      if (!t.same_shape(p->value)) {
        throw DataError("checkpoint: tensor 'model." + p->name + "' shape mismatch");
      }
      p->value = std::move(t);
      p->grad = Tensor<float>::zeros(p->value.shape());
    }
  }
  return run;
}

pipeline::ResumeState to_resume_state(RunState&& run) {
  pipeline::ResumeState rs;
  rs.model = std::move(run.model);
  rs.adam_m = std::move(run.adam_m);
  rs.adam_v = std::move(run.adam_v);
  rs.adam_t = run.adam_t;
  rs.sched_best = run.sched_best;
  rs.sched_since = run.sched_since;
  rs.sched_lr = run.sched_lr;
  rs.epoch = run.epoch;
  rs.prior_log = std::move(run.log);
  return rs;
}

}  // namespace smallvae::ckpt
