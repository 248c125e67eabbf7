// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "smallvae/graph.hpp"
#include "smallvae/rng.hpp"

// Layers and the encoder phi / decoder psi / classifier builders. Every layer
// exposes two forwards that share the same value kernels: forward() records on
// a tape, infer() is the tape-free path used for evaluation.
namespace smallvae::nn {

using ag::Graph;
using ag::Parameter;
using ag::Var;

struct LatentConfig {
  int64_t channels = 100;
  int64_t spatial = 8;  // (100, 8) -> 6400, (100, 10) -> 10000, (100, 12) -> 14400
  int64_t flat() const { return channels * spatial * spatial; }
};

struct ArchParams {
  int64_t image_channels = 3;
  int64_t image_size = 32;
  int64_t stem_channels = 32;
  int64_t stem_kernel = 3;  // odd; padded to keep the spatial size
  int64_t growth = 12;
  int64_t block_layers = 2;
  int64_t trans_channels = 64;
  int64_t out_kernel = 3;  // decoder output conv, odd
  int64_t classifier_hidden = 512;
  // a hidden FC layer is added when the flat latent exceeds this
  int64_t hidden_threshold = 8192;
  // posterior scale starts at exp(this/2); zero-bias starts at sigma = 1,
  // where the sampling noise drowns the latent code and small models collapse
  // onto the data mean
  double logvar_bias_init = -4.0;
};

// He fan-in init, zero bias. Bias parameters are excluded from weight decay.
template <class T>
Parameter<T> init_weight(std::string name, Shape shape, int64_t fan_in, Rng& rng) {
  Tensor<T> w(shape);
  rng.fill_normal(w, 0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  return Parameter<T>(std::move(name), std::move(w));
}

template <class T>
Parameter<T> init_bias(std::string name, int64_t n) {
  Parameter<T> p(std::move(name), Tensor<T>::zeros({n}));
  p.decay = false;
  return p;
}

template <class T>
struct Conv2dLayer {
  Parameter<T> w;  // [outC x inC x k x k]
  Parameter<T> b;  // [outC]
  int64_t stride = 1;
  int64_t pad = 0;
  std::string name;

  static Conv2dLayer make(std::string name, int64_t in_c, int64_t out_c,
                          int64_t k, int64_t stride, int64_t pad, Rng& rng) {
    Conv2dLayer layer;
    layer.w = init_weight<T>(name + ".w", {out_c, in_c, k, k}, in_c * k * k, rng);
    layer.b = init_bias<T>(name + ".b", out_c);
    layer.stride = stride;
    layer.pad = pad;
    layer.name = std::move(name);
    return layer;
  }

  int64_t in_channels() const { return w.value.dim(1); }
  int64_t out_channels() const { return w.value.dim(0); }
  int64_t out_spatial(int64_t in) const {
    return nnops::conv_out_dim(in, w.value.dim(2), stride, pad);
  }

  Var<T> forward(Graph<T>& g, Var<T> x) {
    return ag::conv2d(x, g.param(w), g.param(b), stride, pad, name);
  }
  Tensor<T> infer(const Tensor<T>& x) const {
    return nnops::conv2d_value(x, w.value, b.value, stride, pad, name);
  }
  void collect(std::vector<Parameter<T>*>& out) {
    out.push_back(&w);
    out.push_back(&b);
  }
};

template <class T>
struct DenseLayer {
  Parameter<T> w;  // [out x in]
  Parameter<T> b;  // [out]
  std::string name;

  static DenseLayer make(std::string name, int64_t in, int64_t out, Rng& rng) {
    DenseLayer layer;
    layer.w = init_weight<T>(name + ".w", {out, in}, in, rng);
    layer.b = init_bias<T>(name + ".b", out);
    layer.name = std::move(name);
    return layer;
  }

  Var<T> forward(Graph<T>& g, Var<T> x) {
    return ag::dense(x, g.param(w), g.param(b));
  }
  Tensor<T> infer(const Tensor<T>& x) const {
    return nnops::dense_value(x, w.value, b.value);
  }
  void collect(std::vector<Parameter<T>*>& out) {
    out.push_back(&w);
    out.push_back(&b);
  }
};

// DenseNet-style block: layer i consumes concat(x, y_0..y_{i-1}) through
// relu then a 3x3 conv producing `growth` channels; the block output is the
// concatenation of the input with every layer output. Spatial size unchanged.
template <class T>
struct DenseBlock {
  std::vector<Conv2dLayer<T>> layers;
  int64_t in_channels = 0;
  int64_t growth = 0;

  static DenseBlock make(const std::string& name, int64_t in_c, int64_t growth,
                         int64_t num_layers, Rng& rng) {
    DenseBlock block;
    block.in_channels = in_c;
    block.growth = growth;
    for (int64_t i = 0; i < num_layers; ++i) {
      block.layers.push_back(Conv2dLayer<T>::make(
          name + ".l" + std::to_string(i), in_c + i * growth, growth, 3, 1, 1, rng));
    }
    return block;
  }

  int64_t out_channels() const {
    return in_channels + static_cast<int64_t>(layers.size()) * growth;
  }

  Var<T> forward(Graph<T>& g, Var<T> x) {
    check_channels(x.value().dim(1));
    std::vector<Var<T>> feats{x};
    for (auto& layer : layers) {
      Var<T> cat = feats.size() == 1 ? feats[0] : ag::concat_channels(feats);
      feats.push_back(layer.forward(g, ag::relu(cat)));
    }
    return feats.size() == 1 ? x : ag::concat_channels(feats);
  }

  Tensor<T> infer(const Tensor<T>& x) const {
    check_channels(x.dim(1));
    if (layers.empty()) return x;
    std::vector<Tensor<T>> feats{x};
    for (const auto& layer : layers) {
      std::vector<const Tensor<T>*> ptrs;
      for (const auto& f : feats) ptrs.push_back(&f);
      const Tensor<T> cat =
          feats.size() == 1 ? feats[0] : nnops::concat_channels_value(ptrs);
      feats.push_back(layer.infer(nnops::relu_value(cat)));
    }
    std::vector<const Tensor<T>*> ptrs;
    for (const auto& f : feats) ptrs.push_back(&f);
    return nnops::concat_channels_value(ptrs);
  }

  void collect(std::vector<Parameter<T>*>& out) {
    for (auto& layer : layers) layer.collect(out);
  }

 private:
  void check_channels(int64_t c) const {
    if (c != in_channels) {
      throw ShapeError("dense_block: got " + std::to_string(c) +
                       " channels, expected " + std::to_string(in_channels));
    }
  }
};

// phi: X -> F. Stem, two dense-block stages with strided 1x1 transitions down
// to image_size/4, a nearest resize onto the configured latent spatial size,
// then parallel 1x1 heads for mu and logvar.
template <class T>
struct Encoder {
  Conv2dLayer<T> stem;
  DenseBlock<T> block1;
  Conv2dLayer<T> trans1;
  DenseBlock<T> block2;
  Conv2dLayer<T> trans2;
  Conv2dLayer<T> mu_head;
  Conv2dLayer<T> logvar_head;
  int64_t base_spatial = 8;
  int64_t latent_spatial = 8;

  std::pair<Var<T>, Var<T>> forward(Graph<T>& g, Var<T> x) {
    Var<T> h = ag::relu(stem.forward(g, x));
    h = block1.forward(g, h);
    h = ag::relu(trans1.forward(g, h));
    h = block2.forward(g, h);
    h = ag::relu(trans2.forward(g, h));
    if (latent_spatial != base_spatial) {
      h = ag::resize_nearest(h, latent_spatial, latent_spatial);
    }
    return {mu_head.forward(g, h), logvar_head.forward(g, h)};
  }

  std::pair<Tensor<T>, Tensor<T>> infer(const Tensor<T>& x) const {
    Tensor<T> h = nnops::relu_value(stem.infer(x));
    h = block1.infer(h);
    h = nnops::relu_value(trans1.infer(h));
    h = block2.infer(h);
    h = nnops::relu_value(trans2.infer(h));
    if (latent_spatial != base_spatial) {
      h = nnops::resize_nearest_value(h, latent_spatial, latent_spatial);
    }
    return {mu_head.infer(h), logvar_head.infer(h)};
  }

  void collect(std::vector<Parameter<T>*>& out) {
    stem.collect(out);
    block1.collect(out);
    trans1.collect(out);
    block2.collect(out);
    trans2.collect(out);
    mu_head.collect(out);
    logvar_head.collect(out);
  }
};

// psi: F -> Y, mirroring the encoder with resize-based upsampling and a
// sigmoid output so reconstructions stay in (0, 1).
template <class T>
struct Decoder {
  Conv2dLayer<T> latent_conv;
  DenseBlock<T> block1;
  Conv2dLayer<T> trans1;
  DenseBlock<T> block2;
  Conv2dLayer<T> out_conv;
  int64_t mid_spatial = 16;
  int64_t image_size = 32;

  Var<T> forward(Graph<T>& g, Var<T> z) {
    Var<T> h = ag::relu(latent_conv.forward(g, z));
    h = ag::resize_nearest(h, mid_spatial, mid_spatial);
    h = block1.forward(g, h);
    h = ag::relu(trans1.forward(g, h));
    h = ag::resize_nearest(h, image_size, image_size);
    h = block2.forward(g, h);
    return ag::sigmoid(out_conv.forward(g, h));
  }

  Tensor<T> infer(const Tensor<T>& z) const {
    Tensor<T> h = nnops::relu_value(latent_conv.infer(z));
    h = nnops::resize_nearest_value(h, mid_spatial, mid_spatial);
    h = block1.infer(h);
    h = nnops::relu_value(trans1.infer(h));
    h = nnops::resize_nearest_value(h, image_size, image_size);
    h = block2.infer(h);
    return nnops::sigmoid_value(out_conv.infer(h));
  }

  void collect(std::vector<Parameter<T>*>& out) {
    latent_conv.collect(out);
    block1.collect(out);
    trans1.collect(out);
    block2.collect(out);
    out_conv.collect(out);
  }
};

// Flattened mu features -> 10 logits. A hidden ReLU layer appears only for
// large flat latents (flat > hidden_threshold).
template <class T>
struct ClassifierHead {
  std::optional<DenseLayer<T>> hidden;
  DenseLayer<T> out;
  int64_t flat_in = 0;

  Var<T> forward(Graph<T>& g, Var<T> features) {
    Var<T> h = features;
    if (hidden) h = ag::relu(hidden->forward(g, h));
    return out.forward(g, h);
  }

  Tensor<T> infer(const Tensor<T>& features) const {
    if (!hidden) return out.infer(features);
    return out.infer(nnops::relu_value(hidden->infer(features)));
  }

  void collect(std::vector<Parameter<T>*>& out_params) {
    if (hidden) hidden->collect(out_params);
    out.collect(out_params);
  }

  std::vector<Parameter<T>*> parameters() {
    std::vector<Parameter<T>*> p;
    collect(p);
    return p;
  }
};

inline void validate_arch(const LatentConfig& cfg, const ArchParams& arch) {
  if (cfg.channels < 1 || cfg.spatial < 1) {
    throw ConfigError("latent config: channels and spatial must be positive");
  }
  if (arch.image_size < 4 || arch.image_size % 4 != 0) {
    throw ConfigError("arch: image_size must be a positive multiple of 4, got " +
                      std::to_string(arch.image_size));
  }
}

template <class T>
Encoder<T> build_encoder(const LatentConfig& cfg, const ArchParams& arch, Rng& rng) {
  validate_arch(cfg, arch);
  Encoder<T> e;
  e.base_spatial = arch.image_size / 4;
  e.latent_spatial = cfg.spatial;
  e.stem = Conv2dLayer<T>::make("encoder.stem", arch.image_channels,
                                arch.stem_channels, arch.stem_kernel, 1,
                                arch.stem_kernel / 2, rng);
  e.block1 = DenseBlock<T>::make("encoder.block1", arch.stem_channels,
                                 arch.growth, arch.block_layers, rng);
  e.trans1 = Conv2dLayer<T>::make("encoder.trans1", e.block1.out_channels(),
                                  arch.trans_channels, 1, 2, 0, rng);
  e.block2 = DenseBlock<T>::make("encoder.block2", arch.trans_channels,
                                 arch.growth, arch.block_layers, rng);
  e.trans2 = Conv2dLayer<T>::make("encoder.trans2", e.block2.out_channels(),
                                  arch.trans_channels, 1, 2, 0, rng);
  e.mu_head = Conv2dLayer<T>::make("encoder.mu_head", arch.trans_channels,
                                   cfg.channels, 1, 1, 0, rng);
  e.logvar_head = Conv2dLayer<T>::make("encoder.logvar_head", arch.trans_channels,
                                       cfg.channels, 1, 1, 0, rng);
  // the logvar head parametrises the posterior scale; decaying it pressures
  // the posterior toward collapse
  e.logvar_head.w.decay = false;
  std::fill(e.logvar_head.b.value.data(),
            e.logvar_head.b.value.data() + e.logvar_head.b.value.numel(),
            static_cast<T>(arch.logvar_bias_init));
  // downsample arithmetic: two stride-2 transitions from image_size
  if (e.trans2.out_spatial(e.trans1.out_spatial(arch.image_size)) != e.base_spatial) {
    throw ShapeError("encoder: transition output size mismatch");
  }
  return e;
}

template <class T>
Decoder<T> build_decoder(const LatentConfig& cfg, const ArchParams& arch, Rng& rng) {
  validate_arch(cfg, arch);
  Decoder<T> d;
  d.mid_spatial = arch.image_size / 2;
  d.image_size = arch.image_size;
  d.latent_conv = Conv2dLayer<T>::make("decoder.latent_conv", cfg.channels,
                                       arch.trans_channels, 1, 1, 0, rng);
  d.block1 = DenseBlock<T>::make("decoder.block1", arch.trans_channels,
                                 arch.growth, arch.block_layers, rng);
  d.trans1 = Conv2dLayer<T>::make("decoder.trans1", d.block1.out_channels(),
                                  arch.trans_channels, 1, 1, 0, rng);
  d.block2 = DenseBlock<T>::make("decoder.block2", arch.trans_channels,
                                 arch.growth, arch.block_layers, rng);
  d.out_conv = Conv2dLayer<T>::make("decoder.out_conv", d.block2.out_channels(),
                                    arch.image_channels, arch.out_kernel, 1,
                                    arch.out_kernel / 2, rng);
  return d;
}

template <class T>
ClassifierHead<T> build_classifier(const LatentConfig& cfg, const ArchParams& arch,
                                   Rng& rng) {
  validate_arch(cfg, arch);
  ClassifierHead<T> head;
  head.flat_in = cfg.flat();
  if (cfg.flat() > arch.hidden_threshold) {
    head.hidden = DenseLayer<T>::make("classifier.hidden", cfg.flat(),
                                      arch.classifier_hidden, rng);
    head.out = DenseLayer<T>::make("classifier.out", arch.classifier_hidden, 10, rng);
  } else {
    head.out = DenseLayer<T>::make("classifier.out", cfg.flat(), 10, rng);
  }
  return head;
}

}  // namespace smallvae::nn
