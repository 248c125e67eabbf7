// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "smallvae/nn.hpp"
#include "smallvae/rng.hpp"

// The variational objective: reparameterized sampling, closed-form KL against
// the standard-normal prior, the reconstruction term, and their sum.
namespace smallvae::vae {

using nn::ArchParams;
using nn::LatentConfig;

enum class ReconKind { gaussian, bernoulli };

template <class T>
struct ElboTermsT {
  T kl = T(0);     // nats per example, >= 0
  T recon = T(0);  // per-example reconstruction penalty
  T total = T(0);  // kl + recon, same summation order as the graph node
};
using ElboTerms = ElboTermsT<float>;

template <class T>
struct LatentSampleT {
  Tensor<T> mu, logvar, z, eps;  // z = mu + exp(logvar/2) * eps elementwise
};

template <class T>
struct VaeModelT {
  nn::Encoder<T> encoder;
  nn::Decoder<T> decoder;
  LatentConfig latent;
  ArchParams arch;
  ReconKind recon = ReconKind::gaussian;

  std::vector<ag::Parameter<T>*> parameters() {
    std::vector<ag::Parameter<T>*> p;
    encoder.collect(p);
    decoder.collect(p);
    return p;
  }

  void set_trainable(bool v) {
    for (auto* p : parameters()) p->trainable = v;
  }

  // FNV-1a over all parameter bytes in creation order; the freeze contract is
  // checked by comparing fingerprints before and after fine-tuning.
  uint64_t fingerprint() {
    uint64_t h = 0xcbf29ce484222325ull;
    for (auto* p : parameters()) {
      const auto* bytes = reinterpret_cast<const unsigned char*>(p->value.data());
      const size_t len = static_cast<size_t>(p->value.numel()) * sizeof(T);
      for (size_t i = 0; i < len; ++i) {
        h ^= bytes[i];
        h *= 0x100000001b3ull;
      }
    }
    return h;
  }

  std::pair<Tensor<T>, Tensor<T>> encode_infer(const Tensor<T>& x) const {
    return encoder.infer(x);
  }
  Tensor<T> decode_infer(const Tensor<T>& z) const { return decoder.infer(z); }
};
using VaeModel = VaeModelT<float>;

template <class T>
VaeModelT<T> build_vae(const LatentConfig& cfg, const ArchParams& arch, Rng& rng) {
  VaeModelT<T> m;
  m.encoder = nn::build_encoder<T>(cfg, arch, rng);
  m.decoder = nn::build_decoder<T>(cfg, arch, rng);
  m.latent = cfg;
  m.arch = arch;
  return m;
}

// eps ~ N(0,1) from the seeded generator; z = mu + exp(logvar/2) * eps. The
// raw logvar is used here so a -80 surrogate for log 0 gives z == mu to
// machine precision; the loss path clamps before exponentiation instead.
template <class T>
LatentSampleT<T> reparameterize(const Tensor<T>& mu, const Tensor<T>& logvar,
                                Rng& rng) {
  if (!mu.same_shape(logvar)) {
    throw ShapeError("reparameterize: mu " + shape_str(mu.shape()) +
                     " vs logvar " + shape_str(logvar.shape()));
  }
  LatentSampleT<T> s;
  s.mu = mu;
  s.logvar = logvar;
  s.eps = Tensor<T>(mu.shape());
  s.z = Tensor<T>(mu.shape());
  for (int64_t i = 0; i < mu.numel(); ++i) {
    s.eps[i] = static_cast<T>(rng.normal());
    s.z[i] = mu[i] + std::exp(logvar[i] * T(0.5)) * s.eps[i];
  }
  return s;
}

inline constexpr double kLogvarClamp = 20.0;

// KL(N(mu, sigma^2) || N(0, I)) = 1/2 sum(mu^2 + sigma^2 - 1 - log sigma^2),
// averaged over the batch (dim 0 when rank >= 2; rank-1 input counts as one
// example). logvar is clamped to [-20, 20] before exponentiation.
template <class T>
T kl_standard_normal(const Tensor<T>& mu, const Tensor<T>& logvar) {
  if (!mu.same_shape(logvar)) {
    throw ShapeError("kl_standard_normal: mu " + shape_str(mu.shape()) +
                     " vs logvar " + shape_str(logvar.shape()));
  }
  const int64_t batch = mu.rank() >= 2 ? mu.dim(0) : 1;
  Tensor<T> inner(mu.shape());
  const T lo = static_cast<T>(-kLogvarClamp), hi = static_cast<T>(kLogvarClamp);
  for (int64_t i = 0; i < mu.numel(); ++i) {
    const T lv = std::min(hi, std::max(lo, logvar[i]));
    inner[i] = ((mu[i] * mu[i] + std::exp(lv)) + T(-1)) - lv;
  }
  return nnops::be<T>().sum(inner.data(), inner.numel()) * (T(0.5) / static_cast<T>(batch));
}

// Unit-variance Gaussian likelihood with constants dropped: mean over the
// batch of 1/2 * sum of squared error per image.
template <class T>
T recon_loss(const Tensor<T>& x_hat, const Tensor<T>& x) {
  if (!x_hat.same_shape(x)) {
    throw ShapeError("recon_loss: x_hat " + shape_str(x_hat.shape()) + " vs x " +
                     shape_str(x.shape()));
  }
  const int64_t batch = x.rank() >= 2 ? x.dim(0) : 1;
  const T sse = nnops::be<T>().sq_diff_sum(x_hat.data(), x.data(), x.numel());
  return sse * (T(0.5) / static_cast<T>(batch));
}

template <class T>
struct ElboVars {
  ag::Var<T> total, kl, recon, mu, logvar, z, x_hat;
  Tensor<T> eps;
  ElboTermsT<T> terms() const {
    return {kl.value()[0], recon.value()[0], total.value()[0]};
  }
};

namespace detail {

template <class T>
ElboVars<T> elbo_build(ag::Graph<T>& g, VaeModelT<T>& model, ag::Var<T> xc,
                       Tensor<T> eps_values, ReconKind kind) {
  auto [mu, logvar] = model.encoder.forward(g, xc);
  const T lo = static_cast<T>(-kLogvarClamp), hi = static_cast<T>(kLogvarClamp);
  ag::Var<T> lv = ag::clamp(logvar, lo, hi);
  ag::Var<T> eps = xc.g->constant(eps_values);
  ag::Var<T> sigma = ag::exp(ag::mul_const(lv, T(0.5)));
  ag::Var<T> z = ag::add(mu, ag::mul(sigma, eps));
  ag::Var<T> x_hat = model.decoder.forward(g, z);

  const T inv_batch = T(1) / static_cast<T>(xc.value().dim(0));
  ag::Var<T> kl_inner =
      ag::sub(ag::add_const(ag::add(ag::mul(mu, mu), ag::exp(lv)), T(-1)), lv);
  ag::Var<T> kl = ag::mul_const(ag::reduce_sum(kl_inner), T(0.5) * inv_batch);

  ag::Var<T> recon;
  if (kind == ReconKind::gaussian) {
    ag::Var<T> d = ag::sub(x_hat, xc);
    recon = ag::mul_const(ag::reduce_sum(ag::mul(d, d)), T(0.5) * inv_batch);
  } else {
    const T edge = static_cast<T>(1e-7);
    ag::Var<T> xp = ag::clamp(x_hat, edge, T(1) - edge);
    ag::Var<T> one = g.constant(Tensor<T>::scalar(T(1)));
    ag::Var<T> term = ag::add(ag::mul(xc, ag::log(xp)),
                              ag::mul(ag::sub(one, xc), ag::log(ag::sub(one, xp))));
    recon = ag::mul_const(ag::reduce_sum(term), -inv_batch);
  }
  ag::Var<T> total = ag::add(kl, recon);
  return {total, kl, recon, mu, logvar, z, x_hat, std::move(eps_values)};
}

}  // namespace detail

// Single-sample Monte-Carlo estimate of the objective, differentiable
// end-to-end; eps is drawn fresh from the given generator.
template <class T>
ElboVars<T> elbo_graph(ag::Graph<T>& g, VaeModelT<T>& model, const Tensor<T>& x,
                       Rng& rng, ReconKind kind) {
  ag::Var<T> xc = g.constant(x);
  Tensor<T> eps({x.dim(0), model.latent.channels, model.latent.spatial,
                 model.latent.spatial});
  rng.fill_normal(eps, 0.0, 1.0);
  return detail::elbo_build(g, model, xc, std::move(eps), kind);
}

// Frozen-noise variant for gradient checks: the same eps makes the loss a
// deterministic function of the parameters.
template <class T>
ElboVars<T> elbo_graph(ag::Graph<T>& g, VaeModelT<T>& model, const Tensor<T>& x,
                       Tensor<T> eps, ReconKind kind) {
  return detail::elbo_build(g, model, g.constant(x), std::move(eps), kind);
}

template <class T>
ElboTermsT<T> elbo_loss(VaeModelT<T>& model, const Tensor<T>& x, Rng& rng) {
  ag::Graph<T> g;
  return elbo_graph(g, model, x, rng, model.recon).terms();
}

}  // namespace smallvae::vae
