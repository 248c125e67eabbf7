// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "smallvae/graph.hpp"
#include "smallvae/kernels.hpp"

namespace smallvae::optim {

// Adam with decoupled weight decay:
//   m <- b1 m + (1-b1) g,  v <- b2 v + (1-b2) g^2
//   theta <- theta - lr * mhat / (sqrt(vhat) + eps) - lr * wd * theta
// Decay is skipped for parameters flagged decay == false (biases, the logvar
// head). One state per model; step() is single-writer.
template <class T>
class Adam {
 public:
  struct Hyper {
    T lr = T(1e-4);
    T beta1 = T(0.9);
    T beta2 = T(0.999);
    T eps = T(1e-8);
    T weight_decay = T(0);
  };

  Adam(std::vector<ag::Parameter<T>*> params, Hyper hyper)
      : params_(std::move(params)), hyper_(hyper) {
    for (auto* p : params_) {
      m_.push_back(Tensor<T>::zeros(p->value.shape()));
      v_.push_back(Tensor<T>::zeros(p->value.shape()));
    }
  }

  void zero_grad() {
    for (auto* p : params_) p->zero_grad();
  }

  // Consumes the gradients accumulated in each parameter's grad buffer.
  void step() {
    for (auto* p : params_) {
      const int64_t bad = p->grad.first_non_finite();
      if (bad >= 0) {
        throw NumericError("adam: non-finite gradient in parameter '" + p->name +
                           "' at index " + std::to_string(bad));
      }
    }
    ++t_;
    const T bc1 = T(1) / (T(1) - std::pow(hyper_.beta1, static_cast<T>(t_)));
    const T bc2 = T(1) / (T(1) - std::pow(hyper_.beta2, static_cast<T>(t_)));
    const auto& be = kernels::active_backend<T>();
    for (size_t i = 0; i < params_.size(); ++i) {
      ag::Parameter<T>* p = params_[i];
      const T wd = p->decay ? hyper_.weight_decay : T(0);
      be.adam_update(p->value.data(), p->grad.data(), m_[i].data(), v_[i].data(),
                     p->value.numel(), hyper_.lr, hyper_.beta1, hyper_.beta2,
                     hyper_.eps, wd, bc1, bc2);
    }
  }

  int64_t t() const { return t_; }
  T lr() const { return hyper_.lr; }
  void set_lr(T lr) { hyper_.lr = lr; }
  const Hyper& hyper() const { return hyper_; }

  size_t size() const { return params_.size(); }
  const std::vector<ag::Parameter<T>*>& params() const { return params_; }
  const Tensor<T>& m(size_t i) const { return m_[i]; }
  const Tensor<T>& v(size_t i) const { return v_[i]; }

  // Checkpoint restore: moments by parameter index, then the step counter.
  void restore(std::vector<Tensor<T>> m, std::vector<Tensor<T>> v, int64_t t) {
    if (m.size() != params_.size() || v.size() != params_.size()) {
      throw Error("adam: restore state size mismatch");
    }
    for (size_t i = 0; i < params_.size(); ++i) {
      if (!m[i].same_shape(params_[i]->value) || !v[i].same_shape(params_[i]->value)) {
        throw ShapeError("adam: restored moment shape mismatch for '" +
                         params_[i]->name + "'");
      }
    }
    m_ = std::move(m);
    v_ = std::move(v);
    t_ = t;
  }

 private:
  std::vector<ag::Parameter<T>*> params_;
  std::vector<Tensor<T>> m_, v_;
  int64_t t_ = 0;
  Hyper hyper_;
};

// Reduce-on-plateau on the monitored metric (test RMSE during pre-training).
// Improvement means metric < best * (1 - threshold); after more than
// `patience` consecutive non-improving epochs the rate is multiplied by
// `factor`, floored at min_lr. The produced lr sequence never increases.
class PlateauScheduler {
 public:
  struct Config {
    double factor = 0.5;
    int patience = 5;
    double min_lr = 1e-7;
    double threshold = 1e-4;  // relative
  };

  explicit PlateauScheduler(double initial_lr) : lr_(initial_lr) {}
  PlateauScheduler(double initial_lr, Config cfg) : lr_(initial_lr), cfg_(cfg) {}

  double step(double metric) {
    if (std::isnan(metric)) {
      throw NumericError("plateau scheduler: NaN metric rejected");
    }
    if (metric < best_ * (1.0 - cfg_.threshold)) {
      best_ = metric;
      since_improvement_ = 0;
    } else {
      ++since_improvement_;
      if (since_improvement_ > cfg_.patience) {
        lr_ = std::max(lr_ * cfg_.factor, cfg_.min_lr);
        since_improvement_ = 0;
      }
    }
    return lr_;
  }

  double lr() const { return lr_; }
  double best() const { return best_; }
  int since_improvement() const { return since_improvement_; }
  const Config& config() const { return cfg_; }

  void restore(double best, int since_improvement, double lr) {
    best_ = best;
    since_improvement_ = since_improvement;
    lr_ = lr;
  }

 private:
  double lr_;
  double best_ = std::numeric_limits<double>::infinity();
  int since_improvement_ = 0;
  Config cfg_;
};

}  // namespace smallvae::optim
