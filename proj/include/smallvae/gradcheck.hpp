// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "smallvae/graph.hpp"

namespace smallvae::ag {

template <class T>
struct GradCheckResult {
  T max_rel_error = T(0);
  int64_t worst_index = -1;
};

// Central-difference check of a scalar-valued function of one tensor.
// f builds its computation on the supplied graph; it must be deterministic.
// Relative error per coordinate is |analytic - central| scaled by
// max(|analytic|, |central|, 1e-8). Coordinates with mask[i] == 0 are skipped
// (documented nondifferentiable points such as relu at exactly 0).
template <class T>
GradCheckResult<T> grad_check(
    const std::function<Var<T>(Graph<T>&, Var<T>)>& f, const Tensor<T>& x,
    T eps, const std::vector<uint8_t>* mask = nullptr) {
  auto eval = [&](const Tensor<T>& point) {
    Graph<T> g;
    Var<T> out = f(g, g.input(point));
    if (out.value().numel() != 1) {
      throw ShapeError("grad_check: f must be scalar-valued");
    }
    const T v = out.value()[0];
    if (!std::isfinite(v)) throw NumericError("grad_check: non-finite f(x)");
    return v;
  };

  Graph<T> g;
  Var<T> xv = g.input(x);
  Var<T> out = f(g, xv);
  if (out.value().numel() != 1) {
    throw ShapeError("grad_check: f must be scalar-valued");
  }
  if (!std::isfinite(out.value()[0])) {
    throw NumericError("grad_check: non-finite f(x)");
  }
  g.backward(out);
  const Tensor<T> analytic = g.grad_or_zeros(xv.id);

  GradCheckResult<T> result;
  Tensor<T> probe = x;
  for (int64_t i = 0; i < x.numel(); ++i) {
    if (mask && !(*mask)[static_cast<size_t>(i)]) continue;
    const T saved = probe[i];
    probe[i] = saved + eps;
    const T fp = eval(probe);
    probe[i] = saved - eps;
    const T fm = eval(probe);
    probe[i] = saved;
    const T central = (fp - fm) / (T(2) * eps);
    const T denom = std::max({std::abs(analytic[i]), std::abs(central), T(1e-8)});
    const T rel = std::abs(analytic[i] - central) / denom;
    if (rel > result.max_rel_error) {
      result.max_rel_error = rel;
      result.worst_index = i;
    }
  }
  return result;
}

}  // namespace smallvae::ag
