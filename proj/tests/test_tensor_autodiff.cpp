// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "smallvae/gradcheck.hpp"
#include "smallvae/graph.hpp"

using namespace smallvae;
using ag::Graph;
using ag::Var;
using oracles::random_tensor;

TEST_CASE("elementwise forward basics") {
  Graph<double> g;
  Var<double> a = g.constant(Tensor<double>({2}, {1, 2}));
  Var<double> b = g.constant(Tensor<double>({2}, {3, 4}));
  Var<double> s = ag::add(a, b);
  CHECK(s.value()[0] == 4);
  CHECK(s.value()[1] == 6);

  // mul by 1.0 reproduces the input bit for bit
  Var<double> x = g.constant(Tensor<double>({3}, {0.1, -2.5, 7.25}));
  Var<double> same = ag::mul_const(x, 1.0);
  for (int64_t i = 0; i < 3; ++i) CHECK(same.value()[i] == x.value()[i]);

  Var<double> roundtrip = ag::log(ag::exp(g.constant(Tensor<double>({1}, {0.5}))));
  CHECK(std::abs(roundtrip.value()[0] - 0.5) < 1e-12);
}

TEST_CASE("rank-0 broadcast in binary ops") {
  Graph<double> g;
  Var<double> x = g.constant(Tensor<double>({2, 2}, {1, 2, 3, 4}));
  Var<double> s = g.constant(Tensor<double>::scalar(10.0));
  Var<double> y = ag::add(x, s);
  CHECK(y.value()[3] == 14);
  Var<double> z = ag::mul(s, x);
  CHECK(z.value()[2] == 30);
  CHECK(z.value().shape() == Shape{2, 2});

  Graph<double> g2;
  Var<double> a = g2.constant(Tensor<double>({2}, {1, 2}));
  Var<double> bad = g2.constant(Tensor<double>({3}, {1, 2, 3}));
  CHECK_THROWS_AS(ag::add(a, bad), ShapeError);
}

TEST_CASE("matmul identities and oracle") {
  Graph<double> g;
  Var<double> eye = g.constant(Tensor<double>({2, 2}, {1, 0, 0, 1}));
  Var<double> m = g.constant(Tensor<double>({2, 2}, {1, 2, 3, 4}));
  Var<double> p = ag::matmul(eye, m);
  for (int64_t i = 0; i < 4; ++i) CHECK(p.value()[i] == m.value()[i]);

  Var<double> row = g.constant(Tensor<double>({1, 2}, {1, 2}));
  Var<double> col = g.constant(Tensor<double>({2, 1}, {3, 4}));
  CHECK(ag::matmul(row, col).value()[0] == 11);

  Rng rng(7);
  Tensor<double> a = random_tensor<double>({3, 4}, rng);
  Tensor<double> b = random_tensor<double>({4, 2}, rng);
  const auto ref = oracles::naive_matmul(a.data(), b.data(), 3, 2, 4);
  Var<double> c = ag::matmul(g.constant(a), g.constant(b));
  for (int64_t i = 0; i < 6; ++i) {
    CHECK(std::abs(c.value()[i] - ref[static_cast<size_t>(i)]) < 1e-12);
  }

  CHECK_THROWS_AS(ag::matmul(row, row), ShapeError);
}

TEST_CASE("reductions") {
  Graph<double> g;
  CHECK(ag::reduce_sum(g.constant(Tensor<double>({3}, {1, 2, 3}))).value()[0] == 6);
  CHECK(ag::reduce_mean(g.constant(Tensor<double>::full({4, 5}, 1.0))).value()[0] == 1);
  Var<double> axis0 =
      ag::reduce_sum(g.constant(Tensor<double>({2, 2}, {1, 2, 3, 4})), {0});
  CHECK(axis0.value().shape() == Shape{2});
  CHECK(axis0.value()[0] == 4);
  CHECK(axis0.value()[1] == 6);
  CHECK_THROWS_AS(
      ag::reduce_sum(g.constant(Tensor<double>({2}, {1, 2})), {3}), ShapeError);
}

TEST_CASE("backward: analytic examples") {
  // loss = sum(x^2), x = [1, 2] -> grad [2, 4]
  Graph<double> g;
  Var<double> x = g.input(Tensor<double>({2}, {1, 2}));
  Var<double> loss = ag::reduce_sum(ag::mul(x, x));
  g.backward(loss);
  CHECK(g.grad(x.id)[0] == 2);
  CHECK(g.grad(x.id)[1] == 4);

  // constant loss: the disconnected parameter gets explicit zeros
  Graph<double> g2;
  ag::Parameter<double> p("p", Tensor<double>({3}, {1, 2, 3}));
  Var<double> pv = g2.param(p);
  Var<double> c = g2.constant(Tensor<double>({2}, {5, 5}));
  Var<double> loss2 = ag::reduce_sum(ag::mul(c, c));
  g2.backward(loss2);
  REQUIRE(g2.has_grad(pv.id));
  for (int64_t i = 0; i < 3; ++i) CHECK(g2.grad(pv.id)[i] == 0);

  // non-scalar loss rejected
  Graph<double> g3;
  Var<double> v = g3.input(Tensor<double>({2}, {1, 2}));
  CHECK_THROWS_AS(g3.backward(v), ShapeError);
}

TEST_CASE("fan-out accumulates additively and exactly") {
  Graph<double> g;
  Var<double> x = g.input(Tensor<double>({4}, {0.5, -1, 2, 3}));
  Var<double> loss = ag::add(ag::reduce_sum(x), ag::reduce_sum(x));
  g.backward(loss);
  for (int64_t i = 0; i < 4; ++i) CHECK(g.grad(x.id)[i] == 2.0);
}

TEST_CASE("backward visits each interior node exactly once") {
  Graph<double> g;
  Var<double> x = g.input(Tensor<double>({3}, {1, 2, 3}));
  Var<double> y = ag::mul(x, x);
  Var<double> z = ag::add(y, y);
  Var<double> loss = ag::reduce_sum(z);
  g.backward(loss);
  // three nodes carry backward functions: mul, add, reduce_sum
  CHECK(g.backward_visits() == 3);
}

TEST_CASE("inference-mode graphs accept no nodes") {
  Graph<float> g(false);
  CHECK_FALSE(g.recording());
  CHECK_THROWS_AS(g.constant(Tensor<float>::scalar(1.0f)), Error);
  CHECK(g.node_count() == 0);
}

TEST_CASE("grad_check: quadratic, sigmoid sum, relu kink exclusion") {
  auto square = [](Graph<double>&, Var<double> x) {
    return ag::reduce_sum(ag::mul(x, x));
  };
  const auto quad =
      ag::grad_check<double>(square, Tensor<double>::scalar(3.0), 1e-5);
  CHECK(quad.max_rel_error < 1e-8);

  Rng rng(3);
  auto sigsum = [](Graph<double>&, Var<double> x) {
    return ag::reduce_sum(ag::sigmoid(x));
  };
  const auto sig =
      ag::grad_check<double>(sigsum, random_tensor<double>({3, 4}, rng), 1e-5);
  CHECK(sig.max_rel_error < 1e-6);

  // relu at exactly 0 is nondifferentiable; that coordinate is masked out
  auto relusum = [](Graph<double>&, Var<double> x) {
    return ag::reduce_sum(ag::relu(x));
  };
  Tensor<double> with_kink({3}, {-1.0, 0.0, 2.0});
  const std::vector<uint8_t> mask{1, 0, 1};
  const auto rel = ag::grad_check<double>(relusum, with_kink, 1e-5, &mask);
  CHECK(rel.max_rel_error < 1e-8);
}

TEST_CASE("property: every differentiable primitive passes grad_check") {
  Rng crng(100);
  const Tensor<double> c44 = random_tensor<double>({4, 4}, crng);
  const Tensor<double> c4d = random_tensor<double>({2, 3, 4, 5}, crng);
  const Tensor<double> cmat = random_tensor<double>({5, 4}, crng);
  const Tensor<double> cw = random_tensor<double>({6, 4}, crng);
  const Tensor<double> cb = random_tensor<double>({6}, crng);
  const Tensor<double> cconvw = random_tensor<double>({4, 3, 3, 3}, crng);
  const Tensor<double> cconvb = random_tensor<double>({4}, crng);
  const Tensor<double> csmall = random_tensor<double>({2, 3, 2, 2}, crng);
  const Tensor<double> c210 = random_tensor<double>({2, 10}, crng);
  const Tensor<double> c4 = random_tensor<double>({4}, crng);

  struct Probe {
    const char* name;
    Shape shape;
    std::function<Var<double>(Graph<double>&, Var<double>)> f;
    std::function<void(Tensor<double>&)> prepare;  // keep off kinks/poles
  };

  std::vector<Probe> probes = {
      {"add", {4, 4},
       [&](Graph<double>& g, Var<double> x) {
         return ag::reduce_sum(ag::add(x, g.constant(c44)));
       },
       {}},
      {"sub", {4, 4},
       [&](Graph<double>& g, Var<double> x) {
         return ag::reduce_sum(ag::sub(g.constant(c44), x));
       },
       {}},
      {"mul", {4, 4},
       [&](Graph<double>& g, Var<double> x) {
         return ag::reduce_sum(ag::mul(x, g.constant(c44)));
       },
       {}},
      {"div_numerator", {4, 4},
       [&](Graph<double>& g, Var<double> x) {
         Var<double> denom = g.constant(Tensor<double>::full({4, 4}, 2.5));
         return ag::reduce_sum(ag::div(x, denom));
       },
       {}},
      {"div_denominator", {4, 4},
       [&](Graph<double>& g, Var<double> x) {
         return ag::reduce_sum(ag::div(g.constant(c44), x));
       },
       [](Tensor<double>& x) {
         for (int64_t i = 0; i < x.numel(); ++i) x[i] = 1.5 + std::abs(x[i]);
       }},
      {"neg", {3, 5},
       [](Graph<double>&, Var<double> x) { return ag::reduce_sum(ag::neg(x)); },
       {}},
      {"exp", {4, 4},
       [](Graph<double>&, Var<double> x) { return ag::reduce_sum(ag::exp(x)); },
       {}},
      {"log", {4, 4},
       [](Graph<double>&, Var<double> x) { return ag::reduce_sum(ag::log(x)); },
       [](Tensor<double>& x) {
         for (int64_t i = 0; i < x.numel(); ++i) x[i] = 0.5 + std::abs(x[i]);
       }},
      {"relu", {4, 4},
       [](Graph<double>&, Var<double> x) { return ag::reduce_sum(ag::relu(x)); },
       [](Tensor<double>& x) {
         for (int64_t i = 0; i < x.numel(); ++i) {
           if (std::abs(x[i]) < 0.05) x[i] = 0.1;
         }
       }},
      {"sigmoid", {4, 4},
       [](Graph<double>&, Var<double> x) {
         return ag::reduce_sum(ag::sigmoid(x));
       },
       {}},
      {"clamp_interior", {4, 4},
       [](Graph<double>&, Var<double> x) {
         return ag::reduce_sum(ag::clamp(x, -5.0, 5.0));
       },
       {}},
      {"matmul", {4, 5},
       [&](Graph<double>& g, Var<double> x) {
         return ag::reduce_sum(ag::matmul(x, g.constant(cmat)));
       },
       {}},
      {"dense_input", {3, 4},
       [&](Graph<double>& g, Var<double> x) {
         Var<double> y = ag::dense(x, g.constant(cw), g.constant(cb));
         return ag::reduce_sum(ag::mul(y, y));
       },
       {}},
      {"conv2d_input", {2, 3, 5, 5},
       [&](Graph<double>& g, Var<double> x) {
         Var<double> y = ag::conv2d(x, g.constant(cconvw), g.constant(cconvb), 1, 1);
         return ag::reduce_sum(ag::mul(y, y));
       },
       {}},
      {"resize_up", {2, 3, 4, 4},
       [](Graph<double>&, Var<double> x) {
         return ag::reduce_sum(ag::resize_nearest(x, 7, 7));
       },
       {}},
      {"resize_down", {2, 3, 4, 5},
       [&](Graph<double>& g, Var<double> x) {
         Var<double> y = ag::resize_nearest(x, 2, 2);
         return ag::reduce_sum(ag::mul(y, g.constant(csmall)));
       },
       {}},
      {"concat", {2, 3, 4, 5},
       [&](Graph<double>& g, Var<double> x) {
         Var<double> y = ag::concat_channels<double>({x, g.constant(c4d)});
         return ag::reduce_sum(ag::mul(y, y));
       },
       {}},
      {"reshape", {4, 5},
       [&](Graph<double>& g, Var<double> x) {
         Var<double> y = ag::reshape(x, {2, 10});
         return ag::reduce_sum(ag::mul(y, g.constant(c210)));
       },
       {}},
      {"reduce_mean_axis", {3, 4},
       [&](Graph<double>& g, Var<double> x) {
         Var<double> y = ag::reduce_mean(x, {0});
         return ag::reduce_sum(ag::mul(y, g.constant(c4)));
       },
       {}},
      {"scalar_broadcast", {},
       [&](Graph<double>& g, Var<double> x) {
         return ag::reduce_sum(ag::mul(x, g.constant(c44)));
       },
       {}},
  };

  for (const Probe& probe : probes) {
    INFO("primitive ", probe.name);
    double worst = 0;
    for (uint64_t seed = 0; seed < 10; ++seed) {
      Rng rng(seed * 31 + 1);
      Tensor<double> x = random_tensor<double>(probe.shape, rng);
      if (probe.prepare) probe.prepare(x);
      const auto res = ag::grad_check<double>(probe.f, x, 1e-5);
      worst = std::max(worst, static_cast<double>(res.max_rel_error));
    }
    CHECK(worst < 1e-6);
  }
}

TEST_CASE("composite conv->relu->dense->cross-entropy matches finite differences") {
  Rng rng(21);
  const Tensor<double> w1 = random_tensor<double>({4, 3, 3, 3}, rng, 0.5);
  const Tensor<double> b1 = random_tensor<double>({4}, rng, 0.1);
  const Tensor<double> w2 = random_tensor<double>({5, 4 * 4 * 4}, rng, 0.5);
  const Tensor<double> b2 = random_tensor<double>({5}, rng, 0.1);
  const std::vector<int32_t> labels{2, 0};

  auto net = [&](Graph<double>& g, Var<double> x) {
    Var<double> h = ag::relu(ag::conv2d(x, g.constant(w1), g.constant(b1), 1, 1));
    Var<double> flat = ag::reshape(h, {2, 4 * 4 * 4});
    Var<double> logits = ag::dense(flat, g.constant(w2), g.constant(b2));
    return ag::cross_entropy(logits, labels);
  };

  double worst = 0;
  for (uint64_t seed = 0; seed < 3; ++seed) {
    Rng xr(seed + 50);
    Tensor<double> x = random_tensor<double>({2, 3, 4, 4}, xr);
    const auto res = ag::grad_check<double>(net, x, 1e-5);
    worst = std::max(worst, static_cast<double>(res.max_rel_error));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("domain errors carry the op name and offending index") {
  Graph<double> g;
  Var<double> neg = g.constant(Tensor<double>({3}, {1.0, -1.0, 2.0}));
  CHECK_THROWS_AS(ag::log(neg), NumericError);
  try {
    ag::log(neg);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("log") != std::string::npos);
    CHECK(msg.find("index 1") != std::string::npos);
  }

  Var<double> a = g.constant(Tensor<double>({2}, {1.0, 2.0}));
  Var<double> z = g.constant(Tensor<double>({2}, {1.0, 0.0}));
  CHECK_THROWS_AS(ag::div(a, z), NumericError);

  Var<double> overflow = g.constant(Tensor<double>({1}, {1e6}));
  CHECK_THROWS_AS(ag::exp(overflow), NumericError);
}

TEST_CASE("parameter gradients accumulate into their buffers") {
  ag::Parameter<float> p("weight", Tensor<float>({2}, {1.0f, 2.0f}));
  p.zero_grad();
  for (int step = 0; step < 2; ++step) {
    Graph<float> g;
    Var<float> pv = g.param(p);
    Var<float> loss = ag::reduce_sum(ag::mul(pv, pv));
    g.backward(loss);
    g.accumulate_param_grads();
  }
  // two backward passes accumulated: d/dp sum(p^2) = 2p, twice
  CHECK(p.grad[0] == 4.0f);
  CHECK(p.grad[1] == 8.0f);
  p.zero_grad();
  CHECK(p.grad[0] == 0.0f);
}
