// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "smallvae/nnops.hpp"
#include "smallvae/tensor.hpp"

// Reverse-mode tape. A Graph records one forward computation; backward() runs
// a single reverse sweep in creation order (parents always precede children),
// seeding the scalar loss with 1 and accumulating gradients additively across
// fan-out. A graph is single-writer: one training step owns one graph.
namespace smallvae::ag {

template <class T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;  // same shape; the training loop zeroes it each step
  bool trainable = true;
  bool decay = true;  // decoupled weight decay applies to this parameter

  Parameter() = default;
  Parameter(std::string n, Tensor<T> v)
      : name(std::move(n)), value(std::move(v)), grad(Tensor<T>::zeros(value.shape())) {}

  void zero_grad() { std::fill(grad.data(), grad.data() + grad.numel(), T(0)); }
};

template <class T>
class Graph;

template <class T>
struct Var {
  Graph<T>* g = nullptr;
  int32_t id = -1;
  const Tensor<T>& value() const { return g->value(id); }
};

template <class T>
struct Node {
  const char* op;
  std::vector<int32_t> parents;
  Tensor<T> value;
  std::optional<Tensor<T>> grad;
  std::function<void(Graph<T>&, const Node<T>&)> backward;
  Parameter<T>* param = nullptr;
  bool needs_grad = false;  // false when no tracked leaf feeds this node
};

template <class T>
class Graph {
 public:
  explicit Graph(bool recording = true) : recording_(recording) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool recording() const { return recording_; }

  // Untracked leaf (inputs, frozen noise).
  Var<T> constant(Tensor<T> v) { return append("const", {}, std::move(v), {}, nullptr, false); }

  // Tracked leaf that is not a model parameter (gradient-check probes).
  Var<T> input(Tensor<T> v) { return append("input", {}, std::move(v), {}, nullptr, true); }

  // Model parameter leaf; registered once per graph.
  Var<T> param(Parameter<T>& p) {
    auto it = param_ids_.find(&p);
    if (it != param_ids_.end()) return {this, it->second};
    Var<T> v = append("param", {}, p.value, {}, &p, true);
    param_ids_.emplace(&p, v.id);
    param_leaves_.emplace_back(&p, v.id);
    return v;
  }

  Var<T> apply(const char* op, std::vector<int32_t> parents, Tensor<T> value,
               std::function<void(Graph<T>&, const Node<T>&)> backward) {
    return append(op, std::move(parents), std::move(value), std::move(backward),
                  nullptr, false);
  }

  const Tensor<T>& value(int32_t id) const { return nodes_[static_cast<size_t>(id)].value; }

  bool needs_grad(int32_t id) const { return nodes_[static_cast<size_t>(id)].needs_grad; }

  bool has_grad(int32_t id) const { return nodes_[static_cast<size_t>(id)].grad.has_value(); }

  const Tensor<T>& grad(int32_t id) const {
    const Node<T>& n = nodes_[static_cast<size_t>(id)];
    if (!n.grad) throw Error(std::string("graph: no gradient on node of op '") + n.op + "'");
    return *n.grad;
  }

  Tensor<T> grad_or_zeros(int32_t id) const {
    const Node<T>& n = nodes_[static_cast<size_t>(id)];
    return n.grad ? *n.grad : Tensor<T>::zeros(n.value.shape());
  }

  void accum_grad(int32_t id, Tensor<T> g) {
    Node<T>& n = nodes_[static_cast<size_t>(id)];
    if (!g.same_shape(n.value)) {
      throw ShapeError(std::string("graph: gradient shape ") + shape_str(g.shape()) +
                       " does not match node '" + n.op + "' value " +
                       shape_str(n.value.shape()));
    }
    if (!n.grad) {
      n.grad = std::move(g);
    } else {
      nnops::be<T>().add(n.grad->data(), g.data(), n.grad->data(), g.numel());
    }
  }

  // Reverse sweep from loss (a scalar node). Disconnected parameters end up
  // with explicit zero gradients, never absent ones.
  void backward(Var<T> loss) {
    const Node<T>& ln = nodes_[static_cast<size_t>(loss.id)];
    if (ln.value.numel() != 1) {
      throw ShapeError(std::string("backward: loss node '") + ln.op +
                       "' is not scalar, shape " + shape_str(ln.value.shape()));
    }
    accum_grad(loss.id, Tensor<T>::full(ln.value.shape(), T(1)));
    visits_ = 0;
    for (int32_t id = loss.id; id >= 0; --id) {
      Node<T>& n = nodes_[static_cast<size_t>(id)];
      if (!n.grad || !n.backward || !n.needs_grad) continue;
      n.backward(*this, n);
      ++visits_;
    }
    for (auto& [p, id] : param_leaves_) {
      Node<T>& n = nodes_[static_cast<size_t>(id)];
      if (!n.grad) n.grad = Tensor<T>::zeros(n.value.shape());
    }
  }

  // Gradient map: parameter -> accumulated gradient for this graph.
  void accumulate_param_grads() {
    for (auto& [p, id] : param_leaves_) {
      const Node<T>& n = nodes_[static_cast<size_t>(id)];
      if (n.grad) {
        nnops::be<T>().add(p->grad.data(), n.grad->data(), p->grad.data(),
                           p->grad.numel());
      }
    }
  }

  const std::vector<std::pair<Parameter<T>*, int32_t>>& param_leaves() const {
    return param_leaves_;
  }

  size_t node_count() const { return nodes_.size(); }
  int64_t backward_visits() const { return visits_; }

 private:
  Var<T> append(const char* op, std::vector<int32_t> parents, Tensor<T> value,
                std::function<void(Graph<T>&, const Node<T>&)> backward,
                Parameter<T>* param, bool tracked) {
    if (!recording_) {
      throw Error(std::string("graph: cannot append '") + op +
                  "' to a graph in inference mode");
    }
    const int32_t id = static_cast<int32_t>(nodes_.size());
    bool needs = tracked;
    for (int32_t pid : parents) {
      if (pid < 0 || pid >= id) throw Error("graph: parent does not precede child");
      needs = needs || nodes_[static_cast<size_t>(pid)].needs_grad;
    }
    nodes_.push_back(Node<T>{op, std::move(parents), std::move(value),
                             std::nullopt, std::move(backward), param, needs});
    return {this, id};
  }

  std::vector<Node<T>> nodes_;
  std::unordered_map<Parameter<T>*, int32_t> param_ids_;
  std::vector<std::pair<Parameter<T>*, int32_t>> param_leaves_;
  bool recording_;
  int64_t visits_ = 0;
};

// ----------------------------------------------------------------- binary --

namespace detail {

enum class BinKind { equal, a_scalar, b_scalar };

inline BinKind binary_kind(const char* op, const Shape& a, const Shape& b) {
  if (a == b) return BinKind::equal;
  if (shape_numel(a) == 1 && a.empty()) return BinKind::a_scalar;
  if (shape_numel(b) == 1 && b.empty()) return BinKind::b_scalar;
  throw ShapeError(std::string(op) + ": shapes " + shape_str(a) + " and " +
                   shape_str(b) + " do not match (only rank-0 broadcast)");
}

template <class T>
Tensor<T> sum_to_scalar(const Tensor<T>& t) {
  return Tensor<T>::scalar(nnops::be<T>().sum(t.data(), t.numel()));
}

}  // namespace detail

template <class T>
Var<T> add(Var<T> a, Var<T> b) {
  Graph<T>& g = *a.g;
  const Tensor<T>&av = a.value(), &bv = b.value();
  const auto kind = detail::binary_kind("add", av.shape(), bv.shape());
  Tensor<T> y(kind == detail::BinKind::a_scalar ? bv.shape() : av.shape());
  if (kind == detail::BinKind::equal) {
    nnops::be<T>().add(av.data(), bv.data(), y.data(), y.numel());
  } else {
    const bool asc = kind == detail::BinKind::a_scalar;
    const T s = asc ? av[0] : bv[0];
    const Tensor<T>& full = asc ? bv : av;
    for (int64_t i = 0; i < y.numel(); ++i) y[i] = full[i] + s;
  }
  return g.apply("add", {a.id, b.id}, std::move(y),
                 [aid = a.id, bid = b.id, kind](Graph<T>& gg, const Node<T>& n) {
                   const Tensor<T>& dy = *n.grad;
                   if (kind == detail::BinKind::a_scalar) {
                     gg.accum_grad(aid, detail::sum_to_scalar(dy));
                   } else {
                     gg.accum_grad(aid, dy);
                   }
                   if (kind == detail::BinKind::b_scalar) {
                     gg.accum_grad(bid, detail::sum_to_scalar(dy));
                   } else {
                     gg.accum_grad(bid, dy);
                   }
                 });
}

template <class T>
Var<T> sub(Var<T> a, Var<T> b) {
  Graph<T>& g = *a.g;
  const Tensor<T>&av = a.value(), &bv = b.value();
  const auto kind = detail::binary_kind("sub", av.shape(), bv.shape());
  Tensor<T> y(kind == detail::BinKind::a_scalar ? bv.shape() : av.shape());
  if (kind == detail::BinKind::equal) {
    nnops::be<T>().sub(av.data(), bv.data(), y.data(), y.numel());
  } else if (kind == detail::BinKind::a_scalar) {
    const T s = av[0];
    for (int64_t i = 0; i < y.numel(); ++i) y[i] = s - bv[i];
  } else {
    const T s = bv[0];
    for (int64_t i = 0; i < y.numel(); ++i) y[i] = av[i] - s;
  }
  return g.apply("sub", {a.id, b.id}, std::move(y),
                 [aid = a.id, bid = b.id, kind](Graph<T>& gg, const Node<T>& n) {
                   const Tensor<T>& dy = *n.grad;
                   if (kind == detail::BinKind::a_scalar) {
                     gg.accum_grad(aid, detail::sum_to_scalar(dy));
                   } else {
                     gg.accum_grad(aid, dy);
                   }
                   Tensor<T> db(dy.shape());
                   nnops::be<T>().scale(T(-1), dy.data(), db.data(), dy.numel());
                   if (kind == detail::BinKind::b_scalar) {
                     gg.accum_grad(bid, detail::sum_to_scalar(db));
                   } else {
                     gg.accum_grad(bid, std::move(db));
                   }
                 });
}

template <class T>
Var<T> mul(Var<T> a, Var<T> b) {
  Graph<T>& g = *a.g;
  const Tensor<T>&av = a.value(), &bv = b.value();
  const auto kind = detail::binary_kind("mul", av.shape(), bv.shape());
  Tensor<T> y(kind == detail::BinKind::a_scalar ? bv.shape() : av.shape());
  if (kind == detail::BinKind::equal) {
    nnops::be<T>().mul(av.data(), bv.data(), y.data(), y.numel());
  } else {
    const bool asc = kind == detail::BinKind::a_scalar;
    const T s = asc ? av[0] : bv[0];
    const Tensor<T>& full = asc ? bv : av;
    nnops::be<T>().scale(s, full.data(), y.data(), y.numel());
  }
  return g.apply(
      "mul", {a.id, b.id}, std::move(y),
      [aid = a.id, bid = b.id, kind](Graph<T>& gg, const Node<T>& n) {
        const Tensor<T>& dy = *n.grad;
        const Tensor<T>&av = gg.value(aid), &bv = gg.value(bid);
        auto partial = [&](const Tensor<T>& other, bool to_scalar) {
          if (to_scalar) {
            return Tensor<T>::scalar(nnops::be<T>().dot(dy.data(), other.data(), dy.numel()));
          }
          Tensor<T> d(dy.shape());
          if (other.numel() == 1 && other.rank() == 0) {
            nnops::be<T>().scale(other[0], dy.data(), d.data(), dy.numel());
          } else {
            nnops::be<T>().mul(dy.data(), other.data(), d.data(), dy.numel());
          }
          return d;
        };
        gg.accum_grad(aid, partial(bv, kind == detail::BinKind::a_scalar));
        gg.accum_grad(bid, partial(av, kind == detail::BinKind::b_scalar));
      });
}

template <class T>
Var<T> div(Var<T> a, Var<T> b) {
  Graph<T>& g = *a.g;
  const Tensor<T>&av = a.value(), &bv = b.value();
  const auto kind = detail::binary_kind("div", av.shape(), bv.shape());
  for (int64_t i = 0; i < bv.numel(); ++i) {
    if (bv[i] == T(0)) {
      throw NumericError("div: zero divisor at index " + std::to_string(i));
    }
  }
  Tensor<T> y(kind == detail::BinKind::a_scalar ? bv.shape() : av.shape());
  if (kind == detail::BinKind::equal) {
    for (int64_t i = 0; i < y.numel(); ++i) y[i] = av[i] / bv[i];
  } else if (kind == detail::BinKind::a_scalar) {
    for (int64_t i = 0; i < y.numel(); ++i) y[i] = av[0] / bv[i];
  } else {
    for (int64_t i = 0; i < y.numel(); ++i) y[i] = av[i] / bv[0];
  }
  return g.apply(
      "div", {a.id, b.id}, std::move(y),
      [aid = a.id, bid = b.id, kind](Graph<T>& gg, const Node<T>& n) {
        const Tensor<T>& dy = *n.grad;
        const Tensor<T>& bv = gg.value(bid);
        const Tensor<T>& yv = n.value;  // y = a/b, so db = -dy*y/b needs no a
        auto bval = [&](int64_t i) { return kind == detail::BinKind::b_scalar ? bv[0] : bv[i]; };
        // da = dy / b
        if (kind == detail::BinKind::a_scalar) {
          T acc = T(0);
          for (int64_t i = 0; i < dy.numel(); ++i) acc += dy[i] / bval(i);
          gg.accum_grad(aid, Tensor<T>::scalar(acc));
        } else {
          Tensor<T> da(dy.shape());
          for (int64_t i = 0; i < dy.numel(); ++i) da[i] = dy[i] / bval(i);
          gg.accum_grad(aid, std::move(da));
        }
        // db = -dy * y / b   (y = a/b)
        if (kind == detail::BinKind::b_scalar) {
          T acc = T(0);
          for (int64_t i = 0; i < dy.numel(); ++i) acc -= dy[i] * yv[i] / bv[0];
          gg.accum_grad(bid, Tensor<T>::scalar(acc));
        } else {
          Tensor<T> db(dy.shape());
          for (int64_t i = 0; i < dy.numel(); ++i) db[i] = -dy[i] * yv[i] / bval(i);
          gg.accum_grad(bid, std::move(db));
        }
      });
}

// ------------------------------------------------------------------ unary --

template <class T>
Var<T> neg(Var<T> x) {
  Graph<T>& g = *x.g;
  Tensor<T> y(x.value().shape());
  nnops::be<T>().scale(T(-1), x.value().data(), y.data(), y.numel());
  return g.apply("neg", {x.id}, std::move(y),
                 [xid = x.id](Graph<T>& gg, const Node<T>& n) {
                   Tensor<T> dx(n.grad->shape());
                   nnops::be<T>().scale(T(-1), n.grad->data(), dx.data(), dx.numel());
                   gg.accum_grad(xid, std::move(dx));
                 });
}

template <class T>
Var<T> exp(Var<T> x) {
  Graph<T>& g = *x.g;
  return g.apply("exp", {x.id}, nnops::exp_value(x.value()),
                 [xid = x.id](Graph<T>& gg, const Node<T>& n) {
                   Tensor<T> dx(n.grad->shape());
                   nnops::be<T>().mul(n.grad->data(), n.value.data(), dx.data(), dx.numel());
                   gg.accum_grad(xid, std::move(dx));
                 });
}

template <class T>
Var<T> log(Var<T> x) {
  Graph<T>& g = *x.g;
  return g.apply("log", {x.id}, nnops::log_value(x.value()),
                 [xid = x.id](Graph<T>& gg, const Node<T>& n) {
                   const Tensor<T>& xv = gg.value(xid);
                   Tensor<T> dx(n.grad->shape());
                   for (int64_t i = 0; i < dx.numel(); ++i) dx[i] = (*n.grad)[i] / xv[i];
                   gg.accum_grad(xid, std::move(dx));
                 });
}

template <class T>
Var<T> relu(Var<T> x) {
  Graph<T>& g = *x.g;
  return g.apply("relu", {x.id}, nnops::relu_value(x.value()),
                 [xid = x.id](Graph<T>& gg, const Node<T>& n) {
                   const Tensor<T>& xv = gg.value(xid);
                   Tensor<T> dx = Tensor<T>::zeros(xv.shape());
                   nnops::be<T>().relu_bwd(xv.data(), n.grad->data(), dx.data(), dx.numel());
                   gg.accum_grad(xid, std::move(dx));
                 });
}

template <class T>
Var<T> sigmoid(Var<T> x) {
  Graph<T>& g = *x.g;
  return g.apply("sigmoid", {x.id}, nnops::sigmoid_value(x.value()),
                 [xid = x.id](Graph<T>& gg, const Node<T>& n) {
                   const Tensor<T>& s = n.value;
                   Tensor<T> dx(s.shape());
                   for (int64_t i = 0; i < dx.numel(); ++i) {
                     dx[i] = (*n.grad)[i] * s[i] * (T(1) - s[i]);
                   }
                   gg.accum_grad(xid, std::move(dx));
                 });
}

// Subgradient: identity inside [lo, hi], zero outside.
template <class T>
Var<T> clamp(Var<T> x, T lo, T hi) {
  Graph<T>& g = *x.g;
  return g.apply("clamp", {x.id}, nnops::clamp_value(x.value(), lo, hi),
                 [xid = x.id, lo, hi](Graph<T>& gg, const Node<T>& n) {
                   const Tensor<T>& xv = gg.value(xid);
                   Tensor<T> dx(xv.shape());
                   for (int64_t i = 0; i < dx.numel(); ++i) {
                     dx[i] = (xv[i] >= lo && xv[i] <= hi) ? (*n.grad)[i] : T(0);
                   }
                   gg.accum_grad(xid, std::move(dx));
                 });
}

template <class T>
Var<T> add_const(Var<T> x, T c) {
  Graph<T>& g = *x.g;
  Tensor<T> y(x.value().shape());
  for (int64_t i = 0; i < y.numel(); ++i) y[i] = x.value()[i] + c;
  return g.apply("add_const", {x.id}, std::move(y),
                 [xid = x.id](Graph<T>& gg, const Node<T>& n) {
                   gg.accum_grad(xid, *n.grad);
                 });
}

template <class T>
Var<T> mul_const(Var<T> x, T c) {
  Graph<T>& g = *x.g;
  Tensor<T> y(x.value().shape());
  nnops::be<T>().scale(c, x.value().data(), y.data(), y.numel());
  return g.apply("mul_const", {x.id}, std::move(y),
                 [xid = x.id, c](Graph<T>& gg, const Node<T>& n) {
                   Tensor<T> dx(n.grad->shape());
                   nnops::be<T>().scale(c, n.grad->data(), dx.data(), dx.numel());
                   gg.accum_grad(xid, std::move(dx));
                 });
}

// ----------------------------------------------------------------- linalg --

template <class T>
Var<T> matmul(Var<T> a, Var<T> b) {
  Graph<T>& g = *a.g;
  const Tensor<T>&av = a.value(), &bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0)) {
    throw ShapeError("matmul: " + shape_str(av.shape()) + " x " +
                     shape_str(bv.shape()) + " inner dimensions differ");
  }
  const int64_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  Tensor<T> y({m, n});
  nnops::be<T>().gemm_nn(av.data(), bv.data(), y.data(), m, n, k, false);
  return g.apply("matmul", {a.id, b.id}, std::move(y),
                 [aid = a.id, bid = b.id, m, k, n](Graph<T>& gg, const Node<T>& nd) {
                   const Tensor<T>& dy = *nd.grad;
                   const Tensor<T>&av = gg.value(aid), &bv = gg.value(bid);
                   if (gg.needs_grad(aid)) {
                     Tensor<T> da({m, k});
                     nnops::be<T>().gemm_nt(dy.data(), bv.data(), da.data(), m, k, n, false);
                     gg.accum_grad(aid, std::move(da));
                   }
                   if (gg.needs_grad(bid)) {
                     Tensor<T> db({k, n});
                     nnops::be<T>().gemm_tn(av.data(), dy.data(), db.data(), k, n, m, false);
                     gg.accum_grad(bid, std::move(db));
                   }
                 });
}

template <class T>
Var<T> dense(Var<T> x, Var<T> w, Var<T> b) {
  Graph<T>& g = *x.g;
  return g.apply("dense", {x.id, w.id, b.id},
                 nnops::dense_value(x.value(), w.value(), b.value()),
                 [xid = x.id, wid = w.id, bid = b.id](Graph<T>& gg, const Node<T>& n) {
                   const Tensor<T>&xv = gg.value(xid), &wv = gg.value(wid);
                   Tensor<T> dx = Tensor<T>::zeros(xv.shape());
                   Tensor<T> dw = Tensor<T>::zeros(wv.shape());
                   Tensor<T> db = Tensor<T>::zeros(gg.value(bid).shape());
                   nnops::dense_backward(xv, wv, *n.grad,
                                         gg.needs_grad(xid) ? &dx : nullptr,
                                         gg.needs_grad(wid) ? &dw : nullptr,
                                         gg.needs_grad(bid) ? &db : nullptr);
                   if (gg.needs_grad(xid)) gg.accum_grad(xid, std::move(dx));
                   if (gg.needs_grad(wid)) gg.accum_grad(wid, std::move(dw));
                   if (gg.needs_grad(bid)) gg.accum_grad(bid, std::move(db));
                 });
}

template <class T>
Var<T> conv2d(Var<T> x, Var<T> w, Var<T> b, int64_t stride, int64_t pad,
              const std::string& name = "conv2d") {
  Graph<T>& g = *x.g;
  return g.apply("conv2d", {x.id, w.id, b.id},
                 nnops::conv2d_value(x.value(), w.value(), b.value(), stride, pad, name),
                 [xid = x.id, wid = w.id, bid = b.id, stride, pad](Graph<T>& gg,
                                                                   const Node<T>& n) {
                   const Tensor<T>&xv = gg.value(xid), &wv = gg.value(wid);
                   Tensor<T> dx = Tensor<T>::zeros(xv.shape());
                   Tensor<T> dw = Tensor<T>::zeros(wv.shape());
                   Tensor<T> db = Tensor<T>::zeros(gg.value(bid).shape());
                   nnops::conv2d_backward(xv, wv, *n.grad, stride, pad,
                                          gg.needs_grad(xid) ? &dx : nullptr,
                                          gg.needs_grad(wid) ? &dw : nullptr,
                                          gg.needs_grad(bid) ? &db : nullptr);
                   if (gg.needs_grad(xid)) gg.accum_grad(xid, std::move(dx));
                   if (gg.needs_grad(wid)) gg.accum_grad(wid, std::move(dw));
                   if (gg.needs_grad(bid)) gg.accum_grad(bid, std::move(db));
                 });
}

template <class T>
Var<T> concat_channels(const std::vector<Var<T>>& parts) {
  Graph<T>& g = *parts[0].g;
  std::vector<const Tensor<T>*> vals;
  std::vector<int32_t> ids;
  for (const Var<T>& p : parts) {
    vals.push_back(&p.value());
    ids.push_back(p.id);
  }
  Tensor<T> y = nnops::concat_channels_value(vals);
  return g.apply("concat", std::vector<int32_t>(ids), std::move(y),
                 [ids](Graph<T>& gg, const Node<T>& n) {
                   const Tensor<T>& dy = *n.grad;
                   const int64_t batch = dy.dim(0), h = dy.dim(2), w = dy.dim(3);
                   const int64_t plane = h * w, ctotal = dy.dim(1);
                   int64_t offset = 0;
                   for (int32_t pid : ids) {
                     const int64_t ci = gg.value(pid).dim(1);
                     Tensor<T> dpart({batch, ci, h, w});
                     for (int64_t img = 0; img < batch; ++img) {
                       const T* src = dy.data() + (img * ctotal + offset) * plane;
                       std::copy_n(src, ci * plane, dpart.data() + img * ci * plane);
                     }
                     gg.accum_grad(pid, std::move(dpart));
                     offset += ci;
                   }
                 });
}

template <class T>
Var<T> resize_nearest(Var<T> x, int64_t oh, int64_t ow) {
  Graph<T>& g = *x.g;
  const int64_t h = x.value().dim(2), w = x.value().dim(3);
  return g.apply("resize_nearest", {x.id},
                 nnops::resize_nearest_value(x.value(), oh, ow),
                 [xid = x.id, h, w](Graph<T>& gg, const Node<T>& n) {
                   Tensor<T> dx = Tensor<T>::zeros(gg.value(xid).shape());
                   nnops::resize_nearest_backward(*n.grad, h, w, &dx);
                   gg.accum_grad(xid, std::move(dx));
                 });
}

template <class T>
Var<T> reshape(Var<T> x, Shape shape) {
  Graph<T>& g = *x.g;
  const Shape orig = x.value().shape();
  return g.apply("reshape", {x.id}, x.value().reshaped(std::move(shape)),
                 [xid = x.id, orig](Graph<T>& gg, const Node<T>& n) {
                   gg.accum_grad(xid, n.grad->reshaped(orig));
                 });
}

// Axes may be empty to reduce over everything (rank-0 result).
template <class T>
Var<T> reduce_sum(Var<T> x, std::vector<int> axes = {}) {
  Graph<T>& g = *x.g;
  const Shape in_shape = x.value().shape();
  return g.apply("reduce_sum", {x.id}, nnops::reduce_sum_value(x.value(), axes),
                 [xid = x.id, in_shape, axes](Graph<T>& gg, const Node<T>& n) {
                   gg.accum_grad(xid, nnops::reduce_broadcast_back(*n.grad, in_shape,
                                                                   axes, T(1)));
                 });
}

template <class T>
Var<T> reduce_mean(Var<T> x, std::vector<int> axes = {}) {
  Graph<T>& g = *x.g;
  const Shape in_shape = x.value().shape();
  Tensor<T> sum = nnops::reduce_sum_value(x.value(), axes);
  const T inv = static_cast<T>(sum.numel()) / static_cast<T>(x.value().numel());
  Tensor<T> y(sum.shape());
  nnops::be<T>().scale(inv, sum.data(), y.data(), y.numel());
  return g.apply("reduce_mean", {x.id}, std::move(y),
                 [xid = x.id, in_shape, axes, inv](Graph<T>& gg, const Node<T>& n) {
                   gg.accum_grad(xid, nnops::reduce_broadcast_back(*n.grad, in_shape,
                                                                   axes, inv));
                 });
}

template <class T>
Var<T> cross_entropy(Var<T> logits, std::vector<int32_t> labels) {
  Graph<T>& g = *logits.g;
  auto [loss, probs] = nnops::softmax_ce_value(logits.value(), labels);
  return g.apply(
      "cross_entropy", {logits.id}, Tensor<T>::scalar(loss),
      [lid = logits.id, labels = std::move(labels),
       probs = std::move(probs)](Graph<T>& gg, const Node<T>& n) {
        const T gscale = (*n.grad)[0] / static_cast<T>(probs.dim(0));
        Tensor<T> dl(probs.shape());
        const int64_t classes = probs.dim(1);
        for (int64_t i = 0; i < probs.dim(0); ++i) {
          for (int64_t c = 0; c < classes; ++c) {
            const T onehot = (c == labels[static_cast<size_t>(i)]) ? T(1) : T(0);
            dl[i * classes + c] = gscale * (probs[i * classes + c] - onehot);
          }
        }
        gg.accum_grad(lid, std::move(dl));
      });
}

template <class T> Var<T> operator+(Var<T> a, Var<T> b) { return add(a, b); }
template <class T> Var<T> operator-(Var<T> a, Var<T> b) { return sub(a, b); }
template <class T> Var<T> operator*(Var<T> a, Var<T> b) { return mul(a, b); }
template <class T> Var<T> operator/(Var<T> a, Var<T> b) { return div(a, b); }
template <class T> Var<T> operator-(Var<T> x) { return neg(x); }

}  // namespace smallvae::ag
