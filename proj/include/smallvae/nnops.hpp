// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "smallvae/kernels.hpp"
#include "smallvae/tensor.hpp"
#include "smallvae/threads.hpp"

// Pure value-level forward/backward cores. The autodiff ops in graph.hpp and
// the tape-free inference paths both call these, so recorded and inference
// forwards are bit-identical by construction.
namespace smallvae::nnops {

template <class T>
const kernels::Backend<T>& be() {
  return kernels::active_backend<T>();
}

// ------------------------------------------------------------ elementwise --

template <class T>
Tensor<T> exp_value(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) {
    y[i] = std::exp(x[i]);
    if (!std::isfinite(y[i])) {
      throw NumericError("exp: non-finite result at index " + std::to_string(i) +
                         " (input=" + std::to_string(static_cast<double>(x[i])) + ")");
    }
  }
  return y;
}

template <class T>
Tensor<T> log_value(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) {
    if (!(x[i] > T(0))) {
      throw NumericError("log: non-positive input at index " + std::to_string(i) +
                         " (value=" + std::to_string(static_cast<double>(x[i])) + ")");
    }
    y[i] = std::log(x[i]);
  }
  return y;
}

template <class T>
Tensor<T> relu_value(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  be<T>().relu_fwd(x.data(), y.data(), x.numel());
  return y;
}

// Branching form keeps exp() arguments non-positive for any input magnitude.
template <class T>
Tensor<T> sigmoid_value(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) {
    const T v = x[i];
    if (v >= T(0)) {
      y[i] = T(1) / (T(1) + std::exp(-v));
    } else {
      const T e = std::exp(v);
      y[i] = e / (T(1) + e);
    }
  }
  return y;
}

template <class T>
Tensor<T> clamp_value(const Tensor<T>& x, T lo, T hi) {
  Tensor<T> y(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) y[i] = std::min(hi, std::max(lo, x[i]));
  return y;
}

// ------------------------------------------------------------- reductions --

inline void check_axes(const Shape& shape, const std::vector<int>& axes) {
  std::vector<int> seen;
  for (int a : axes) {
    if (a < 0 || a >= static_cast<int>(shape.size())) {
      throw ShapeError("reduce: axis " + std::to_string(a) +
                       " invalid for shape " + shape_str(shape));
    }
    if (std::find(seen.begin(), seen.end(), a) != seen.end()) {
      throw ShapeError("reduce: duplicate axis " + std::to_string(a));
    }
    seen.push_back(a);
  }
}

inline Shape reduced_shape(const Shape& shape, const std::vector<int>& axes) {
  Shape out;
  for (size_t i = 0; i < shape.size(); ++i) {
    if (std::find(axes.begin(), axes.end(), static_cast<int>(i)) == axes.end()) {
      out.push_back(shape[i]);
    }
  }
  return out;  // all axes reduced -> rank-0 scalar
}

// Maps each input flat index to its output flat index under the reduction.
template <class T>
Tensor<T> reduce_sum_value(const Tensor<T>& x, const std::vector<int>& axes) {
  check_axes(x.shape(), axes);
  if (axes.empty() || axes.size() == x.shape().size()) {
    return Tensor<T>::scalar(be<T>().sum(x.data(), x.numel()));
  }
  const Shape& in = x.shape();
  const size_t r = in.size();
  std::vector<int64_t> in_strides(r, 1);
  for (size_t i = r - 1; i > 0; --i) in_strides[i - 1] = in_strides[i] * in[i];
  Shape out_shape = reduced_shape(in, axes);
  Tensor<T> out(out_shape);
  // stride of each input dim in the output (0 when reduced)
  std::vector<int64_t> out_strides(r, 0);
  {
    int64_t stride = 1;
    for (size_t i = r; i-- > 0;) {
      if (std::find(axes.begin(), axes.end(), static_cast<int>(i)) == axes.end()) {
        out_strides[i] = stride;
        stride *= in[i];
      }
    }
  }
  for (int64_t flat = 0; flat < x.numel(); ++flat) {
    int64_t rem = flat, oflat = 0;
    for (size_t i = 0; i < r; ++i) {
      const int64_t coord = rem / in_strides[i];
      rem -= coord * in_strides[i];
      oflat += coord * out_strides[i];
    }
    out[oflat] += x[flat];
  }
  return out;
}

template <class T>
Tensor<T> reduce_broadcast_back(const Tensor<T>& dy, const Shape& in_shape,
                                const std::vector<int>& axes, T scale) {
  Tensor<T> dx(in_shape);
  if (axes.empty() || axes.size() == in_shape.size()) {
    const T g = dy[0] * scale;
    for (int64_t i = 0; i < dx.numel(); ++i) dx[i] = g;
    return dx;
  }
  const size_t r = in_shape.size();
  std::vector<int64_t> in_strides(r, 1);
  for (size_t i = r - 1; i > 0; --i) in_strides[i - 1] = in_strides[i] * in_shape[i];
  std::vector<int64_t> out_strides(r, 0);
  {
    int64_t stride = 1;
    for (size_t i = r; i-- > 0;) {
      if (std::find(axes.begin(), axes.end(), static_cast<int>(i)) == axes.end()) {
        out_strides[i] = stride;
        stride *= in_shape[i];
      }
    }
  }
  for (int64_t flat = 0; flat < dx.numel(); ++flat) {
    int64_t rem = flat, oflat = 0;
    for (size_t i = 0; i < r; ++i) {
      const int64_t coord = rem / in_strides[i];
      rem -= coord * in_strides[i];
      oflat += coord * out_strides[i];
    }
    dx[flat] = dy[oflat] * scale;
  }
  return dx;
}

// ------------------------------------------------------------------ dense --

template <class T>
Tensor<T> dense_value(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  const int64_t batch = x.dim(0), in = x.dim(1), out = w.dim(0);
  if (w.dim(1) != in) {
    throw ShapeError("dense: input width " + std::to_string(in) +
                     " does not match weight " + shape_str(w.shape()));
  }
  Tensor<T> y({batch, out});
  be<T>().gemm_nt(x.data(), w.data(), y.data(), batch, out, in, false);
  for (int64_t i = 0; i < batch; ++i) {
    be<T>().add(y.data() + i * out, b.data(), y.data() + i * out, out);
  }
  return y;
}

template <class T>
void dense_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dy,
                    Tensor<T>* dx, Tensor<T>* dw, Tensor<T>* db) {
  const int64_t batch = x.dim(0), in = x.dim(1), out = w.dim(0);
  if (dx) be<T>().gemm_nn(dy.data(), w.data(), dx->data(), batch, in, out, true);
  if (dw) be<T>().gemm_tn(dy.data(), x.data(), dw->data(), out, in, batch, true);
  if (db) {
    for (int64_t i = 0; i < batch; ++i) {
      be<T>().add(db->data(), dy.data() + i * out, db->data(), out);
    }
  }
}

// ----------------------------------------------------------------- conv2d --

inline int64_t conv_out_dim(int64_t in, int64_t k, int64_t stride, int64_t pad) {
  return (in + 2 * pad - k) / stride + 1;
}

namespace detail {

template <class T>
void im2col(const T* img, int64_t ci, int64_t h, int64_t w, int64_t kh,
            int64_t kw, int64_t stride, int64_t pad, int64_t oh, int64_t ow,
            T* col) {
  const int64_t patch = oh * ow;
  for (int64_t c = 0; c < ci; ++c) {
    const T* plane = img + c * h * w;
    for (int64_t ki = 0; ki < kh; ++ki) {
      for (int64_t kj = 0; kj < kw; ++kj) {
        T* crow = col + ((c * kh + ki) * kw + kj) * patch;
        for (int64_t y = 0; y < oh; ++y) {
          const int64_t sy = y * stride + ki - pad;
          if (sy < 0 || sy >= h) {
            for (int64_t x = 0; x < ow; ++x) crow[y * ow + x] = T(0);
            continue;
          }
          const T* srow = plane + sy * w;
          for (int64_t x = 0; x < ow; ++x) {
            const int64_t sx = x * stride + kj - pad;
            crow[y * ow + x] = (sx >= 0 && sx < w) ? srow[sx] : T(0);
          }
        }
      }
    }
  }
}

template <class T>
void col2im_add(const T* col, int64_t ci, int64_t h, int64_t w, int64_t kh,
                int64_t kw, int64_t stride, int64_t pad, int64_t oh, int64_t ow,
                T* img) {
  const int64_t patch = oh * ow;
  for (int64_t c = 0; c < ci; ++c) {
    T* plane = img + c * h * w;
    for (int64_t ki = 0; ki < kh; ++ki) {
      for (int64_t kj = 0; kj < kw; ++kj) {
        const T* crow = col + ((c * kh + ki) * kw + kj) * patch;
        for (int64_t y = 0; y < oh; ++y) {
          const int64_t sy = y * stride + ki - pad;
          if (sy < 0 || sy >= h) continue;
          T* srow = plane + sy * w;
          for (int64_t x = 0; x < ow; ++x) {
            const int64_t sx = x * stride + kj - pad;
            if (sx >= 0 && sx < w) srow[sx] += crow[y * ow + x];
          }
        }
      }
    }
  }
}

}  // namespace detail

// Cross-correlation plus bias, one im2col+gemm per image, images in parallel.
template <class T>
Tensor<T> conv2d_value(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                       int64_t stride, int64_t pad,
                       const std::string& layer_name = "conv2d") {
  if (x.rank() != 4 || w.rank() != 4 || x.dim(1) != w.dim(1)) {
    throw ShapeError(layer_name + ": input " + shape_str(x.shape()) +
                     " incompatible with weight " + shape_str(w.shape()));
  }
  const int64_t batch = x.dim(0), ci = x.dim(1), h = x.dim(2), win = x.dim(3);
  const int64_t co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const int64_t oh = conv_out_dim(h, kh, stride, pad);
  const int64_t ow = conv_out_dim(win, kw, stride, pad);
  if (oh < 1 || ow < 1) {
    throw ShapeError(layer_name + ": kernel " + std::to_string(kh) + "x" +
                     std::to_string(kw) + " exceeds padded input " +
                     shape_str(x.shape()));
  }
  const int64_t kdim = ci * kh * kw, patch = oh * ow;
  Tensor<T> y({batch, co, oh, ow});
  parallel_for(batch, [&](int64_t begin, int64_t end) {
    std::vector<T> col(static_cast<size_t>(kdim * patch));
    for (int64_t img = begin; img < end; ++img) {
      detail::im2col(x.data() + img * ci * h * win, ci, h, win, kh, kw, stride,
                     pad, oh, ow, col.data());
      T* yimg = y.data() + img * co * patch;
      be<T>().gemm_nn(w.data(), col.data(), yimg, co, patch, kdim, false);
      for (int64_t oc = 0; oc < co; ++oc) {
        const T bias = b[oc];
        T* row = yimg + oc * patch;
        for (int64_t p = 0; p < patch; ++p) row[p] += bias;
      }
    }
  });
  return y;
}

// Gradients accumulate into the provided buffers. Per-image weight partials
// are reduced in image order after the parallel section, so results do not
// depend on the worker count.
template <class T>
void conv2d_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dy,
                     int64_t stride, int64_t pad, Tensor<T>* dx, Tensor<T>* dw,
                     Tensor<T>* db) {
  const int64_t batch = x.dim(0), ci = x.dim(1), h = x.dim(2), win = x.dim(3);
  const int64_t co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const int64_t oh = dy.dim(2), ow = dy.dim(3);
  const int64_t kdim = ci * kh * kw, patch = oh * ow;

  std::vector<T> dw_parts;
  if (dw) dw_parts.assign(static_cast<size_t>(batch * co * kdim), T(0));

  parallel_for(batch, [&](int64_t begin, int64_t end) {
    std::vector<T> col(static_cast<size_t>(kdim * patch));
    std::vector<T> dcol(dx ? static_cast<size_t>(kdim * patch) : 0);
    for (int64_t img = begin; img < end; ++img) {
      const T* dyimg = dy.data() + img * co * patch;
      if (dw) {
        detail::im2col(x.data() + img * ci * h * win, ci, h, win, kh, kw,
                       stride, pad, oh, ow, col.data());
        be<T>().gemm_nt(dyimg, col.data(), dw_parts.data() + img * co * kdim,
                        co, kdim, patch, false);
      }
      if (dx) {
        be<T>().gemm_tn(w.data(), dyimg, dcol.data(), kdim, patch, co, false);
        detail::col2im_add(dcol.data(), ci, h, win, kh, kw, stride, pad, oh, ow,
                           dx->data() + img * ci * h * win);
      }
    }
  });
  if (dw) {
    for (int64_t img = 0; img < batch; ++img) {
      be<T>().add(dw->data(), dw_parts.data() + img * co * kdim, dw->data(),
                  co * kdim);
    }
  }
  if (db) {
    for (int64_t img = 0; img < batch; ++img) {
      for (int64_t oc = 0; oc < co; ++oc) {
        const T* row = dy.data() + (img * co + oc) * patch;
        T acc = T(0);
        for (int64_t p = 0; p < patch; ++p) acc += row[p];
        (*db)[oc] += acc;
      }
    }
  }
}

// --------------------------------------------------------- resize nearest --

template <class T>
Tensor<T> resize_nearest_value(const Tensor<T>& x, int64_t oh, int64_t ow) {
  if (oh < 1 || ow < 1) {
    throw ShapeError("resize_nearest: target must be at least 1x1");
  }
  const int64_t batch = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor<T> y({batch, c, oh, ow});
  for (int64_t bc = 0; bc < batch * c; ++bc) {
    const T* src = x.data() + bc * h * w;
    T* dst = y.data() + bc * oh * ow;
    for (int64_t i = 0; i < oh; ++i) {
      const int64_t si = i * h / oh;  // src = floor(dst * H / H')
      for (int64_t j = 0; j < ow; ++j) {
        dst[i * ow + j] = src[si * w + j * w / ow];
      }
    }
  }
  return y;
}

template <class T>
void resize_nearest_backward(const Tensor<T>& dy, int64_t h, int64_t w,
                             Tensor<T>* dx) {
  const int64_t batch = dy.dim(0), c = dy.dim(1), oh = dy.dim(2), ow = dy.dim(3);
  for (int64_t bc = 0; bc < batch * c; ++bc) {
    const T* g = dy.data() + bc * oh * ow;
    T* out = dx->data() + bc * h * w;
    for (int64_t i = 0; i < oh; ++i) {
      const int64_t si = i * h / oh;
      for (int64_t j = 0; j < ow; ++j) {
        out[si * w + j * w / ow] += g[i * ow + j];
      }
    }
  }
}

// ------------------------------------------------------------------ concat --

template <class T>
Tensor<T> concat_channels_value(const std::vector<const Tensor<T>*>& parts) {
  const int64_t batch = parts[0]->dim(0), h = parts[0]->dim(2), w = parts[0]->dim(3);
  int64_t ctotal = 0;
  for (const Tensor<T>* p : parts) {
    if (p->rank() != 4 || p->dim(0) != batch || p->dim(2) != h || p->dim(3) != w) {
      throw ShapeError("concat_channels: mismatched part " + shape_str(p->shape()));
    }
    ctotal += p->dim(1);
  }
  Tensor<T> y({batch, ctotal, h, w});
  const int64_t plane = h * w;
  for (int64_t img = 0; img < batch; ++img) {
    T* dst = y.data() + img * ctotal * plane;
    for (const Tensor<T>* p : parts) {
      const int64_t span = p->dim(1) * plane;
      std::copy_n(p->data() + img * span, span, dst);
      dst += span;
    }
  }
  return y;
}

// ---------------------------------------------------------- cross entropy --

// Mean over the batch of -log softmax(logits)[label], log-sum-exp form.
// Returns the loss and the softmax matrix for the backward pass.
template <class T>
std::pair<T, Tensor<T>> softmax_ce_value(const Tensor<T>& logits,
                                         const std::vector<int32_t>& labels) {
  const int64_t batch = logits.dim(0), classes = logits.dim(1);
  if (static_cast<int64_t>(labels.size()) != batch) {
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) +
                     " labels for batch " + std::to_string(batch));
  }
  Tensor<T> probs({batch, classes});
  T loss = T(0);
  for (int64_t i = 0; i < batch; ++i) {
    const int32_t label = labels[static_cast<size_t>(i)];
    if (label < 0 || label >= classes) {
      throw DataError("cross_entropy: label " + std::to_string(label) +
                      " out of range [0," + std::to_string(classes - 1) + "]");
    }
    const T* row = logits.data() + i * classes;
    T mx = row[0];
    for (int64_t c = 1; c < classes; ++c) mx = std::max(mx, row[c]);
    T denom = T(0);
    for (int64_t c = 0; c < classes; ++c) denom += std::exp(row[c] - mx);
    const T lse = mx + std::log(denom);
    loss += lse - row[label];
    T* prow = probs.data() + i * classes;
    for (int64_t c = 0; c < classes; ++c) prow[c] = std::exp(row[c] - lse);
  }
  return {loss / static_cast<T>(batch), std::move(probs)};
}

}  // namespace smallvae::nnops
