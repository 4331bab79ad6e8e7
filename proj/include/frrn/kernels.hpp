#pragma once

// Forward and backward kernels for the differentiable op set. Backward
// kernels accumulate (+=) into gradient buffers so that a value consumed by
// several ops can collect its gradient from each of them in a fixed order.
//
// Reduction order is fixed for a given shape: convolutions are lowered to
// im2col + a single-threaded Eigen GEMM per image (images in batch order),
// channel statistics are accumulated in double in NCHW order.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "frrn/tensor.hpp"

namespace frrn::kernels {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

// ---------------------------------------------------------------- conv2d

struct ConvGeometry {
  int in_c, in_h, in_w;
  int out_c, out_h, out_w;
  int k, stride, pad;

  int patch() const { return in_c * k * k; }
  int out_plane() const { return out_h * out_w; }
  bool is_pointwise() const { return k == 1 && stride == 1 && pad == 0; }
};

inline ConvGeometry conv_geometry(const Shape& x, const Shape& w, int stride, int pad) {
  if (w.c != x.c) {
    throw ShapeError("conv2d: weight expects " + std::to_string(w.c) + " input channels, input " +
                     x.str() + " has " + std::to_string(x.c));
  }
  if (w.h != w.w) throw ShapeError("conv2d: only square kernels are supported, got " + w.str());
  if (stride < 1 || pad < 0) throw ShapeError("conv2d: stride must be >= 1 and pad >= 0");
  ConvGeometry g{x.c, x.h, x.w, w.n, 0, 0, w.h, stride, pad};
  const int span_h = x.h + 2 * pad - w.h;
  const int span_w = x.w + 2 * pad - w.w;
  if (span_h < 0 || span_w < 0) {
    throw ShapeError("conv2d: kernel " + w.str() + " larger than padded input " + x.str());
  }
  g.out_h = span_h / stride + 1;
  g.out_w = span_w / stride + 1;
  return g;
}

/// Valid output columns [lo, hi) for kernel column kx (input index inside the image).
inline std::pair<int, int> valid_columns(const ConvGeometry& g, int kx) {
  // ix = ox * stride - pad + kx must satisfy 0 <= ix < in_w
  const int off = kx - g.pad;
  int lo = off >= 0 ? 0 : (-off + g.stride - 1) / g.stride;
  int hi = g.in_w - off <= 0 ? 0 : (g.in_w - off + g.stride - 1) / g.stride;
  lo = std::min(lo, g.out_w);
  hi = std::clamp(hi, lo, g.out_w);
  return {lo, hi};
}

template <typename T>
void im2col(const T* src, const ConvGeometry& g, T* col) {
  const int k = g.k;
  for (int ci = 0; ci < g.in_c; ++ci) {
    const T* plane = src + static_cast<std::size_t>(ci) * g.in_h * g.in_w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* row = col + (static_cast<std::size_t>(ci * k + ky) * k + kx) * g.out_plane();
        const auto [lo, hi] = valid_columns(g, kx);
        const int off = kx - g.pad;
        for (int oy = 0; oy < g.out_h; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          T* dst = row + static_cast<std::size_t>(oy) * g.out_w;
          if (iy < 0 || iy >= g.in_h) {
            std::fill(dst, dst + g.out_w, T(0));
            continue;
          }
          const T* srow = plane + static_cast<std::size_t>(iy) * g.in_w;
          std::fill(dst, dst + lo, T(0));
          if (g.stride == 1) {
            std::copy(srow + lo + off, srow + hi + off, dst + lo);
          } else {
            for (int ox = lo; ox < hi; ++ox) dst[ox] = srow[ox * g.stride + off];
          }
          std::fill(dst + hi, dst + g.out_w, T(0));
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, const ConvGeometry& g, T* dst) {
  const int k = g.k;
  for (int ci = 0; ci < g.in_c; ++ci) {
    T* plane = dst + static_cast<std::size_t>(ci) * g.in_h * g.in_w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* row = col + (static_cast<std::size_t>(ci * k + ky) * k + kx) * g.out_plane();
        const auto [lo, hi] = valid_columns(g, kx);
        const int off = kx - g.pad;
        for (int oy = 0; oy < g.out_h; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.in_h) continue;
          T* drow = plane + static_cast<std::size_t>(iy) * g.in_w;
          const T* srow = row + static_cast<std::size_t>(oy) * g.out_w;
          if (g.stride == 1) {
            T* d = drow + off;
            for (int ox = lo; ox < hi; ++ox) d[ox] += srow[ox];
          } else {
            for (int ox = lo; ox < hi; ++ox) drow[ox * g.stride + off] += srow[ox];
          }
        }
      }
    }
  }
}

/// Per-thread im2col buffer, grown on demand and never zero-filled.
template <typename T>
T* scratch(std::size_t n) {
  thread_local std::vector<T> buf;
  if (buf.size() < n) buf.resize(n);
  return buf.data();
}

/// weight: [Cout, Cin, k, k]; bias: nullptr or [1, Cout, 1, 1].
template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>* bias,
                         int stride, int pad) {
  const ConvGeometry g = conv_geometry(x.shape(), weight.shape(), stride, pad);
  if (bias != nullptr && bias->size() != static_cast<std::size_t>(g.out_c)) {
    throw ShapeError("conv2d: bias " + bias->shape().str() + " does not match " +
                     std::to_string(g.out_c) + " output channels");
  }
  const int n = x.shape().n;
  Tensor<T> y(Shape{n, g.out_c, g.out_h, g.out_w});
  ConstMatMap<T> wm(weight.data(), g.out_c, g.patch());
  T* col = g.is_pointwise() ? nullptr : scratch<T>(static_cast<std::size_t>(g.patch()) * g.out_plane());
  for (int b = 0; b < n; ++b) {
    const T* src = x.plane(b, 0);
    MatMap<T> ym(y.plane(b, 0), g.out_c, g.out_plane());
    if (g.is_pointwise()) {
      ym.noalias() = wm * ConstMatMap<T>(src, g.in_c, g.out_plane());
    } else {
      im2col(src, g, col);
      ym.noalias() = wm * ConstMatMap<T>(col, g.patch(), g.out_plane());
    }
    if (bias != nullptr) {
      for (int c = 0; c < g.out_c; ++c) ym.row(c).array() += (*bias)[c];
    }
  }
  return y;
}

/// Any of dx, dweight, dbias may be nullptr to skip that gradient.
template <typename T>
void conv2d_backward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& dy, int stride,
                     int pad, Tensor<T>* dx, Tensor<T>* dweight, Tensor<T>* dbias) {
  const ConvGeometry g = conv_geometry(x.shape(), weight.shape(), stride, pad);
  const int n = x.shape().n;
  ConstMatMap<T> wm(weight.data(), g.out_c, g.patch());
  T* col = g.is_pointwise() ? nullptr : scratch<T>(static_cast<std::size_t>(g.patch()) * g.out_plane());
  for (int b = 0; b < n; ++b) {
    ConstMatMap<T> dym(dy.plane(b, 0), g.out_c, g.out_plane());
    if (dweight != nullptr) {
      MatMap<T> dwm(dweight->data(), g.out_c, g.patch());
      if (g.is_pointwise()) {
        dwm.noalias() += dym * ConstMatMap<T>(x.plane(b, 0), g.in_c, g.out_plane()).transpose();
      } else {
        im2col(x.plane(b, 0), g, col);
        dwm.noalias() += dym * ConstMatMap<T>(col, g.patch(), g.out_plane()).transpose();
      }
    }
    if (dbias != nullptr) {
      // plain loop: Eigen's vectorised sum depends on buffer alignment
      for (int c = 0; c < g.out_c; ++c) {
        const T* row = dy.plane(b, c);
        T s = 0;
        for (int i = 0; i < g.out_plane(); ++i) s += row[i];
        (*dbias)[c] += s;
      }
    }
    if (dx != nullptr) {
      if (g.is_pointwise()) {
        MatMap<T>(dx->plane(b, 0), g.in_c, g.out_plane()).noalias() += wm.transpose() * dym;
      } else {
        MatMap<T> colm(col, g.patch(), g.out_plane());
        colm.noalias() = wm.transpose() * dym;
        col2im_add(col, g, dx->plane(b, 0));
      }
    }
  }
}

// ---------------------------------------------------------------- batch norm

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.9;

template <typename T>
struct BatchStats {
  std::vector<T> mean;
  std::vector<T> invstd;
  std::vector<T> var;  // biased batch variance
};

/// Sum of f(i) for i in [0, n) in double precision over eight fixed lanes;
/// the summation order depends only on n.
template <typename F>
double lane_sum(std::size_t n, F f) {
  constexpr std::size_t kLanes = 8;
  double acc[kLanes] = {};
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    for (std::size_t j = 0; j < kLanes; ++j) acc[j] += f(i + j);
  }
  for (; i < n; ++i) acc[i % kLanes] += f(i);
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

inline void check_channel_param(const Shape& x, const Shape& p, const char* what) {
  if (p.numel() != static_cast<std::size_t>(x.c)) {
    throw ShapeError(std::string("batch_norm: ") + what + " " + p.str() + " does not match " +
                     std::to_string(x.c) + " channels of input " + x.str());
  }
}

template <typename T>
Tensor<T> batch_norm_train_forward(const Tensor<T>& x, const Tensor<T>& gamma,
                                   const Tensor<T>& beta, BatchStats<T>& stats) {
  const Shape& s = x.shape();
  check_channel_param(s, gamma.shape(), "gamma");
  check_channel_param(s, beta.shape(), "beta");
  const double count = static_cast<double>(s.n) * s.plane();
  stats.mean.assign(s.c, T(0));
  stats.invstd.assign(s.c, T(0));
  stats.var.assign(s.c, T(0));
  Tensor<T> y(s);
  for (int c = 0; c < s.c; ++c) {
    double sum = 0;
    for (int b = 0; b < s.n; ++b) {
      const T* p = x.plane(b, c);
      sum += lane_sum(s.plane(), [p](std::size_t i) { return static_cast<double>(p[i]); });
    }
    const double mean = sum / count;
    double sq = 0;
    for (int b = 0; b < s.n; ++b) {
      const T* p = x.plane(b, c);
      sq += lane_sum(s.plane(), [p, mean](std::size_t i) {
        const double d = p[i] - mean;
        return d * d;
      });
    }
    const double var = sq / count;
    const double invstd = 1.0 / std::sqrt(var + kBatchNormEps);
    stats.mean[c] = static_cast<T>(mean);
    stats.invstd[c] = static_cast<T>(invstd);
    stats.var[c] = static_cast<T>(var);
    const T g = gamma[c] * static_cast<T>(invstd);
    const T m = static_cast<T>(mean);
    for (int b = 0; b < s.n; ++b) {
      const T* p = x.plane(b, c);
      T* q = y.plane(b, c);
      for (std::size_t i = 0; i < s.plane(); ++i) q[i] = (p[i] - m) * g + beta[c];
    }
  }
  return y;
}

/// Folds batch statistics into running estimates (unbiased variance).
template <typename T>
void batch_norm_update_running(const BatchStats<T>& stats, std::size_t count,
                               Tensor<T>& running_mean, Tensor<T>& running_var) {
  const T mom = static_cast<T>(kBatchNormMomentum);
  const T unbias = count > 1 ? static_cast<T>(static_cast<double>(count) / (count - 1)) : T(1);
  for (std::size_t c = 0; c < stats.mean.size(); ++c) {
    running_mean[c] = mom * running_mean[c] + (T(1) - mom) * stats.mean[c];
    running_var[c] = mom * running_var[c] + (T(1) - mom) * stats.var[c] * unbias;
  }
}

template <typename T>
void batch_norm_train_backward(const Tensor<T>& x, const Tensor<T>& gamma,
                               const BatchStats<T>& stats, const Tensor<T>& dy, Tensor<T>* dx,
                               Tensor<T>* dgamma, Tensor<T>* dbeta) {
  const Shape& s = x.shape();
  const double count = static_cast<double>(s.n) * s.plane();
  for (int c = 0; c < s.c; ++c) {
    const double mean = stats.mean[c];
    const double invstd = stats.invstd[c];
    double sum_dy = 0;
    double sum_dy_xhat = 0;
    for (int b = 0; b < s.n; ++b) {
      const T* p = x.plane(b, c);
      const T* g = dy.plane(b, c);
      sum_dy += lane_sum(s.plane(), [g](std::size_t i) { return static_cast<double>(g[i]); });
      sum_dy_xhat += lane_sum(s.plane(), [p, g, mean, invstd](std::size_t i) {
        return static_cast<double>(g[i]) * ((p[i] - mean) * invstd);
      });
    }
    if (dgamma != nullptr) (*dgamma)[c] += static_cast<T>(sum_dy_xhat);
    if (dbeta != nullptr) (*dbeta)[c] += static_cast<T>(sum_dy);
    if (dx == nullptr) continue;
    const double scale = gamma[c] * invstd / count;
    for (int b = 0; b < s.n; ++b) {
      const T* p = x.plane(b, c);
      const T* g = dy.plane(b, c);
      T* d = dx->plane(b, c);
      for (std::size_t i = 0; i < s.plane(); ++i) {
        const double xhat = (p[i] - mean) * invstd;
        d[i] += static_cast<T>(scale * (count * g[i] - sum_dy - xhat * sum_dy_xhat));
      }
    }
  }
}

template <typename T>
Tensor<T> batch_norm_infer_forward(const Tensor<T>& x, const Tensor<T>& gamma,
                                   const Tensor<T>& beta, const Tensor<T>& running_mean,
                                   const Tensor<T>& running_var) {
  const Shape& s = x.shape();
  check_channel_param(s, gamma.shape(), "gamma");
  check_channel_param(s, beta.shape(), "beta");
  Tensor<T> y(s);
  for (int c = 0; c < s.c; ++c) {
    const T invstd = static_cast<T>(1.0 / std::sqrt(static_cast<double>(running_var[c]) + kBatchNormEps));
    const T g = gamma[c] * invstd;
    for (int b = 0; b < s.n; ++b) {
      const T* p = x.plane(b, c);
      T* q = y.plane(b, c);
      for (std::size_t i = 0; i < s.plane(); ++i) q[i] = (p[i] - running_mean[c]) * g + beta[c];
    }
  }
  return y;
}

template <typename T>
void batch_norm_infer_backward(const Tensor<T>& x, const Tensor<T>& gamma,
                               const Tensor<T>& running_mean, const Tensor<T>& running_var,
                               const Tensor<T>& dy, Tensor<T>* dx, Tensor<T>* dgamma,
                               Tensor<T>* dbeta) {
  const Shape& s = x.shape();
  for (int c = 0; c < s.c; ++c) {
    const double invstd = 1.0 / std::sqrt(static_cast<double>(running_var[c]) + kBatchNormEps);
    double sum_dy = 0;
    double sum_dy_xhat = 0;
    for (int b = 0; b < s.n; ++b) {
      const T* p = x.plane(b, c);
      const T* g = dy.plane(b, c);
      T* d = dx != nullptr ? dx->plane(b, c) : nullptr;
      for (std::size_t i = 0; i < s.plane(); ++i) {
        sum_dy += g[i];
        sum_dy_xhat += g[i] * (p[i] - running_mean[c]) * invstd;
        if (d != nullptr) d[i] += static_cast<T>(g[i] * gamma[c] * invstd);
      }
    }
    if (dgamma != nullptr) (*dgamma)[c] += static_cast<T>(sum_dy_xhat);
    if (dbeta != nullptr) (*dbeta)[c] += static_cast<T>(sum_dy);
  }
}

// ---------------------------------------------------------------- elementwise

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
  return y;
}

template <typename T>
void relu_backward(const Tensor<T>& x, const Tensor<T>& dy, Tensor<T>& dx) {
  for (std::size_t i = 0; i < x.size(); ++i) dx[i] += x[i] > T(0) ? dy[i] : T(0);
}

template <typename T>
Tensor<T> add_forward(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "add");
  Tensor<T> y(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) y[i] = a[i] + b[i];
  return y;
}

template <typename T>
void accumulate(Tensor<T>& dst, const Tensor<T>& src, T factor = T(1)) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += factor * src[i];
}

// ---------------------------------------------------------------- pooling

inline void check_pool_factor(const Shape& s, int factor, const char* what) {
  if (factor < 1) throw ShapeError(std::string(what) + ": factor must be >= 1");
  if (s.h % factor != 0 || s.w % factor != 0) {
    throw ShapeError(std::string(what) + ": spatial dims of " + s.str() +
                     " are not divisible by factor " + std::to_string(factor));
  }
}

/// Row-major offset of the (first) maximum inside each window.
template <typename T>
std::size_t window_argmax(const T* plane, int width, int oy, int ox, int factor) {
  std::size_t best = static_cast<std::size_t>(oy * factor) * width + ox * factor;
  T best_v = plane[best];
  for (int dy = 0; dy < factor; ++dy) {
    for (int dx = 0; dx < factor; ++dx) {
      const std::size_t idx = static_cast<std::size_t>(oy * factor + dy) * width + ox * factor + dx;
      if (plane[idx] > best_v) {
        best_v = plane[idx];
        best = idx;
      }
    }
  }
  return best;
}

template <typename T>
Tensor<T> max_pool_forward(const Tensor<T>& x, int factor) {
  const Shape& s = x.shape();
  check_pool_factor(s, factor, "max_pool");
  Tensor<T> y(Shape{s.n, s.c, s.h / factor, s.w / factor});
  const Shape& o = y.shape();
  for (int b = 0; b < s.n; ++b) {
    for (int c = 0; c < s.c; ++c) {
      const T* p = x.plane(b, c);
      T* q = y.plane(b, c);
      for (int oy = 0; oy < o.h; ++oy) {
        for (int ox = 0; ox < o.w; ++ox) q[oy * o.w + ox] = p[window_argmax(p, s.w, oy, ox, factor)];
      }
    }
  }
  return y;
}

template <typename T>
void max_pool_backward(const Tensor<T>& x, const Tensor<T>& dy, int factor, Tensor<T>& dx) {
  const Shape& s = x.shape();
  const Shape& o = dy.shape();
  for (int b = 0; b < s.n; ++b) {
    for (int c = 0; c < s.c; ++c) {
      const T* p = x.plane(b, c);
      const T* g = dy.plane(b, c);
      T* d = dx.plane(b, c);
      for (int oy = 0; oy < o.h; ++oy) {
        for (int ox = 0; ox < o.w; ++ox) d[window_argmax(p, s.w, oy, ox, factor)] += g[oy * o.w + ox];
      }
    }
  }
}

template <typename T>
Tensor<T> unpool_repeat_forward(const Tensor<T>& x, int factor) {
  if (factor < 1) throw ShapeError("unpool_repeat: factor must be >= 1");
  const Shape& s = x.shape();
  Tensor<T> y(Shape{s.n, s.c, s.h * factor, s.w * factor});
  const int ow = s.w * factor;
  for (int b = 0; b < s.n; ++b) {
    for (int c = 0; c < s.c; ++c) {
      const T* p = x.plane(b, c);
      T* q = y.plane(b, c);
      for (int iy = 0; iy < s.h; ++iy) {
        const T* srow = p + static_cast<std::size_t>(iy) * s.w;
        T* first = q + static_cast<std::size_t>(iy) * factor * ow;
        for (int ix = 0; ix < s.w; ++ix) std::fill_n(first + ix * factor, factor, srow[ix]);
        for (int r = 1; r < factor; ++r) std::copy(first, first + ow, first + static_cast<std::size_t>(r) * ow);
      }
    }
  }
  return y;
}

template <typename T>
void unpool_repeat_backward(const Tensor<T>& dy, int factor, Tensor<T>& dx) {
  const Shape& s = dx.shape();
  const int ow = s.w * factor;
  for (int b = 0; b < s.n; ++b) {
    for (int c = 0; c < s.c; ++c) {
      const T* g = dy.plane(b, c);
      T* d = dx.plane(b, c);
      for (int oy = 0; oy < s.h * factor; ++oy) {
        const T* grow = g + static_cast<std::size_t>(oy) * ow;
        T* drow = d + static_cast<std::size_t>(oy / factor) * s.w;
        for (int ix = 0; ix < s.w; ++ix) {
          const T* cell = grow + ix * factor;
          T acc = drow[ix];
          for (int k = 0; k < factor; ++k) acc += cell[k];
          drow[ix] = acc;
        }
      }
    }
  }
}

// ---------------------------------------------------------------- bilinear

/// Source taps for one output coordinate (align-corners=false).
struct BilinearTap {
  int i0, i1;
  double w1;  // weight of i1; i0 gets 1 - w1
};

inline std::vector<BilinearTap> bilinear_taps(int in_size, int factor) {
  std::vector<BilinearTap> taps(static_cast<std::size_t>(in_size) * factor);
  for (int o = 0; o < in_size * factor; ++o) {
    double src = (o + 0.5) / factor - 0.5;
    if (src < 0) src = 0;
    int i0 = static_cast<int>(std::floor(src));
    if (i0 > in_size - 1) i0 = in_size - 1;
    const int i1 = std::min(i0 + 1, in_size - 1);
    taps[o] = {i0, i1, src - i0};
  }
  return taps;
}

template <typename T>
Tensor<T> upsample_bilinear_forward(const Tensor<T>& x, int factor) {
  if (factor < 1) throw ShapeError("upsample_bilinear: factor must be >= 1");
  const Shape& s = x.shape();
  const auto ty = bilinear_taps(s.h, factor);
  const auto tx = bilinear_taps(s.w, factor);
  Tensor<T> y(Shape{s.n, s.c, s.h * factor, s.w * factor});
  const int oh = s.h * factor, ow = s.w * factor;
  for (int b = 0; b < s.n; ++b) {
    for (int c = 0; c < s.c; ++c) {
      const T* p = x.plane(b, c);
      T* q = y.plane(b, c);
      for (int oy = 0; oy < oh; ++oy) {
        const auto& a = ty[oy];
        for (int ox = 0; ox < ow; ++ox) {
          const auto& e = tx[ox];
          const double top = p[a.i0 * s.w + e.i0] * (1 - e.w1) + p[a.i0 * s.w + e.i1] * e.w1;
          const double bot = p[a.i1 * s.w + e.i0] * (1 - e.w1) + p[a.i1 * s.w + e.i1] * e.w1;
          q[oy * ow + ox] = static_cast<T>(top * (1 - a.w1) + bot * a.w1);
        }
      }
    }
  }
  return y;
}

template <typename T>
void upsample_bilinear_backward(const Tensor<T>& dy, int factor, Tensor<T>& dx) {
  const Shape& s = dx.shape();
  const auto ty = bilinear_taps(s.h, factor);
  const auto tx = bilinear_taps(s.w, factor);
  const int oh = s.h * factor, ow = s.w * factor;
  for (int b = 0; b < s.n; ++b) {
    for (int c = 0; c < s.c; ++c) {
      const T* g = dy.plane(b, c);
      T* d = dx.plane(b, c);
      for (int oy = 0; oy < oh; ++oy) {
        const auto& a = ty[oy];
        for (int ox = 0; ox < ow; ++ox) {
          const auto& e = tx[ox];
          const double v = g[oy * ow + ox];
          d[a.i0 * s.w + e.i0] += static_cast<T>(v * (1 - a.w1) * (1 - e.w1));
          d[a.i0 * s.w + e.i1] += static_cast<T>(v * (1 - a.w1) * e.w1);
          d[a.i1 * s.w + e.i0] += static_cast<T>(v * a.w1 * (1 - e.w1));
          d[a.i1 * s.w + e.i1] += static_cast<T>(v * a.w1 * e.w1);
        }
      }
    }
  }
}

// ---------------------------------------------------------------- channels

template <typename T>
Tensor<T> concat_channels_forward(const Tensor<T>& a, const Tensor<T>& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.n != sb.n || sa.h != sb.h || sa.w != sb.w) {
    throw ShapeError("concat_channels: N,H,W mismatch " + sa.str() + " vs " + sb.str());
  }
  Tensor<T> y(Shape{sa.n, sa.c + sb.c, sa.h, sa.w});
  for (int n = 0; n < sa.n; ++n) {
    std::copy(a.plane(n, 0), a.plane(n, 0) + sa.c * sa.plane(), y.plane(n, 0));
    std::copy(b.plane(n, 0), b.plane(n, 0) + sb.c * sb.plane(), y.plane(n, sa.c));
  }
  return y;
}

template <typename T>
void concat_channels_backward(const Tensor<T>& dy, Tensor<T>* da, Tensor<T>* db, int a_channels) {
  const Shape& s = dy.shape();
  const std::size_t plane = s.plane();
  for (int n = 0; n < s.n; ++n) {
    if (da != nullptr) {
      const T* src = dy.plane(n, 0);
      T* dst = da->plane(n, 0);
      for (std::size_t i = 0; i < a_channels * plane; ++i) dst[i] += src[i];
    }
    if (db != nullptr) {
      const T* src = dy.plane(n, a_channels);
      T* dst = db->plane(n, 0);
      for (std::size_t i = 0; i < (s.c - a_channels) * plane; ++i) dst[i] += src[i];
    }
  }
}

/// Softmax over the channel axis, per pixel, with max subtraction.
template <typename T>
Tensor<T> softmax_channels_forward(const Tensor<T>& x) {
  const Shape& s = x.shape();
  Tensor<T> y(s);
  const std::size_t plane = s.plane();
  for (int n = 0; n < s.n; ++n) {
    const T* p = x.plane(n, 0);
    T* q = y.plane(n, 0);
    for (std::size_t i = 0; i < plane; ++i) {
      T mx = p[i];
      for (int c = 1; c < s.c; ++c) mx = std::max(mx, p[c * plane + i]);
      double z = 0;
      for (int c = 0; c < s.c; ++c) {
        const double e = std::exp(static_cast<double>(p[c * plane + i] - mx));
        q[c * plane + i] = static_cast<T>(e);
        z += e;
      }
      for (int c = 0; c < s.c; ++c) q[c * plane + i] = static_cast<T>(q[c * plane + i] / z);
    }
  }
  return y;
}

template <typename T>
void softmax_channels_backward(const Tensor<T>& y, const Tensor<T>& dy, Tensor<T>& dx) {
  const Shape& s = y.shape();
  const std::size_t plane = s.plane();
  for (int n = 0; n < s.n; ++n) {
    const T* q = y.plane(n, 0);
    const T* g = dy.plane(n, 0);
    T* d = dx.plane(n, 0);
    for (std::size_t i = 0; i < plane; ++i) {
      double dot = 0;
      for (int c = 0; c < s.c; ++c) dot += static_cast<double>(q[c * plane + i]) * g[c * plane + i];
      for (int c = 0; c < s.c; ++c) {
        d[c * plane + i] += static_cast<T>(q[c * plane + i] * (g[c * plane + i] - dot));
      }
    }
  }
}

template <typename T>
Tensor<T> log_softmax_channels_forward(const Tensor<T>& x) {
  const Shape& s = x.shape();
  Tensor<T> y(s);
  const std::size_t plane = s.plane();
  for (int n = 0; n < s.n; ++n) {
    const T* p = x.plane(n, 0);
    T* q = y.plane(n, 0);
    for (std::size_t i = 0; i < plane; ++i) {
      T mx = p[i];
      for (int c = 1; c < s.c; ++c) mx = std::max(mx, p[c * plane + i]);
      double z = 0;
      for (int c = 0; c < s.c; ++c) z += std::exp(static_cast<double>(p[c * plane + i] - mx));
      const double lz = std::log(z) + mx;
      for (int c = 0; c < s.c; ++c) q[c * plane + i] = static_cast<T>(p[c * plane + i] - lz);
    }
  }
  return y;
}

}  // namespace frrn::kernels
