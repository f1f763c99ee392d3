#pragma once

#include "fsuda/core/types.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <vector>

namespace fsuda::nn {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// NCHW batch stored channel-major: one row per channel, columns run over
// (batch, y, x). Convolutions become a single GEMM per layer in this layout.
template <typename Scalar>
struct Tensor {
  int n = 0, c = 0, h = 0, w = 0;
  Matrix<Scalar> data;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_) : n(n_), c(c_), h(h_), w(w_), data(Matrix<Scalar>::Zero(c_, n_ * h_ * w_)) {}

  Eigen::Index index(int b, int y, int x) const { return (static_cast<Eigen::Index>(b) * h + y) * w + x; }
  Scalar& at(int b, int ch, int y, int x) { return data(ch, index(b, y, x)); }
  Scalar at(int b, int ch, int y, int x) const { return data(ch, index(b, y, x)); }

  bool same_shape(const Tensor& other) const { return n == other.n && c == other.c && h == other.h && w == other.w; }

  template <typename Other>
  Tensor<Other> cast() const {
    Tensor<Other> out;
    out.n = n;
    out.c = c;
    out.h = h;
    out.w = w;
    out.data = data.template cast<Other>();
    return out;
  }
};

struct ConvSpec {
  int kernel = 3;
  int stride = 1;
  int pad = 1;
  int dilation = 1;

  int out_size(int in) const { return (in + 2 * pad - dilation * (kernel - 1) - 1) / stride + 1; }
};

template <typename Scalar>
Matrix<Scalar> im2col(const Tensor<Scalar>& x, const ConvSpec& s, int oh, int ow) {
  const int k = s.kernel;
  Matrix<Scalar> cols = Matrix<Scalar>::Zero(static_cast<Eigen::Index>(x.c) * k * k,
                                             static_cast<Eigen::Index>(x.n) * oh * ow);
  for (int ci = 0; ci < x.c; ++ci) {
    const Scalar* src = x.data.row(ci).data();
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        Scalar* dst = cols.row((static_cast<Eigen::Index>(ci) * k + ky) * k + kx).data();
        for (int b = 0; b < x.n; ++b) {
          for (int oy = 0; oy < oh; ++oy) {
            const int iy = oy * s.stride - s.pad + ky * s.dilation;
            if (iy < 0 || iy >= x.h) continue;
            const Scalar* src_row = src + (static_cast<Eigen::Index>(b) * x.h + iy) * x.w;
            Scalar* dst_row = dst + (static_cast<Eigen::Index>(b) * oh + oy) * ow;
            for (int ox = 0; ox < ow; ++ox) {
              const int ix = ox * s.stride - s.pad + kx * s.dilation;
              if (ix >= 0 && ix < x.w) dst_row[ox] = src_row[ix];
            }
          }
        }
      }
    }
  }
  return cols;
}

template <typename Scalar>
Tensor<Scalar> col2im(const Matrix<Scalar>& cols, const ConvSpec& s, int n, int c, int h, int w, int oh, int ow) {
  Tensor<Scalar> x(n, c, h, w);
  const int k = s.kernel;
  for (int ci = 0; ci < c; ++ci) {
    Scalar* dst = x.data.row(ci).data();
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const Scalar* src = cols.row((static_cast<Eigen::Index>(ci) * k + ky) * k + kx).data();
        for (int b = 0; b < n; ++b) {
          for (int oy = 0; oy < oh; ++oy) {
            const int iy = oy * s.stride - s.pad + ky * s.dilation;
            if (iy < 0 || iy >= h) continue;
            Scalar* dst_row = dst + (static_cast<Eigen::Index>(b) * h + iy) * w;
            const Scalar* src_row = src + (static_cast<Eigen::Index>(b) * oh + oy) * ow;
            for (int ox = 0; ox < ow; ++ox) {
              const int ix = ox * s.stride - s.pad + kx * s.dilation;
              if (ix >= 0 && ix < w) dst_row[ix] += src_row[ox];
            }
          }
        }
      }
    }
  }
  return x;
}

inline bool is_pointwise(const ConvSpec& s) { return s.kernel == 1 && s.stride == 1 && s.pad == 0; }

// weight: Cout x (Cin*k*k), bias: Cout x 1.
template <typename Scalar>
Tensor<Scalar> conv2d(const Tensor<Scalar>& x, const Matrix<Scalar>& weight, const Matrix<Scalar>& bias,
                      const ConvSpec& s) {
  const int oh = s.out_size(x.h);
  const int ow = s.out_size(x.w);
  Tensor<Scalar> y;
  y.n = x.n;
  y.c = static_cast<int>(weight.rows());
  y.h = oh;
  y.w = ow;
  if (is_pointwise(s)) {
    y.data.noalias() = weight * x.data;
  } else {
    y.data.noalias() = weight * im2col(x, s, oh, ow);
  }
  y.data.colwise() += bias.col(0);
  return y;
}

// Accumulates weight and bias gradients; returns dL/dx when requested.
template <typename Scalar>
Tensor<Scalar> conv2d_backward(const Tensor<Scalar>& x, const Matrix<Scalar>& weight, const ConvSpec& s,
                               const Tensor<Scalar>& dy, Matrix<Scalar>& dweight, Matrix<Scalar>& dbias,
                               bool need_input_grad = true) {
  dbias.col(0) += dy.data.rowwise().sum();
  if (is_pointwise(s)) {
    dweight.noalias() += dy.data * x.data.transpose();
    if (!need_input_grad) return {};
    Tensor<Scalar> dx;
    dx.n = x.n;
    dx.c = x.c;
    dx.h = x.h;
    dx.w = x.w;
    dx.data.noalias() = weight.transpose() * dy.data;
    return dx;
  }
  const Matrix<Scalar> cols = im2col(x, s, dy.h, dy.w);
  dweight.noalias() += dy.data * cols.transpose();
  if (!need_input_grad) return {};
  const Matrix<Scalar> dcols = weight.transpose() * dy.data;
  return col2im(dcols, s, x.n, x.c, x.h, x.w, dy.h, dy.w);
}

template <typename Scalar>
void relu_inplace(Tensor<Scalar>& x) {
  x.data = x.data.cwiseMax(Scalar(0));
}

// Masks dy by the activation pattern of the post-ReLU output y.
template <typename Scalar>
void relu_backward_inplace(const Tensor<Scalar>& y, Tensor<Scalar>& dy) {
  dy.data = (y.data.array() > Scalar(0)).select(dy.data, Scalar(0));
}

template <typename Scalar>
void leaky_relu_inplace(Tensor<Scalar>& x, Scalar slope) {
  x.data = (x.data.array() > Scalar(0)).select(x.data, x.data * slope);
}

template <typename Scalar>
void leaky_relu_backward_inplace(const Tensor<Scalar>& y, Tensor<Scalar>& dy, Scalar slope) {
  dy.data = (y.data.array() > Scalar(0)).select(dy.data, dy.data * slope);
}

template <typename Scalar>
Tensor<Scalar> concat_channels(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.n != b.n || a.h != b.h || a.w != b.w) throw Error("concat_channels: spatial shape mismatch");
  Tensor<Scalar> out;
  out.n = a.n;
  out.c = a.c + b.c;
  out.h = a.h;
  out.w = a.w;
  out.data.resize(out.c, a.data.cols());
  out.data.topRows(a.c) = a.data;
  out.data.bottomRows(b.c) = b.data;
  return out;
}

template <typename Scalar>
Tensor<Scalar> channel_slice(const Tensor<Scalar>& x, int first, int count) {
  Tensor<Scalar> out;
  out.n = x.n;
  out.c = count;
  out.h = x.h;
  out.w = x.w;
  out.data = x.data.middleRows(first, count);
  return out;
}

namespace detail {

struct LinearAxis {
  std::vector<int> lo, hi;
  std::vector<double> frac;
};

// Half-pixel-centered linear interpolation weights (align_corners = false).
inline LinearAxis linear_axis(int src, int dst) {
  LinearAxis a;
  a.lo.resize(dst);
  a.hi.resize(dst);
  a.frac.resize(dst);
  const double scale = static_cast<double>(src) / dst;
  for (int i = 0; i < dst; ++i) {
    const double pos = std::max(0.0, (i + 0.5) * scale - 0.5);
    const int lo = std::min(static_cast<int>(pos), src - 1);
    a.lo[i] = lo;
    a.hi[i] = std::min(lo + 1, src - 1);
    a.frac[i] = pos - lo;
  }
  return a;
}

}  // namespace detail

template <typename Scalar>
Tensor<Scalar> resize_bilinear(const Tensor<Scalar>& x, int oh, int ow) {
  const auto ay = detail::linear_axis(x.h, oh);
  const auto ax = detail::linear_axis(x.w, ow);
  Tensor<Scalar> y(x.n, x.c, oh, ow);
  for (int ch = 0; ch < x.c; ++ch) {
    const Scalar* src = x.data.row(ch).data();
    Scalar* dst = y.data.row(ch).data();
    for (int b = 0; b < x.n; ++b) {
      const Scalar* plane = src + static_cast<Eigen::Index>(b) * x.h * x.w;
      Scalar* out = dst + static_cast<Eigen::Index>(b) * oh * ow;
      for (int oy = 0; oy < oh; ++oy) {
        const Scalar fy = static_cast<Scalar>(ay.frac[oy]);
        const Scalar* r0 = plane + static_cast<Eigen::Index>(ay.lo[oy]) * x.w;
        const Scalar* r1 = plane + static_cast<Eigen::Index>(ay.hi[oy]) * x.w;
        for (int ox = 0; ox < ow; ++ox) {
          const Scalar fx = static_cast<Scalar>(ax.frac[ox]);
          const Scalar top = r0[ax.lo[ox]] * (1 - fx) + r0[ax.hi[ox]] * fx;
          const Scalar bot = r1[ax.lo[ox]] * (1 - fx) + r1[ax.hi[ox]] * fx;
          out[static_cast<Eigen::Index>(oy) * ow + ox] = top * (1 - fy) + bot * fy;
        }
      }
    }
  }
  return y;
}

// Adjoint of resize_bilinear: scatters dy back onto an (ih, iw) grid.
template <typename Scalar>
Tensor<Scalar> resize_bilinear_backward(const Tensor<Scalar>& dy, int ih, int iw) {
  const auto ay = detail::linear_axis(ih, dy.h);
  const auto ax = detail::linear_axis(iw, dy.w);
  Tensor<Scalar> dx(dy.n, dy.c, ih, iw);
  for (int ch = 0; ch < dy.c; ++ch) {
    const Scalar* src = dy.data.row(ch).data();
    Scalar* dst = dx.data.row(ch).data();
    for (int b = 0; b < dy.n; ++b) {
      const Scalar* g = src + static_cast<Eigen::Index>(b) * dy.h * dy.w;
      Scalar* plane = dst + static_cast<Eigen::Index>(b) * ih * iw;
      for (int oy = 0; oy < dy.h; ++oy) {
        const Scalar fy = static_cast<Scalar>(ay.frac[oy]);
        Scalar* r0 = plane + static_cast<Eigen::Index>(ay.lo[oy]) * iw;
        Scalar* r1 = plane + static_cast<Eigen::Index>(ay.hi[oy]) * iw;
        for (int ox = 0; ox < dy.w; ++ox) {
          const Scalar fx = static_cast<Scalar>(ax.frac[ox]);
          const Scalar v = g[static_cast<Eigen::Index>(oy) * dy.w + ox];
          r0[ax.lo[ox]] += v * (1 - fy) * (1 - fx);
          r0[ax.hi[ox]] += v * (1 - fy) * fx;
          r1[ax.lo[ox]] += v * fy * (1 - fx);
          r1[ax.hi[ox]] += v * fy * fx;
        }
      }
    }
  }
  return dx;
}

template <typename Scalar>
Matrix<Scalar> sigmoid(const Matrix<Scalar>& z) {
  return (Scalar(1) / (Scalar(1) + (-z.array()).exp())).matrix();
}

// Gathers `indices` of a batch into a new batch.
template <typename Scalar>
Tensor<Scalar> select_batch(const Tensor<Scalar>& x, const std::vector<int>& indices) {
  Tensor<Scalar> out(static_cast<int>(indices.size()), x.c, x.h, x.w);
  const Eigen::Index plane = static_cast<Eigen::Index>(x.h) * x.w;
  for (std::size_t i = 0; i < indices.size(); ++i) {
    out.data.middleCols(static_cast<Eigen::Index>(i) * plane, plane) = x.data.middleCols(indices[i] * plane, plane);
  }
  return out;
}

}  // namespace fsuda::nn
