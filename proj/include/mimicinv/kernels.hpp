// Copyright 2026 The mimicinv Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Raw-buffer kernels behind the tape ops. Matrix products go through Eigen
// (single-threaded), everything else is plain loops; results are
// bit-reproducible run to run.

#ifndef MIMICINV_KERNELS_HPP
#define MIMICINV_KERNELS_HPP

#include <cstddef>
#include <span>
#include <string>

#include <Eigen/Core>

#include "mimicinv/errors.hpp"

namespace mimicinv::kernels {

namespace detail {
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;
}  // namespace detail

// C[m,n] += A[m,k] * B[k,n]
inline void gemm_nn(std::span<const double> a, std::span<const double> b,
                    std::span<double> c, std::size_t m, std::size_t k,
                    std::size_t n) {
  using namespace detail;
  const auto M = static_cast<Eigen::Index>(m), K = static_cast<Eigen::Index>(k), N = static_cast<Eigen::Index>(n);
  MutMap(c.data(), M, N).noalias() += ConstMap(a.data(), M, K) * ConstMap(b.data(), K, N);
}

// C[m,n] += A[k,m]^T * B[k,n]
inline void gemm_tn(std::span<const double> a, std::span<const double> b,
                    std::span<double> c, std::size_t m, std::size_t k,
                    std::size_t n) {
  using namespace detail;
  const auto M = static_cast<Eigen::Index>(m), K = static_cast<Eigen::Index>(k), N = static_cast<Eigen::Index>(n);
  MutMap(c.data(), M, N).noalias() += ConstMap(a.data(), K, M).transpose() * ConstMap(b.data(), K, N);
}

// C[m,n] += A[m,k] * B[n,k]^T
inline void gemm_nt(std::span<const double> a, std::span<const double> b,
                    std::span<double> c, std::size_t m, std::size_t k,
                    std::size_t n) {
  using namespace detail;
  const auto M = static_cast<Eigen::Index>(m), K = static_cast<Eigen::Index>(k), N = static_cast<Eigen::Index>(n);
  MutMap(c.data(), M, N).noalias() += ConstMap(a.data(), M, K) * ConstMap(b.data(), N, K).transpose();
}

enum class Padding { Same, Valid };

inline const char* to_string(Padding p) { return p == Padding::Same ? "same" : "valid"; }

/// Spatial geometry of a 2-D cross-correlation. "Same" padding follows the
/// usual convention: out = ceil(in / stride), extra padding goes bottom/right.
struct ConvGeometry {
  std::size_t in_h = 0, in_w = 0;
  std::size_t out_h = 0, out_w = 0;
  std::size_t kh = 0, kw = 0;
  std::size_t stride = 1;
  std::size_t pad_top = 0, pad_left = 0;

  static ConvGeometry make(std::size_t in_h, std::size_t in_w, std::size_t kh,
                           std::size_t kw, std::size_t stride, Padding padding) {
    if (stride == 0) throw ShapeError("conv stride must be >= 1");
    if (kh == 0 || kw == 0) throw ShapeError("conv kernel extent must be >= 1");
    ConvGeometry g;
    g.in_h = in_h;
    g.in_w = in_w;
    g.kh = kh;
    g.kw = kw;
    g.stride = stride;
    if (padding == Padding::Same) {
      g.out_h = (in_h + stride - 1) / stride;
      g.out_w = (in_w + stride - 1) / stride;
      const std::size_t need_h = (g.out_h - 1) * stride + kh;
      const std::size_t need_w = (g.out_w - 1) * stride + kw;
      g.pad_top = need_h > in_h ? (need_h - in_h) / 2 : 0;
      g.pad_left = need_w > in_w ? (need_w - in_w) / 2 : 0;
    } else {
      if (in_h < kh || in_w < kw) {
        throw ShapeError("valid conv: kernel larger than input");
      }
      g.out_h = (in_h - kh) / stride + 1;
      g.out_w = (in_w - kw) / stride + 1;
    }
    return g;
  }

  /// Geometry of the forward conv whose adjoint maps (in_h,in_w) back up.
  static ConvGeometry for_transpose(std::size_t in_h, std::size_t in_w,
                                    std::size_t kh, std::size_t kw,
                                    std::size_t stride, Padding padding) {
    if (stride == 0) throw ShapeError("conv stride must be >= 1");
    const std::size_t oh = padding == Padding::Same ? in_h * stride : (in_h - 1) * stride + kh;
    const std::size_t ow = padding == Padding::Same ? in_w * stride : (in_w - 1) * stride + kw;
    ConvGeometry g = make(oh, ow, kh, kw, stride, padding);
    if (g.out_h != in_h || g.out_w != in_w) {
      throw ShapeError("transpose conv geometry does not invert");
    }
    return g;
  }

  std::size_t patch() const { return kh * kw; }
};

// cols[b*oh*ow, kh*kw*c] gathered from x[b,h,w,c]; padding reads zero.
inline void im2col(std::span<const double> x, std::span<double> cols,
                   std::size_t batch, std::size_t channels, const ConvGeometry& g) {
  const std::size_t row_len = g.kh * g.kw * channels;
  std::size_t r = 0;
  for (std::size_t b = 0; b < batch; ++b) {
    const double* img = x.data() + b * g.in_h * g.in_w * channels;
    for (std::size_t oy = 0; oy < g.out_h; ++oy) {
      for (std::size_t ox = 0; ox < g.out_w; ++ox, ++r) {
        double* row = cols.data() + r * row_len;
        for (std::size_t ky = 0; ky < g.kh; ++ky) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                                    static_cast<std::ptrdiff_t>(g.pad_top);
          for (std::size_t kx = 0; kx < g.kw; ++kx) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                                      static_cast<std::ptrdiff_t>(g.pad_left);
            double* dst = row + (ky * g.kw + kx) * channels;
            if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h) ||
                ix >= static_cast<std::ptrdiff_t>(g.in_w)) {
              for (std::size_t c = 0; c < channels; ++c) dst[c] = 0.0;
            } else {
              const double* src =
                  img + (static_cast<std::size_t>(iy) * g.in_w + static_cast<std::size_t>(ix)) * channels;
              for (std::size_t c = 0; c < channels; ++c) dst[c] = src[c];
            }
          }
        }
      }
    }
  }
}

// Scatter-add adjoint of im2col.
inline void col2im(std::span<const double> cols, std::span<double> x,
                   std::size_t batch, std::size_t channels, const ConvGeometry& g) {
  const std::size_t row_len = g.kh * g.kw * channels;
  std::size_t r = 0;
  for (std::size_t b = 0; b < batch; ++b) {
    double* img = x.data() + b * g.in_h * g.in_w * channels;
    for (std::size_t oy = 0; oy < g.out_h; ++oy) {
      for (std::size_t ox = 0; ox < g.out_w; ++ox, ++r) {
        const double* row = cols.data() + r * row_len;
        for (std::size_t ky = 0; ky < g.kh; ++ky) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                                    static_cast<std::ptrdiff_t>(g.pad_top);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
          for (std::size_t kx = 0; kx < g.kw; ++kx) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                                      static_cast<std::ptrdiff_t>(g.pad_left);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.in_w)) continue;
            const double* src = row + (ky * g.kw + kx) * channels;
            double* dst =
                img + (static_cast<std::size_t>(iy) * g.in_w + static_cast<std::size_t>(ix)) * channels;
            for (std::size_t c = 0; c < channels; ++c) dst[c] += src[c];
          }
        }
      }
    }
  }
}

}  // namespace mimicinv::kernels

#endif  // MIMICINV_KERNELS_HPP
