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


// Image quality metrics.

#ifndef MIMICINV_METRICS_HPP
#define MIMICINV_METRICS_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "mimicinv/tensor.hpp"

namespace mimicinv {

/// Value reported for identical images.
inline constexpr double kPsnrIdentical = std::numeric_limits<double>::infinity();

/// PSNR in dB of two images with values in [-1,1], after mapping both to
/// [0,1]; peak 1. Symmetric in its arguments.
inline double psnr(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ShapeError("psnr: images differ in size");
  if (x.empty()) throw ShapeError("psnr: empty image");
  double se = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = (x[i] - y[i]) / 2.0;
    se += d * d;
  }
  if (se == 0.0) return kPsnrIdentical;
  return 10.0 * std::log10(static_cast<double>(x.size()) / se);
}

inline double psnr(const Tensor& x, const Tensor& y) {
  if (x.shape() != y.shape()) throw ShapeError("psnr: shape " + to_string(x.shape()) + " vs " + to_string(y.shape()));
  return psnr(x.data(), y.data());
}

/// PSNR of each pair along axis 0.
inline std::vector<double> psnr_per_image(const Tensor& x, const Tensor& y) {
  if (x.shape() != y.shape() || x.rank() < 1) {
    throw ShapeError("psnr: shape " + to_string(x.shape()) + " vs " + to_string(y.shape()));
  }
  const std::size_t n = x.dim(0), d = n ? x.size() / n : 0;
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = psnr(x.data().subspan(i * d, d), y.data().subspan(i * d, d));
  return out;
}

/// Mean over finite entries; infinite entries (identical pairs) are skipped.
inline double mean_finite(const std::vector<double>& v) {
  double s = 0.0;
  std::size_t n = 0;
  for (double x : v)
    if (std::isfinite(x)) s += x, ++n;
  return n ? s / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
}

/// One-sided sign test: P(X >= wins) for X ~ Binomial(trials, 1/2).
/// Ties should be dropped from `trials` by the caller.
inline double sign_test_p(std::size_t wins, std::size_t trials) {
  if (wins > trials) throw std::invalid_argument("sign_test_p: wins exceed trials");
  // Binomial coefficients by the multiplicative recurrence; exact in double
  // well past any realistic seed count.
  double c = 1.0, tail = 0.0;
  for (std::size_t k = 0; k <= trials; ++k) {
    if (k >= wins) tail += c;
    c = c * static_cast<double>(trials - k) / static_cast<double>(k + 1);
  }
  const double p = std::ldexp(tail, -static_cast<int>(trials));
  return std::min(p, 1.0);
}

}  // namespace mimicinv

#endif  // MIMICINV_METRICS_HPP
