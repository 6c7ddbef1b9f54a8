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

// Hermetic toy datasets: procedural glyph images and the 8-Gaussian ring.

#ifndef MIMICINV_DATASETS_HPP
#define MIMICINV_DATASETS_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <vector>

#include "mimicinv/rng.hpp"
#include "mimicinv/tensor.hpp"

namespace mimicinv {

/// Images with integer class labels.
struct LabeledImages {
  Tensor images;  // [count, H, W, C]
  std::vector<int> labels;
};

inline constexpr std::size_t kGlyphSize = 14;
inline constexpr int kGlyphClasses = 4;

namespace detail {

inline double segment_distance(double px, double py, double ax, double ay, double bx, double by) {
  const double dx = bx - ax, dy = by - ay;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0.0 ? ((px - ax) * dx + (py - ay) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double qx = ax + t * dx - px, qy = ay + t * dy - py;
  return std::sqrt(qx * qx + qy * qy);
}

}  // namespace detail

/// Render one glyph of class `label` (0 horizontal bar, 1 vertical bar,
/// 2 ring, 3 diagonal cross) with random placement and stroke width.
/// Background -1, stroke +1, one pixel of anti-aliasing.
inline Tensor render_glyph(int label, Rng& rng) {
  constexpr std::size_t n = kGlyphSize;
  const double c = (n - 1) / 2.0;
  const double cx = c + rng.uniform(-1.5, 1.5);
  const double cy = c + rng.uniform(-1.5, 1.5);
  const double half = rng.uniform(0.7, 1.3);
  const double reach = rng.uniform(3.5, 5.0);
  Tensor img({n, n, 1});
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t col = 0; col < n; ++col) {
      const double x = static_cast<double>(col), y = static_cast<double>(r);
      double d = 0.0;
      switch (label) {
        case 0:
          d = detail::segment_distance(x, y, cx - reach, cy, cx + reach, cy);
          break;
        case 1:
          d = detail::segment_distance(x, y, cx, cy - reach, cx, cy + reach);
          break;
        case 2:
          d = std::abs(std::hypot(x - cx, y - cy) - reach * 0.85);
          break;
        default: {
          const double a = reach * 0.75;
          d = std::min(detail::segment_distance(x, y, cx - a, cy - a, cx + a, cy + a),
                       detail::segment_distance(x, y, cx - a, cy + a, cx + a, cy - a));
        }
      }
      const double ink = std::clamp(half - d + 0.5, 0.0, 1.0);
      img.data()[r * n + col] = 2.0 * ink - 1.0;
    }
  }
  return img;
}

/// `count` glyphs with balanced, shuffled labels.
inline LabeledImages glyphs(std::size_t count, Rng& rng) {
  std::vector<int> labels(count);
  for (std::size_t i = 0; i < count; ++i) labels[i] = static_cast<int>(i % kGlyphClasses);
  std::shuffle(labels.begin(), labels.end(), rng.engine());
  std::vector<Tensor> imgs;
  imgs.reserve(count);
  for (int l : labels) imgs.push_back(render_glyph(l, rng));
  return {stack(imgs), std::move(labels)};
}

/// Mixture of 8 isotropic Gaussians with centers evenly spaced on a circle.
struct EightGaussians {
  double radius = 0.7;
  double sigma = 0.05;

  std::vector<std::array<double, 2>> centers() const {
    std::vector<std::array<double, 2>> out;
    for (int k = 0; k < 8; ++k) {
      const double a = 2.0 * std::numbers::pi * k / 8.0;
      out.push_back({radius * std::cos(a), radius * std::sin(a)});
    }
    return out;
  }

  Tensor sample(std::size_t count, Rng& rng) const {
    const auto cs = centers();
    Tensor t({count, 2});
    for (std::size_t i = 0; i < count; ++i) {
      const auto& c = cs[rng.index(8)];
      t.data()[2 * i] = c[0] + rng.normal(0.0, sigma);
      t.data()[2 * i + 1] = c[1] + rng.normal(0.0, sigma);
    }
    return t;
  }

  /// Number of centers with at least `min_hits` samples within 3 sigma.
  std::size_t modes_covered(const Tensor& points, std::size_t min_hits = 1) const {
    const auto cs = centers();
    std::vector<std::size_t> hits(8, 0);
    const std::size_t n = points.dim(0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < 8; ++k) {
        const double dx = points.data()[2 * i] - cs[k][0];
        const double dy = points.data()[2 * i + 1] - cs[k][1];
        if (std::sqrt(dx * dx + dy * dy) <= 3.0 * sigma) ++hits[k];
      }
    }
    return static_cast<std::size_t>(std::count_if(hits.begin(), hits.end(),
                                                  [&](std::size_t h) { return h >= min_hits; }));
  }
};

}  // namespace mimicinv

#endif  // MIMICINV_DATASETS_HPP
