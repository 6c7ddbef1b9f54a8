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

// Ground-truth corruption operators. All act on batches [B,H,W,C] with
// values in [-1,1]. Region coordinates are written for 64x64 images and
// scale linearly (floor) to other sizes.

#ifndef MIMICINV_CORRUPTIONS_HPP
#define MIMICINV_CORRUPTIONS_HPP

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mimicinv/errors.hpp"
#include "mimicinv/rng.hpp"
#include "mimicinv/tensor.hpp"

namespace mimicinv {

// ---------------------------------------------------------------- blur

/// Normalized 1-D Gaussian weights for an odd kernel size. A non-positive
/// sigma selects 0.3 * ((k - 1) / 2 - 1) + 0.8.
struct BlurKernel {
  std::size_t size;
  double sigma;
  std::vector<double> weights;

  static BlurKernel make(std::size_t k, double sigma = 0.0) {
    if (k == 0 || k % 2 == 0) throw std::invalid_argument("blur kernel size must be odd, got " + std::to_string(k));
    if (!(sigma > 0.0)) sigma = 0.3 * ((static_cast<double>(k) - 1.0) / 2.0 - 1.0) + 0.8;
    BlurKernel out{k, sigma, std::vector<double>(k)};
    const double c = (static_cast<double>(k) - 1.0) / 2.0;
    double total = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      const double d = static_cast<double>(i) - c;
      out.weights[i] = std::exp(-d * d / (2.0 * sigma * sigma));
      total += out.weights[i];
    }
    for (auto& w : out.weights) w /= total;
    return out;
  }
};

namespace detail {

/// Reflect-101 index: ... 2 1 | 0 1 2 ... n-1 | n-2 n-3 ...
inline std::size_t reflect101(std::ptrdiff_t i, std::size_t n) {
  if (n == 1) return 0;
  const auto period = static_cast<std::ptrdiff_t>(2 * (n - 1));
  i %= period;
  if (i < 0) i += period;
  if (i >= static_cast<std::ptrdiff_t>(n)) i = period - i;
  return static_cast<std::size_t>(i);
}

inline void require_images(const Tensor& x, const char* op) {
  if (x.rank() != 4) throw ShapeError(std::string(op) + ": expected [B,H,W,C], got " + to_string(x.shape()));
}

/// Region coordinate written for a 64-pixel side, scaled to `n` pixels.
inline std::size_t scale64(std::size_t c, std::size_t n) { return c * n / 64; }

/// numpy.percentile with linear interpolation.
inline double percentile(std::vector<double> v, double q) {
  if (v.empty()) throw std::invalid_argument("percentile of empty set");
  std::sort(v.begin(), v.end());
  const double pos = q / 100.0 * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return v[lo] + frac * (v[hi] - v[lo]);
}

}  // namespace detail

/// Separable Gaussian blur of every channel with reflect-101 borders.
inline Tensor gaussian_blur(const Tensor& x, std::size_t k, double sigma = 0.0) {
  detail::require_images(x, "gaussian_blur");
  const BlurKernel kern = BlurKernel::make(k, sigma);
  const std::size_t b = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  const auto r = static_cast<std::ptrdiff_t>(k / 2);
  Tensor tmp(x.shape()), out(x.shape());
  auto at = [&](std::size_t n, std::size_t i, std::size_t j, std::size_t ch) { return ((n * h + i) * w + j) * c + ch; };
  for (std::size_t n = 0; n < b; ++n)
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j)
        for (std::size_t ch = 0; ch < c; ++ch) {
          double s = 0.0;
          for (std::ptrdiff_t t = -r; t <= r; ++t)
            s += kern.weights[static_cast<std::size_t>(t + r)] *
                 x[at(n, i, detail::reflect101(static_cast<std::ptrdiff_t>(j) + t, w), ch)];
          tmp[at(n, i, j, ch)] = s;
        }
  for (std::size_t n = 0; n < b; ++n)
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j)
        for (std::size_t ch = 0; ch < c; ++ch) {
          double s = 0.0;
          for (std::ptrdiff_t t = -r; t <= r; ++t)
            s += kern.weights[static_cast<std::size_t>(t + r)] *
                 tmp[at(n, detail::reflect101(static_cast<std::ptrdiff_t>(i) + t, h), j, ch)];
          out[at(n, i, j, ch)] = s;
        }
  return out;
}

// ---------------------------------------------------------------- regions

/// Per-image (H,W) membership masks of the deterministic regions.
namespace regions {

/// Eight 4-row bands starting at rows 4, 12, ..., 60, columns [12, 54).
inline std::vector<bool> inpainting_bands(std::size_t h, std::size_t w) {
  std::vector<bool> m(h * w, false);
  for (std::size_t start = 4; start < 64; start += 8)
    for (std::size_t i = detail::scale64(start, h); i < detail::scale64(start + 4, h); ++i)
      for (std::size_t j = detail::scale64(12, w); j < detail::scale64(54, w); ++j) m[i * w + j] = true;
  return m;
}

/// Rows [24,44) x columns [12,54) united with its transpose.
inline std::vector<bool> occlusion_cross(std::size_t h, std::size_t w) {
  if (h != w) throw ShapeError("occlusion needs square images, got " + std::to_string(h) + "x" + std::to_string(w));
  std::vector<bool> m(h * w, false);
  const std::size_t a0 = detail::scale64(24, h), a1 = detail::scale64(44, h);
  const std::size_t b0 = detail::scale64(12, h), b1 = detail::scale64(54, h);
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j)
      m[i * w + j] = (i >= a0 && i < a1 && j >= b0 && j < b1) || (j >= a0 && j < a1 && i >= b0 && i < b1);
  return m;
}

}  // namespace regions

// ---------------------------------------------------------------- operators

/// One mask shared by the batch: 1 outside the bands, sigma*N(0,1) inside.
/// Output is x * mask.
inline Tensor inpainting(const Tensor& x, Rng& rng, double sigma = 0.5) {
  detail::require_images(x, "inpainting");
  const std::size_t h = x.dim(1), w = x.dim(2), c = x.dim(3);
  Tensor mask({h, w, c}, 1.0);
  for (std::size_t start = 4; start < 64; start += 8)
    for (std::size_t i = detail::scale64(start, h); i < detail::scale64(start + 4, h); ++i)
      for (std::size_t j = detail::scale64(12, w); j < detail::scale64(54, w); ++j)
        for (std::size_t ch = 0; ch < c; ++ch) mask[(i * w + j) * c + ch] = sigma * rng.normal();
  Tensor out = x;
  const std::size_t n = mask.size();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i % n];
  return out;
}

/// Cross-shaped region replaced by sigma*N(0,1), fresh noise per coordinate.
inline Tensor occlusion(const Tensor& x, Rng& rng, double sigma = 0.5) {
  detail::require_images(x, "occlusion");
  const std::size_t h = x.dim(1), w = x.dim(2), c = x.dim(3);
  const auto region = regions::occlusion_cross(h, w);
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i)
    if (region[(i / c) % (h * w)]) out[i] = sigma * rng.normal();
  return out;
}

/// Columns [0, column) become copies of `column` plus sigma*N(0,1); one noise
/// field is shared by every image of the batch.
inline Tensor pixel_error(const Tensor& x, Rng& rng, std::size_t column, double sigma = 0.25) {
  detail::require_images(x, "pixel_error");
  const std::size_t b = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  if (column >= w) throw std::out_of_range("pixel_error: column " + std::to_string(column) + " >= width " + std::to_string(w));
  Tensor noise = rng.normal_tensor({h, column, c});
  Tensor out = x;
  for (std::size_t n = 0; n < b; ++n)
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < column; ++j)
        for (std::size_t ch = 0; ch < c; ++ch)
          out[((n * h + i) * w + j) * c + ch] =
              x[((n * h + i) * w + column) * c + ch] + sigma * noise[(i * column + j) * c + ch];
  return out;
}

/// Blur then negate.
inline Tensor negative(const Tensor& x, std::size_t blur_scale = 11) {
  Tensor out = gaussian_blur(x, blur_scale);
  for (auto& v : out.data()) v = -v;
  return out;
}

/// Blur, quantize to 8 bits, truncate above `trunc`, map back and average
/// channels. Output has one channel.
inline Tensor gray_blur(const Tensor& x, std::size_t blur_scale = 15, double trunc = 120.0) {
  Tensor blurred = gaussian_blur(x, blur_scale);
  const std::size_t b = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  Tensor out({b, h, w, 1});
  for (std::size_t p = 0; p < b * h * w; ++p) {
    double s = 0.0;
    for (std::size_t ch = 0; ch < c; ++ch) {
      double y = std::trunc(std::clamp(127.5 * (blurred[p * c + ch] + 1.0), 0.0, 255.0));
      y = std::min(y, trunc);
      s += y / 127.5 - 1.0;
    }
    out[p] = s / static_cast<double>(c);
  }
  return out;
}

/// Values strictly above the batch-wide percentile become that percentile
/// plus sigma*N(0,1). The stylization filter that precedes this stage is
/// replaced by the identity.
inline Tensor stylize_noise(const Tensor& x, Rng& rng, double pct = 90.0, double sigma = 0.5) {
  detail::require_images(x, "stylize_noise");
  const double p = detail::percentile(x.vec(), pct);
  Tensor out = x;
  for (auto& v : out.data())
    if (v > p) v = p + sigma * rng.normal();
  return out;
}

/// Per-image threshold at the given percentile: >= maps to +1, else -1.
inline Tensor binary(const Tensor& x, double pct = 50.0) {
  detail::require_images(x, "binary");
  Tensor out = x;
  const std::size_t b = x.dim(0), d = x.size() / b;
  for (std::size_t n = 0; n < b; ++n) {
    auto img = out.data().subspan(n * d, d);
    const double t = detail::percentile(std::vector<double>(img.begin(), img.end()), pct);
    for (auto& v : img) v = v >= t ? 1.0 : -1.0;
  }
  return out;
}

/// Exactly floor(rate * d) coordinates per image, chosen without
/// replacement, set to 0.
inline Tensor drop_pixels(const Tensor& x, double rate, Rng& rng) {
  detail::require_images(x, "drop_pixels");
  if (!(rate >= 0.0 && rate <= 1.0)) throw ConfigError("rate", "drop rate must lie in [0,1]");
  Tensor out = x;
  const std::size_t b = x.dim(0), d = x.size() / b;
  const auto drop = static_cast<std::size_t>(std::floor(rate * static_cast<double>(d)));
  for (std::size_t n = 0; n < b; ++n) {
    const auto perm = rng.permutation(d);
    for (std::size_t k = 0; k < drop; ++k) out[n * d + perm[k]] = 0.0;
  }
  return out;
}

/// Blur with scale 25 (default) then negate.
inline Tensor blur_negative(const Tensor& x, std::size_t blur_scale = 25) { return negative(x, blur_scale); }

// ---------------------------------------------------------------- CorruptionSpec

enum class CorruptionKind {
  Identity,
  Inpainting,
  Occlusion,
  PixelError,
  Negative,
  GrayBlur,
  StylizeNoise,
  Binary,
  DropPixels,
  BlurNegative,
};

inline const char* to_string(CorruptionKind k) {
  switch (k) {
    case CorruptionKind::Identity: return "identity";
    case CorruptionKind::Inpainting: return "inpainting";
    case CorruptionKind::Occlusion: return "occlusion";
    case CorruptionKind::PixelError: return "pixel_error";
    case CorruptionKind::Negative: return "negative";
    case CorruptionKind::GrayBlur: return "gray_blur";
    case CorruptionKind::StylizeNoise: return "stylize_noise";
    case CorruptionKind::Binary: return "binary";
    case CorruptionKind::DropPixels: return "drop_pixels";
    case CorruptionKind::BlurNegative: return "blur_negative";
  }
  return "?";
}

inline CorruptionKind corruption_kind_from_string(const std::string& s) {
  for (int i = 0; i <= static_cast<int>(CorruptionKind::BlurNegative); ++i) {
    auto k = static_cast<CorruptionKind>(i);
    if (s == to_string(k)) return k;
  }
  throw ConfigError("kind", "unknown corruption kind '" + s + "'");
}

/// A corruption operator with its parameters. Unset optional fields take
/// per-kind defaults.
struct CorruptionSpec {
  CorruptionKind kind = CorruptionKind::Identity;
  std::optional<std::size_t> column;      // PixelError; default 26 scaled to width
  std::optional<std::size_t> blur_scale;  // Negative 11, GrayBlur 15, BlurNegative 25
  double trunc = 120.0;                   // GrayBlur
  double percentile = -1.0;               // StylizeNoise 90, Binary 50
  double noise_sigma = -1.0;              // Inpainting/Occlusion/StylizeNoise 0.5, PixelError 0.25
  double rate = 0.7;                      // DropPixels
  /// Extra i.i.d. Gaussian measurement noise added after the operator.
  double measurement_noise = 0.0;
  std::uint64_t seed = 0;

  double sigma_or_default() const {
    if (noise_sigma >= 0.0) return noise_sigma;
    return kind == CorruptionKind::PixelError ? 0.25 : 0.5;
  }
  double percentile_or_default() const {
    if (percentile >= 0.0) return percentile;
    return kind == CorruptionKind::Binary ? 50.0 : 90.0;
  }
  std::size_t blur_or_default() const {
    if (blur_scale) return *blur_scale;
    switch (kind) {
      case CorruptionKind::GrayBlur: return 15;
      case CorruptionKind::BlurNegative: return 25;
      default: return 11;
    }
  }
};

/// Observation Y = f(X) + eta. Deterministic in (x, spec).
inline Tensor corrupt(const Tensor& x, const CorruptionSpec& spec) {
  detail::require_images(x, "corrupt");
  Rng rng(spec.seed);
  Tensor y;
  switch (spec.kind) {
    case CorruptionKind::Identity: y = x; break;
    case CorruptionKind::Inpainting: y = inpainting(x, rng, spec.sigma_or_default()); break;
    case CorruptionKind::Occlusion: y = occlusion(x, rng, spec.sigma_or_default()); break;
    case CorruptionKind::PixelError:
      y = pixel_error(x, rng, spec.column.value_or(detail::scale64(26, x.dim(2))), spec.sigma_or_default());
      break;
    case CorruptionKind::Negative: y = negative(x, spec.blur_or_default()); break;
    case CorruptionKind::GrayBlur: y = gray_blur(x, spec.blur_or_default(), spec.trunc); break;
    case CorruptionKind::StylizeNoise:
      y = stylize_noise(x, rng, spec.percentile_or_default(), spec.sigma_or_default());
      break;
    case CorruptionKind::Binary: y = binary(x, spec.percentile_or_default()); break;
    case CorruptionKind::DropPixels: y = drop_pixels(x, spec.rate, rng); break;
    case CorruptionKind::BlurNegative: y = blur_negative(x, spec.blur_or_default()); break;
  }
  if (spec.measurement_noise > 0.0)
    for (auto& v : y.data()) v += spec.measurement_noise * rng.normal();
  return y;
}

// ---------------------------------------------------------------- JSON

inline nlohmann::json to_json(const CorruptionSpec& s) {
  nlohmann::json j = {{"kind", to_string(s.kind)}, {"seed", s.seed}};
  if (s.column) j["column"] = *s.column;
  if (s.blur_scale) j["blur_scale"] = *s.blur_scale;
  if (s.kind == CorruptionKind::GrayBlur) j["trunc"] = s.trunc;
  if (s.percentile >= 0.0) j["percentile"] = s.percentile;
  if (s.noise_sigma >= 0.0) j["noise_sigma"] = s.noise_sigma;
  if (s.kind == CorruptionKind::DropPixels) j["rate"] = s.rate;
  if (s.measurement_noise > 0.0) j["measurement_noise"] = s.measurement_noise;
  return j;
}

inline CorruptionSpec corruption_from_json(const nlohmann::json& j) {
  static const std::vector<std::string> known = {"kind", "seed", "column", "blur_scale", "trunc",
                                                 "percentile", "noise_sigma", "rate", "measurement_noise"};
  if (!j.is_object()) throw ConfigError("", "corruption must be an object");
  for (const auto& [key, _] : j.items())
    if (std::find(known.begin(), known.end(), key) == known.end()) throw ConfigError(key, "unknown field");
  CorruptionSpec s;
  try {
    s.kind = corruption_kind_from_string(j.at("kind").get<std::string>());
    s.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("column")) s.column = j.at("column").get<std::size_t>();
    if (j.contains("blur_scale")) {
      s.blur_scale = j.at("blur_scale").get<std::size_t>();
      if (*s.blur_scale % 2 == 0) throw ConfigError("blur_scale", "must be odd");
    }
    s.trunc = j.value("trunc", 120.0);
    s.percentile = j.value("percentile", -1.0);
    s.noise_sigma = j.value("noise_sigma", -1.0);
    s.rate = j.value("rate", 0.7);
    if (!(s.rate >= 0.0 && s.rate <= 1.0)) throw ConfigError("rate", "must lie in [0,1]");
    s.measurement_noise = j.value("measurement_noise", 0.0);
    if (s.measurement_noise < 0.0) throw ConfigError("measurement_noise", "must be >= 0");
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("", std::string("malformed corruption: ") + e.what());
  }
  return s;
}

}  // namespace mimicinv

#endif  // MIMICINV_CORRUPTIONS_HPP
