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


// Dataset ingestion (IDX) and image-grid emission (binary PGM/PPM).

#ifndef MIMICINV_IMAGEIO_HPP
#define MIMICINV_IMAGEIO_HPP

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "mimicinv/datasets.hpp"
#include "mimicinv/param_io.hpp"
#include "mimicinv/tensor.hpp"

namespace mimicinv {

// ---------------------------------------------------------------- IDX

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

namespace detail {

inline std::uint32_t read_be32(std::span<const unsigned char> b, std::size_t off, const std::string& what) {
  if (b.size() < off + 4) throw FormatError(what + ": truncated header");
  return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) | (std::uint32_t{b[off + 2]} << 8) |
         std::uint32_t{b[off + 3]};
}

}  // namespace detail

/// Big-endian IDX pair: images u8[count,rows,cols] and labels u8[count].
/// Pixels map to [-1,1] by v / 127.5 - 1.
inline LabeledImages parse_idx(std::span<const unsigned char> images, std::span<const unsigned char> labels) {
  if (detail::read_be32(images, 0, "idx images") != kIdxImageMagic) throw FormatError("idx images: bad magic");
  if (detail::read_be32(labels, 0, "idx labels") != kIdxLabelMagic) throw FormatError("idx labels: bad magic");
  const std::size_t count = detail::read_be32(images, 4, "idx images");
  const std::size_t rows = detail::read_be32(images, 8, "idx images");
  const std::size_t cols = detail::read_be32(images, 12, "idx images");
  const std::size_t lcount = detail::read_be32(labels, 4, "idx labels");
  if (count != lcount) {
    throw FormatError("idx: " + std::to_string(count) + " images but " + std::to_string(lcount) + " labels");
  }
  const std::size_t d = rows * cols;
  if (images.size() != 16 + count * d) throw FormatError("idx images: payload size does not match header");
  if (labels.size() != 8 + count) throw FormatError("idx labels: payload size does not match header");
  LabeledImages out{Tensor({count, rows, cols, 1}), std::vector<int>(count)};
  for (std::size_t i = 0; i < count * d; ++i) out.images[i] = images[16 + i] / 127.5 - 1.0;
  for (std::size_t i = 0; i < count; ++i) out.labels[i] = labels[8 + i];
  return out;
}

inline LabeledImages read_idx(const std::string& images_path, const std::string& labels_path) {
  return parse_idx(read_file_bytes(images_path), read_file_bytes(labels_path));
}

// ---------------------------------------------------------------- netpbm

/// [-1,1] to a byte, rounding to nearest and saturating.
inline unsigned char quantize_pixel(double v) {
  return static_cast<unsigned char>(std::lround(std::clamp((v + 1.0) * 127.5, 0.0, 255.0)));
}

/// 8-bit raster with 1 (PGM) or 3 (PPM) channels.
struct Raster {
  std::size_t height = 0, width = 0, channels = 1;
  std::vector<unsigned char> pixels;
};

/// Tile rows of image batches [B,H,W,C]: grid row r holds batch r left to
/// right. All batches must share one shape.
inline Raster tile_grid(const std::vector<Tensor>& rows) {
  if (rows.empty()) throw ShapeError("image grid needs at least one row");
  const Shape& s = rows.front().shape();
  if (s.size() != 4 || (s[3] != 1 && s[3] != 3)) throw ShapeError("image grid rows must be [B,H,W,1|3]");
  for (const auto& r : rows)
    if (r.shape() != s) throw ShapeError("image grid rows differ: " + to_string(r.shape()) + " vs " + to_string(s));
  const std::size_t b = s[0], h = s[1], w = s[2], c = s[3];
  Raster out{rows.size() * h, b * w, c, {}};
  out.pixels.resize(out.height * out.width * c);
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t n = 0; n < b; ++n)
      for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j)
          for (std::size_t ch = 0; ch < c; ++ch)
            out.pixels[((r * h + i) * out.width + n * w + j) * c + ch] =
                quantize_pixel(rows[r][((n * h + i) * w + j) * c + ch]);
  return out;
}

inline void write_raster(const Raster& r, const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  f << (r.channels == 1 ? "P5" : "P6") << "\n" << r.width << " " << r.height << "\n255\n";
  f.write(reinterpret_cast<const char*>(r.pixels.data()), static_cast<std::streamsize>(r.pixels.size()));
  if (!f) throw std::runtime_error("write failed: " + path);
}

inline void write_image_grid(const std::vector<Tensor>& rows, const std::string& path) {
  write_raster(tile_grid(rows), path);
}

/// Reads binary P5/P6 files with maxval 255.
inline Raster read_raster(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  std::size_t pos = 0;
  auto token = [&]() {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
    std::string t;
    while (pos < bytes.size() && !std::isspace(bytes[pos])) t.push_back(static_cast<char>(bytes[pos++]));
    if (t.empty()) throw FormatError(path + ": truncated netpbm header");
    return t;
  };
  auto number = [&]() {
    const std::string t = token();
    if (t.find_first_not_of("0123456789") != std::string::npos) throw FormatError(path + ": bad netpbm header");
    return static_cast<std::size_t>(std::stoull(t));
  };
  const std::string magic = token();
  Raster r;
  if (magic == "P5") r.channels = 1;
  else if (magic == "P6") r.channels = 3;
  else throw FormatError(path + ": not a binary PGM/PPM");
  r.width = number();
  r.height = number();
  if (number() != 255) throw FormatError(path + ": only maxval 255 is supported");
  ++pos;  // single whitespace before the raster
  const std::size_t n = r.width * r.height * r.channels;
  if (bytes.size() < pos || bytes.size() - pos != n) throw FormatError(path + ": raster size mismatch");
  r.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end());
  return r;
}

}  // namespace mimicinv

#endif  // MIMICINV_IMAGEIO_HPP
