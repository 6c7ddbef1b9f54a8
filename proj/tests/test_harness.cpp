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


#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "mimicinv/imageio.hpp"
#include "mimicinv/metrics.hpp"

namespace mimicinv {
namespace {

std::string scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "mimicinv_test_harness";
  std::filesystem::create_directories(dir);
  return (dir / name).string();
}

// ------------------------------------------------------------------ psnr

TEST(Psnr, IdenticalIsInfinite) {
  Tensor x({2, 3}, 0.3);
  EXPECT_EQ(psnr(x, x), kPsnrIdentical);
  EXPECT_TRUE(std::isinf(psnr(x, x)));
}

TEST(Psnr, UniformOffsetOfOneTenthIsTwentyDb) {
  // 0.1 in [0,1] is 0.2 in [-1,1]
  Rng rng(1);
  Tensor x = rng.uniform_tensor({8, 8}, -0.8, 0.8), y = x;
  for (auto& v : y.data()) v += 0.2;
  EXPECT_NEAR(psnr(x, y), 20.0, 1e-12);
}

TEST(Psnr, SymmetricAndMatchesDirectMse) {
  Rng rng(2);
  Tensor x = rng.uniform_tensor({5, 7, 3}, -1, 1), y = rng.uniform_tensor({5, 7, 3}, -1, 1);
  double mse = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double a = (x[i] + 1.0) / 2.0, b = (y[i] + 1.0) / 2.0;
    mse += (a - b) * (a - b) / static_cast<double>(x.size());
  }
  EXPECT_NEAR(psnr(x, y), 10.0 * std::log10(1.0 / mse), 1e-9);
  EXPECT_EQ(psnr(x, y), psnr(y, x));
}

TEST(Psnr, ShapeMismatch) {
  EXPECT_THROW(psnr(Tensor({2, 3}), Tensor({3, 2})), ShapeError);
  EXPECT_THROW(psnr_per_image(Tensor({2, 3}), Tensor({2, 4})), ShapeError);
}

TEST(Psnr, PerImageAndFiniteMean) {
  Tensor x({2, 4}), y({2, 4});
  for (std::size_t i = 4; i < 8; ++i) y[i] = 0.2;
  auto p = psnr_per_image(x, y);
  ASSERT_EQ(p.size(), 2u);
  EXPECT_TRUE(std::isinf(p[0]));
  EXPECT_NEAR(p[1], 20.0, 1e-12);
  EXPECT_NEAR(mean_finite(p), 20.0, 1e-12);
  EXPECT_TRUE(std::isnan(mean_finite({kPsnrIdentical})));
}

// ------------------------------------------------------------------ idx

std::vector<unsigned char> idx_images() {
  // magic 0x803, 2 images of 2x2
  return {0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2, 0, 255, 51, 204, 128, 127, 1, 254};
}
std::vector<unsigned char> idx_labels() { return {0, 0, 8, 1, 0, 0, 0, 2, 7, 3}; }

TEST(Idx, ParsesHandBuiltFixture) {
  auto ds = parse_idx(idx_images(), idx_labels());
  EXPECT_EQ(ds.images.shape(), (Shape{2, 2, 2, 1}));
  const double expect[] = {-1.0, 1.0, 51 / 127.5 - 1, 204 / 127.5 - 1, 128 / 127.5 - 1, 127 / 127.5 - 1,
                           1 / 127.5 - 1, 254 / 127.5 - 1};
  for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(ds.images[i], expect[i]);
  EXPECT_EQ(ds.labels, (std::vector<int>{7, 3}));
}

TEST(Idx, ReadsFromFiles) {
  const auto ip = scratch("img.idx"), lp = scratch("lab.idx");
  auto put = [](const std::string& p, const std::vector<unsigned char>& b) {
    std::ofstream f(p, std::ios::binary);
    f.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
  };
  put(ip, idx_images());
  put(lp, idx_labels());
  auto ds = read_idx(ip, lp);
  EXPECT_EQ(ds.images, parse_idx(idx_images(), idx_labels()).images);
}

TEST(Idx, TypedErrors) {
  auto bad_magic = idx_images();
  bad_magic[3] = 4;
  EXPECT_THROW(parse_idx(bad_magic, idx_labels()), FormatError);
  auto truncated = idx_images();
  truncated.pop_back();
  EXPECT_THROW(parse_idx(truncated, idx_labels()), FormatError);
  auto more_labels = idx_labels();
  more_labels[7] = 3;
  more_labels.push_back(1);
  EXPECT_THROW(parse_idx(idx_images(), more_labels), FormatError);
  EXPECT_THROW(parse_idx(std::vector<unsigned char>{0, 0}, idx_labels()), FormatError);
}

// ------------------------------------------------------------------ grids

TEST(ImageGrid, BlackImageGivesZeroPayload) {
  const auto p = scratch("black.pgm");
  write_image_grid({Tensor({1, 3, 2, 1}, -1.0)}, p);
  auto r = read_raster(p);
  EXPECT_EQ(r.height, 3u);
  EXPECT_EQ(r.width, 2u);
  EXPECT_EQ(r.pixels, std::vector<unsigned char>(6, 0));
}

TEST(ImageGrid, TwoByThreeTiling) {
  Tensor a({3, 4, 5, 1}), b({3, 4, 5, 1}, 1.0);
  Raster r = tile_grid({a, b});
  EXPECT_EQ(r.height, 8u);
  EXPECT_EQ(r.width, 15u);
  EXPECT_EQ(r.pixels[0], 128);             // 0.0 maps to 127.5, rounded away from zero
  EXPECT_EQ(r.pixels[5 * 15 + 14], 255);  // second row of tiles
  EXPECT_THROW(tile_grid({a, Tensor({2, 4, 5, 1})}), ShapeError);
}

TEST(ImageGrid, RoundTripRecoversQuantizedValues) {
  Rng rng(3);
  Tensor x = rng.uniform_tensor({2, 4, 3, 3}, -1.2, 1.2);
  const auto p = scratch("rt.ppm");
  write_image_grid({x, x}, p);
  Raster r = read_raster(p);
  EXPECT_EQ(r.channels, 3u);
  EXPECT_EQ(r.pixels, tile_grid({x, x}).pixels);
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 3; ++j)
        for (std::size_t c = 0; c < 3; ++c) {
          const double v = x[((n * 4 + i) * 3 + j) * 3 + c];
          const auto q = static_cast<unsigned char>(std::lround(std::clamp((v + 1.0) * 127.5, 0.0, 255.0)));
          EXPECT_EQ(r.pixels[((4 + i) * 6 + n * 3 + j) * 3 + c], q);
        }
}

TEST(ImageGrid, UnwritablePath) {
  EXPECT_THROW(write_image_grid({Tensor({1, 2, 2, 1})}, "/nonexistent-dir/x.pgm"), std::runtime_error);
}

}  // namespace
}  // namespace mimicinv
