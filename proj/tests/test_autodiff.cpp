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

#include "mimicinv/autodiff.hpp"
#include "mimicinv/gradcheck.hpp"
#include "mimicinv/rng.hpp"

namespace mimicinv {
namespace {

// Direct 6-loop cross-correlation, independent of im2col.
Tensor naive_conv2d(const Tensor& x, const Tensor& k, std::size_t stride, Padding padding) {
  const std::size_t B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  const std::size_t kh = k.dim(0), kw = k.dim(1), O = k.dim(3);
  std::size_t oh, ow, pt = 0, pl = 0;
  if (padding == Padding::Same) {
    oh = (H + stride - 1) / stride;
    ow = (W + stride - 1) / stride;
    const long th = std::max<long>(0, static_cast<long>((oh - 1) * stride + kh) - static_cast<long>(H));
    const long tw = std::max<long>(0, static_cast<long>((ow - 1) * stride + kw) - static_cast<long>(W));
    pt = static_cast<std::size_t>(th / 2);
    pl = static_cast<std::size_t>(tw / 2);
  } else {
    oh = (H - kh) / stride + 1;
    ow = (W - kw) / stride + 1;
  }
  Tensor y(Shape{B, oh, ow, O});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t i = 0; i < oh; ++i)
      for (std::size_t j = 0; j < ow; ++j)
        for (std::size_t o = 0; o < O; ++o) {
          double s = 0.0;
          for (std::size_t u = 0; u < kh; ++u)
            for (std::size_t v = 0; v < kw; ++v)
              for (std::size_t c = 0; c < C; ++c) {
                const long yy = static_cast<long>(i * stride + u) - static_cast<long>(pt);
                const long xx = static_cast<long>(j * stride + v) - static_cast<long>(pl);
                if (yy < 0 || xx < 0 || yy >= static_cast<long>(H) || xx >= static_cast<long>(W)) continue;
                s += x[((b * H + static_cast<std::size_t>(yy)) * W + static_cast<std::size_t>(xx)) * C + c] *
                     k[((u * kw + v) * C + c) * O + o];
              }
          y[((b * oh + i) * ow + j) * O + o] = s;
        }
  return y;
}

double dot(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

TEST(Forward, AddVectors) {
  Tape t;
  auto y = add(t.constant(Tensor({2}, {1, 2})), t.constant(Tensor({2}, {3, 4})));
  EXPECT_EQ(y.value(), Tensor({2}, {4, 6}));
}

TEST(Forward, IdentityMatmul) {
  Rng rng(1);
  Tape t;
  Tensor eye({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  Tensor x = rng.normal_tensor({3, 1});
  EXPECT_EQ(matmul(t.constant(eye), t.constant(x)).value(), x);
}

TEST(Forward, TanhScalar) {
  Tape t;
  // mpmath, 30 digits: 0.462117157260009758502318483644
  EXPECT_NEAR(tanh(t.constant(Tensor::scalar(0.5))).value().item(), 0.46211715726000975850, 1e-16);
}

TEST(Forward, NonFiniteIsAnError) {
  Tape t;
  EXPECT_THROW(log(t.constant(Tensor::scalar(0.0))), NumericError);
  EXPECT_THROW(log(t.constant(Tensor::scalar(-1.0))), NumericError);
}

TEST(Forward, ShapeMismatch) {
  Tape t;
  EXPECT_THROW(add(t.constant(Tensor({2})), t.constant(Tensor({3}))), ShapeError);
  EXPECT_THROW(matmul(t.constant(Tensor({2, 3})), t.constant(Tensor({2, 3}))), ShapeError);
}

TEST(Backward, SquareAtThree) {
  Tape t;
  auto x = t.leaf(Tensor::scalar(3.0));
  auto g = t.backward(square(x));
  EXPECT_EQ(g.wrt(x).item(), 6.0);
}

TEST(Backward, SumOfMatrixVectorIsColumnSums) {
  Rng rng(2);
  Tensor m = rng.normal_tensor({4, 3});
  Tape t;
  auto x = t.leaf(rng.normal_tensor({3, 1}));
  auto g = t.backward(sum(matmul(t.constant(m), x))).wrt(x);
  for (std::size_t j = 0; j < 3; ++j) {
    double col = 0.0;
    for (std::size_t i = 0; i < 4; ++i) col += m[i * 3 + j];
    EXPECT_NEAR(g[j], col, 1e-15);
  }
}

TEST(Backward, FanOutAccumulates) {
  Tape t;
  auto x = t.leaf(Tensor::scalar(1.5));
  EXPECT_EQ(t.backward(add(x, x)).wrt(x).item(), 2.0);
}

TEST(Backward, TwiceIsAnError) {
  Tape t;
  auto x = t.leaf(Tensor::scalar(1.0));
  auto y = square(x);
  t.backward(y);
  EXPECT_THROW(t.backward(y), TapeError);
}

TEST(Backward, SeedShapeMustMatch) {
  Tape t;
  auto x = t.leaf(Tensor({2}, {1, 2}));
  EXPECT_THROW(t.backward(square(x), Tensor({3})), ShapeError);
}

TEST(Backward, UnreachableLeafGetsZero) {
  Tape t;
  auto x = t.leaf(Tensor({2}, {1, 2}));
  auto unused = t.leaf(Tensor({3}, {1, 2, 3}));
  auto g = t.backward(sum(x));
  EXPECT_EQ(g.wrt(unused), Tensor({3}));
}

TEST(Backward, ClipPassesInsideOnly) {
  Tape t;
  auto z = t.leaf(Tensor({5}, {-1.5, -1.0, 0.3, 1.0, 2.0}));
  auto g = t.backward(sum(clip(z, -1.0, 1.0))).wrt(z);
  EXPECT_EQ(g, Tensor({5}, {0, 0, 1, 0, 0}));
}

TEST(Backward, ReluSubgradientAtZero) {
  Tape t;
  auto x = t.leaf(Tensor({3}, {-1.0, 0.0, 2.0}));
  auto g = t.backward(sum(relu(x))).wrt(x);
  EXPECT_EQ(g, Tensor({3}, {0, 0, 1}));
}

TEST(GradCheck, ConstantGraphIsExact) {
  ScalarGraph f = [](Tape& t, std::span<const Var>) { return t.constant(Tensor::scalar(4.0)); };
  Tensor x({3}, {1, 2, 3});
  EXPECT_EQ(grad_check(f, std::span(&x, 1)), 0.0);
}

TEST(GradCheck, NonScalarRejected) {
  ScalarGraph f = [](Tape&, std::span<const Var> in) { return in[0]; };
  Tensor x({3}, {1, 2, 3});
  EXPECT_THROW(grad_check(f, std::span(&x, 1)), ShapeError);
}

TEST(GradCheck, DenseTanh) {
  Rng rng(3);
  std::vector<Tensor> in{rng.normal_tensor({5, 4}), rng.normal_tensor({4, 3}, 0.5), rng.normal_tensor({3})};
  ScalarGraph f = [](Tape&, std::span<const Var> v) {
    return sum(tanh(add_bias(matmul(v[0], v[1]), v[2])));
  };
  EXPECT_LE(grad_check(f, in, 1e-5), 1e-6);
}

TEST(GradCheck, ConvLeakyReluAwayFromKinks) {
  Rng rng(4);
  Tensor x, k;
  // Resample until every pre-activation sits well away from 0.
  for (;;) {
    x = rng.normal_tensor({2, 5, 5, 2});
    k = rng.normal_tensor({3, 3, 2, 3}, 0.5);
    Tape t;
    auto pre = conv2d(t.constant(x), t.constant(k), 2, Padding::Same).value();
    bool ok = true;
    for (double v : pre.data()) ok = ok && std::abs(v) > 1e-3;
    if (ok) break;
  }
  std::vector<Tensor> in{x, k};
  ScalarGraph f = [](Tape&, std::span<const Var> v) {
    return sum(square(leaky_relu(conv2d(v[0], v[1], 2, Padding::Same), 0.2)));
  };
  EXPECT_LE(grad_check(f, in, 1e-5), 1e-5);
}

TEST(Conv2d, OneByOneKernelOfTwoDoubles) {
  Rng rng(5);
  Tensor x = rng.normal_tensor({2, 4, 4, 1});
  Tape t;
  auto y = conv2d(t.constant(x), t.constant(Tensor({1, 1, 1, 1}, 2.0))).value();
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(y[i], 2.0 * x[i]);
}

TEST(Conv2d, AveragingKernelKeepsConstantInterior) {
  Tape t;
  auto y = conv2d(t.constant(Tensor({1, 6, 6, 1}, 0.7)), t.constant(Tensor({3, 3, 1, 1}, 1.0 / 9.0))).value();
  for (std::size_t i = 1; i < 5; ++i)
    for (std::size_t j = 1; j < 5; ++j) EXPECT_NEAR(y[i * 6 + j], 0.7, 1e-15);
}

TEST(Conv2d, MatchesNaiveLoops) {
  Rng rng(6);
  for (auto padding : {Padding::Same, Padding::Valid}) {
    for (std::size_t stride : {1u, 2u}) {
      Tensor x = rng.normal_tensor({2, 9, 8, 3});
      Tensor k = rng.normal_tensor({5, 5, 3, 4});
      Tape t;
      auto y = conv2d(t.constant(x), t.constant(k), stride, padding).value();
      EXPECT_LE(max_abs_diff(y, naive_conv2d(x, k, stride, padding)), 1e-12);
    }
  }
}

TEST(Conv2d, ChannelMismatch) {
  Tape t;
  EXPECT_THROW(conv2d(t.constant(Tensor({1, 4, 4, 2})), t.constant(Tensor({3, 3, 1, 1}))), ShapeError);
}

TEST(ConvTranspose, OneByOneStrideOneScales) {
  Rng rng(7);
  Tensor x = rng.normal_tensor({1, 3, 3, 1});
  Tape t;
  auto y = conv_transpose2d(t.constant(x), t.constant(Tensor({1, 1, 1, 1}, -3.0))).value();
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(y[i], -3.0 * x[i]);
}

TEST(ConvTranspose, StrideTwoDoublesSevenToFourteen) {
  Rng rng(8);
  Tape t;
  auto y = conv_transpose2d(t.constant(rng.normal_tensor({1, 7, 7, 128})),
                            t.constant(rng.normal_tensor({4, 4, 64, 128}, 0.02)), 2);
  EXPECT_EQ(y.shape(), (Shape{1, 14, 14, 64}));
}

TEST(ConvTranspose, AdjointIdentityRandomGeometries) {
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t stride = 1 + rng.index(3);
    const std::size_t kh = 1 + rng.index(5), kw = 1 + rng.index(5);
    const auto padding = rng.index(2) ? Padding::Same : Padding::Valid;
    const std::size_t ci = 1 + rng.index(3), co = 1 + rng.index(3), b = 1 + rng.index(2);
    // Pick the small side and derive the large one from transpose geometry.
    const std::size_t h = 1 + rng.index(5), w = 1 + rng.index(5);
    const auto g = kernels::ConvGeometry::for_transpose(h, w, kh, kw, stride, padding);
    Tensor x = rng.normal_tensor({b, g.in_h, g.in_w, ci});
    Tensor y = rng.normal_tensor({b, h, w, co});
    Tensor k = rng.normal_tensor({kh, kw, ci, co});
    Tape t;
    auto cx = conv2d(t.constant(x), t.constant(k), stride, padding).value();
    auto ty = conv_transpose2d(t.constant(y), t.constant(k), stride, padding).value();
    ASSERT_EQ(cx.shape(), y.shape());
    ASSERT_EQ(ty.shape(), x.shape());
    const double lhs = dot(cx, y), rhs = dot(x, ty);
    EXPECT_LE(std::abs(lhs - rhs), 1e-12 * std::max(1.0, std::abs(lhs))) << "trial " << trial;
  }
}

TEST(Determinism, RepeatedForwardBackwardBitIdentical) {
  Rng rng(10);
  Tensor x = rng.normal_tensor({2, 6, 6, 2}), k = rng.normal_tensor({3, 3, 2, 2});
  auto run = [&] {
    Tape t;
    auto xv = t.leaf(x);
    auto kv = t.leaf(k);
    auto out = sum(tanh(conv2d(xv, kv, 1)));
    auto g = t.backward(out);
    return std::make_tuple(out.value(), g.wrt(xv), g.wrt(kv));
  };
  EXPECT_EQ(run(), run());
}

// Every layer kind at 100 random kink-avoiding points.
class LayerGradients : public ::testing::TestWithParam<std::string> {};

TEST_P(LayerGradients, CentralDifferences) {
  Rng rng(11);
  const std::string kind = GetParam();
  double worst = 0.0;
  for (int point = 0; point < 100; ++point) {
    std::vector<Tensor> in;
    ScalarGraph f;
    // weights for a non-trivial scalar reduction
    Tensor w;
    auto away_from_zero = [&](Shape s) {
      Tensor t = rng.normal_tensor(std::move(s));
      for (auto& v : t.data())
        if (std::abs(v) < 1e-2) v = v < 0 ? v - 1e-2 : v + 1e-2;
      return t;
    };
    if (kind == "dense") {
      in = {rng.normal_tensor({3, 4}), rng.normal_tensor({4, 2}), rng.normal_tensor({2})};
      w = rng.normal_tensor({3, 2});
      f = [&w](Tape& t, std::span<const Var> v) { return sum(mul(add_bias(matmul(v[0], v[1]), v[2]), t.constant(w))); };
    } else if (kind == "conv") {
      in = {rng.normal_tensor({2, 5, 4, 2}), rng.normal_tensor({3, 3, 2, 3}), rng.normal_tensor({3})};
      w = rng.normal_tensor({2, 3, 2, 3});
      f = [&w](Tape& t, std::span<const Var> v) { return sum(mul(add_bias(conv2d(v[0], v[1], 2), v[2]), t.constant(w))); };
    } else if (kind == "conv_transpose") {
      in = {rng.normal_tensor({2, 3, 2, 3}), rng.normal_tensor({4, 4, 2, 3}), rng.normal_tensor({2})};
      w = rng.normal_tensor({2, 6, 4, 2});
      f = [&w](Tape& t, std::span<const Var> v) {
        return sum(mul(add_bias(conv_transpose2d(v[0], v[1], 2), v[2]), t.constant(w)));
      };
    } else if (kind == "relu" || kind == "leaky_relu" || kind == "abs") {
      in = {away_from_zero({2, 3, 3})};
      w = rng.normal_tensor({2, 3, 3});
      f = [&w, kind](Tape& t, std::span<const Var> v) {
        Var y = kind == "relu" ? relu(v[0]) : kind == "abs" ? abs(v[0]) : leaky_relu(v[0], 0.2);
        return sum(mul(y, t.constant(w)));
      };
    } else if (kind == "tanh" || kind == "sigmoid") {
      in = {rng.normal_tensor({2, 5})};
      w = rng.normal_tensor({2, 5});
      f = [&w, kind](Tape& t, std::span<const Var> v) {
        return sum(mul(kind == "tanh" ? tanh(v[0]) : sigmoid(v[0]), t.constant(w)));
      };
    } else if (kind == "log") {
      in = {rng.uniform_tensor({6}, 0.2, 2.0)};
      f = [](Tape&, std::span<const Var> v) { return sum(log(v[0])); };
    } else if (kind == "clip") {
      Tensor z = rng.uniform_tensor({8}, -2.0, 2.0);
      for (auto& v : z.data())
        if (std::abs(std::abs(v) - 1.0) < 1e-2) v *= 0.9;
      in = {z};
      w = rng.normal_tensor({8});
      f = [&w](Tape& t, std::span<const Var> v) { return sum(mul(clip(v[0], -1.0, 1.0), t.constant(w))); };
    } else if (kind == "batch_norm_train") {
      in = {rng.normal_tensor({4, 2, 3}), rng.normal_tensor({3}), rng.normal_tensor({3})};
      w = rng.normal_tensor({4, 2, 3});
      f = [&w](Tape& t, std::span<const Var> v) { return sum(mul(batch_norm_train(v[0], v[1], v[2], 1e-5), t.constant(w))); };
    } else if (kind == "batch_norm_frozen") {
      in = {rng.normal_tensor({4, 3}), rng.normal_tensor({3}), rng.normal_tensor({3})};
      w = rng.normal_tensor({4, 3});
      Tensor m = rng.normal_tensor({3}), var = rng.uniform_tensor({3}, 0.5, 2.0);
      f = [&w, m, var](Tape& t, std::span<const Var> v) {
        return sum(mul(batch_norm_frozen(v[0], v[1], v[2], t.constant(m), t.constant(var)), t.constant(w)));
      };
    } else if (kind == "mask_multiply") {
      in = {rng.normal_tensor({3, 2, 2}), rng.normal_tensor({2, 2})};
      w = rng.normal_tensor({3, 2, 2});
      f = [&w](Tape& t, std::span<const Var> v) { return sum(mul(mul_broadcast(v[0], v[1]), t.constant(w))); };
    } else if (kind == "softmax_cross_entropy") {
      in = {rng.normal_tensor({5, 4})};
      f = [](Tape&, std::span<const Var> v) {
        const int labels[] = {0, 3, 1, 2, 3};
        return softmax_cross_entropy(v[0], labels);
      };
    } else if (kind == "sin_cos") {
      in = {rng.normal_tensor({4})};
      f = [](Tape&, std::span<const Var> v) { return sum(mul(sin(v[0]), cos(v[0]))); };
    }
    worst = std::max(worst, grad_check(f, in, 1e-5));
  }
  EXPECT_LE(worst, 1e-5) << kind;
}

INSTANTIATE_TEST_SUITE_P(AllKinds, LayerGradients,
                         ::testing::Values("dense", "conv", "conv_transpose", "relu", "leaky_relu", "abs", "tanh",
                                           "sigmoid", "log", "clip", "batch_norm_train", "batch_norm_frozen",
                                           "mask_multiply", "softmax_cross_entropy", "sin_cos"));

}  // namespace
}  // namespace mimicinv
