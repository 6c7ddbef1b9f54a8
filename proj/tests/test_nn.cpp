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
#include <cstdio>
#include <filesystem>

#include "mimicinv/nn.hpp"
#include "mimicinv/optim.hpp"
#include "mimicinv/param_io.hpp"

namespace mimicinv {
namespace {

namespace L = layers;

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("mimicinv_test_" + name)).string();
}

TEST(Network, RejectsBadComposition) {
  EXPECT_THROW(Network({4}, {L::Dense{5, 2}}), ShapeError);
  EXPECT_THROW(Network({6, 6, 1}, {L::Conv{3, 3, 2, 4}}), ShapeError);
  EXPECT_THROW(Network({4, 4, 1}, {L::MaskMultiply{{4, 4, 2}}}), ShapeError);
  EXPECT_THROW(Network({8}, {L::Reshape{{3, 3}}}), ShapeError);
  EXPECT_THROW(Network({4, 4, 1}, {L::Conv{3, 3, 1, 2}, L::InputResidual{{4, 4, 2}}}), ShapeError);
}

TEST(Network, FashionMnistSurrogateShapeChain) {
  Network net({28, 28, 1}, {L::Conv{5, 5, 1, 16}, L::ReLU{}, L::Conv{5, 5, 16, 1}, L::ReLU{},
                            L::MaskMultiply{{28, 28, 1}}, L::InputResidual{{28, 28, 1}}});
  const auto& s = net.activation_shapes();
  EXPECT_EQ(s[1], (Shape{28, 28, 16}));
  EXPECT_EQ(s[3], (Shape{28, 28, 1}));
  EXPECT_EQ(s[5], (Shape{28, 28, 1}));
  EXPECT_EQ(net.output_shape(), (Shape{28, 28, 1}));
}

TEST(Network, FashionMnistGeneratorShapes) {
  Network g({100}, {L::Dense{100, 1024}, L::ReLU{}, L::BatchNorm{1024}, L::Dense{1024, 128 * 7 * 7}, L::ReLU{},
                    L::BatchNorm{128 * 7 * 7}, L::Reshape{{7, 7, 128}}, L::ConvTranspose{4, 4, 64, 128, 2},
                    L::ReLU{}, L::ConvTranspose{4, 4, 1, 64, 2}, L::Tanh{}});
  EXPECT_EQ(g.activation_shapes()[8], (Shape{14, 14, 64}));
  EXPECT_EQ(g.output_shape(), (Shape{28, 28, 1}));
}

TEST(InitParams, NeutralElementsAndDeterminism) {
  Network net({4, 4, 1}, {L::Conv{3, 3, 1, 2}, L::BatchNorm{2}, L::Conv{3, 3, 2, 1}, L::MaskMultiply{{4, 4, 1}},
                          L::InputResidual{{4, 4, 1}}});
  auto p = init_params(net, 42);
  EXPECT_EQ(p.at("l03.mask"), Tensor({4, 4, 1}, 1.0));
  EXPECT_EQ(p.at("l04.gate"), Tensor({4, 4, 1}, 0.0));
  EXPECT_EQ(p.at("l00.bias"), Tensor({2}, 0.0));
  EXPECT_EQ(p.at("l01.gamma"), Tensor({2}, 1.0));
  EXPECT_EQ(p.at("l01.running_var"), Tensor({2}, 1.0));
  EXPECT_EQ(p, init_params(net, 42));
  EXPECT_NE(p, init_params(net, 43));
}

TEST(InitParams, WeightStddevIsPointZeroTwo) {
  Network net({4}, {L::Dense{4, 4}});
  double s2 = 0.0;
  std::size_t n = 0;
  for (std::uint64_t seed = 0; n < 10000; ++seed) {
    const Params p = init_params(net, seed);
    for (double w : p.at("l00.weight").data()) {
      s2 += w * w;
      ++n;
    }
  }
  const double sd = std::sqrt(s2 / static_cast<double>(n));
  EXPECT_GE(sd, 0.015);
  EXPECT_LE(sd, 0.025);
}

TEST(Apply, TanhOfZero) {
  Network net({3}, {L::Tanh{}});
  EXPECT_EQ(forward(net, {}, Tensor({2, 3})), Tensor({2, 3}));
}

TEST(Apply, InputShapeChecked) {
  Network net({3}, {L::Tanh{}});
  EXPECT_THROW(forward(net, {}, Tensor({2, 4})), ShapeError);
}

TEST(Apply, InputResidualAddsGatedInput) {
  Network net({2}, {L::Dense{2, 2}, L::InputResidual{{2}}});
  Params p = init_params(net, 1);
  p["l00.weight"] = Tensor({2, 2}, 0.0);
  p["l00.bias"] = Tensor({2}, {0.5, -0.5});
  p["l01.gate"] = Tensor({2}, {2.0, -1.0});
  auto y = forward(net, p, Tensor({1, 2}, {3.0, 4.0}));
  EXPECT_EQ(y, Tensor({1, 2}, {0.5 + 6.0, -0.5 - 4.0}));
}

TEST(Apply, PureAndBitReproducible) {
  Network net({6, 6, 1}, {L::Conv{3, 3, 1, 4}, L::LeakyReLU{0.2}, L::BatchNorm{4}, L::Conv{3, 3, 4, 1, 2}, L::Sigmoid{}});
  auto p = init_params(net, 3);
  Rng rng(4);
  Tensor x = rng.normal_tensor({3, 6, 6, 1});
  const Params before = p;
  EXPECT_EQ(forward(net, p, x), forward(net, p, x));
  EXPECT_EQ(p, before);
}

TEST(BatchNorm, FrozenUnitStatisticsIsIdentity) {
  Network net({5}, {L::BatchNorm{5}});
  auto p = init_params(net, 0);
  Rng rng(5);
  Tensor x = rng.normal_tensor({4, 5});
  EXPECT_EQ(forward(net, p, x), x);
}

TEST(BatchNorm, FreezeReproducesTrainModeOnSameBatch) {
  Network net({3, 3, 2}, {L::Conv{3, 3, 2, 3}, L::BatchNorm{3}, L::ReLU{}});
  auto p = init_params(net, 6);
  Rng rng(7);
  Tensor x = rng.normal_tensor({8, 3, 3, 2});
  Tensor train = forward(net, p, x, BatchNormMode::Train);
  freeze_batch_norm(net, p, x);
  EXPECT_LE(max_abs_diff(forward(net, p, x), train), 1e-12);
}

// Conv-heavy surrogate started near zero output; ten RMSProp steps on an L1
// reconstruction loss must lower the loss.
TEST(Apply, CelebaStyleSurrogateShortFit) {
  Network net({8, 8, 3}, {L::Conv{5, 5, 3, 16}, L::ReLU{}, L::Conv{5, 5, 16, 16}, L::ReLU{}, L::Conv{5, 5, 16, 3},
                          L::ReLU{}, L::MaskMultiply{{8, 8, 3}}, L::Tanh{}});
  auto p = init_params(net, 8);
  Rng rng(9);
  Tensor x = rng.uniform_tensor({4, 8, 8, 3}, 0.0, 1.0);
  auto loss_and_grads = [&](bool want_grads) {
    Tape t;
    auto b = bind_params(t, net, p, true);
    auto loss = sum(abs(sub(apply(net, b, t.constant(x)), t.constant(x))));
    const double v = loss.value().item();
    Params g;
    if (want_grads) g = param_grads(t.backward(loss), net, b);
    return std::make_pair(v, g);
  };
  const double initial = loss_and_grads(false).first;
  RmsProp opt;
  for (int i = 0; i < 10; ++i) opt.step(p, loss_and_grads(true).second, 1e-3);
  EXPECT_LT(loss_and_grads(false).first, initial);
}

TEST(RmsProp, ZeroGradientLeavesParams) {
  Params p{{"w", Tensor({3}, {1, 2, 3})}};
  RmsProp opt;
  opt.step(p, {{"w", Tensor({3})}}, 0.1);
  EXPECT_EQ(p.at("w"), Tensor({3}, {1, 2, 3}));
}

TEST(RmsProp, ZeroLearningRateIsIdentity) {
  Params p{{"w", Tensor({2}, {1, -2})}};
  RmsProp opt;
  opt.step(p, {{"w", Tensor({2}, {5, 7})}}, 0.0);
  EXPECT_EQ(p.at("w"), Tensor({2}, {1, -2}));
  for (double v : opt.accumulators().at("w").data()) EXPECT_GE(v, 0.0);
}

TEST(RmsProp, SingleStepHandValue) {
  Params p{{"w", Tensor::scalar(1.0)}};
  RmsProp opt(0.9, 1e-8);
  opt.step(p, {{"w", Tensor::scalar(1.0)}}, 0.1);
  EXPECT_NEAR(opt.accumulators().at("w").item(), 0.1, 1e-15);
  EXPECT_NEAR(p.at("w").item(), 0.6837722439831617505723546, 1e-12);
}

TEST(RmsProp, ThreeStepHandRecurrence) {
  // (v, theta) after each step, 25-digit recurrence with rho=0.9, eps=1e-8, lr=0.1
  const double expected[3][2] = {{0.1, 0.6837722439831617505723546},
                                 {0.115, 0.8312141957902329252841509},
                                 {0.5035, 0.5493562696793007229196564}};
  const double grads[3] = {1.0, -0.5, 2.0};
  Params p{{"w", Tensor::scalar(1.0)}};
  RmsProp opt(0.9, 1e-8);
  for (int k = 0; k < 3; ++k) {
    opt.step(p, {{"w", Tensor::scalar(grads[k])}}, 0.1);
    EXPECT_NEAR(opt.accumulators().at("w").item(), expected[k][0], 1e-12);
    EXPECT_NEAR(p.at("w").item(), expected[k][1], 1e-12);
  }
}

TEST(RmsProp, ShapeMismatch) {
  Params p{{"w", Tensor({2})}};
  RmsProp opt;
  EXPECT_THROW(opt.step(p, {{"w", Tensor({3})}}, 0.1), ShapeError);
  EXPECT_THROW(opt.step(p, {{"v", Tensor({2})}}, 0.1), ShapeError);
}

TEST(ParamFile, RoundTripIsBitExact) {
  Network net({6, 6, 1}, {L::Conv{3, 3, 1, 4}, L::BatchNorm{4}, L::Reshape{{144}}, L::Dense{144, 3}});
  auto p = init_params(net, 10);
  p["l01.running_mean"] = Tensor({4}, {-0.0, 1e-300, 3.5, -7.25});
  const auto path = temp_path("roundtrip.mgnw");
  save_params(p, path);
  EXPECT_EQ(load_params(path, net), p);
  std::filesystem::remove(path);
}

TEST(ParamFile, ExactByteLayout) {
  Params p{{"ab", Tensor({2}, {1.0, -2.0})}};
  auto bytes = encode_params(p);
  const std::vector<unsigned char> expected = {
      'M', 'G', 'N', 'W', 1, 0, 0, 0, 1, 0, 0, 0,  // magic, version, count
      2, 0, 'a', 'b', 1, 2, 0, 0, 0,                // name, rank, extent
      0, 0, 0, 0, 0, 0, 0xf0, 0x3f,                 // 1.0
      0, 0, 0, 0, 0, 0, 0x00, 0xc0};                // -2.0
  EXPECT_EQ(bytes, expected);
}

TEST(ParamFile, EmptyMapHasCountZero) {
  auto bytes = encode_params({});
  EXPECT_EQ(bytes.size(), 12u);
  EXPECT_TRUE(decode_params(bytes).empty());
}

TEST(ParamFile, CorruptMagicTruncationAndShapeTable) {
  Params p{{"w", Tensor({3}, {1, 2, 3})}};
  auto bytes = encode_params(p);
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(decode_params(bad), FormatError);
  EXPECT_THROW(decode_params(std::span(bytes).first(bytes.size() - 1)), FormatError);
  Network net({3}, {L::Dense{3, 3}});
  const auto path = temp_path("mismatch.mgnw");
  save_params(p, path);
  EXPECT_THROW(load_params(path, net), FormatError);
  std::filesystem::remove(path);
}

TEST(NetworkJson, RoundTrip) {
  Network net({14, 14, 1}, {L::Conv{4, 4, 1, 8, 2}, L::LeakyReLU{0.2}, L::Conv{4, 4, 8, 16, 2, Padding::Valid},
                            L::BatchNorm{16}, L::Reshape{{64}}, L::Dense{64, 1}, L::Sigmoid{}});
  Network back = network_from_json(network_to_json(net));
  EXPECT_EQ(network_to_json(back), network_to_json(net));
  EXPECT_EQ(back.output_shape(), net.output_shape());
}

}  // namespace
}  // namespace mimicinv
