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
#include <sstream>

#include "mimicinv/defense.hpp"

namespace mimicinv {
namespace {

/// One classifier shared by the tests below; training takes about a second.
struct Fixture {
  LabeledImages train, test;
  ClassifierTraining trained;

  Fixture() {
    Rng rng(1);
    train = glyphs(1000, rng);
    test = glyphs(100, rng);
    ClassifierOptions opt;
    opt.steps = 300;
    trained = train_classifier(train.images, train.labels, architectures::glyph_classifier(), opt, rng);
  }
  const Classifier& classifier() const { return trained.classifier; }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

double mean_ce(const Classifier& c, const Tensor& x, std::span<const int> labels) {
  Tensor p = softmax(c.logits(x));
  double s = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) s -= std::log(p[i * c.classes() + static_cast<std::size_t>(labels[i])]);
  return s / static_cast<double>(labels.size());
}

TEST(Softmax, RowsSumToOneAndShiftInvariant) {
  Rng rng(1);
  Tensor l = rng.normal_tensor({3, 4}, 5.0);
  Tensor p = softmax(l);
  Tensor l2 = l;
  for (auto& v : l2.data()) v += 100.0;
  EXPECT_LE(max_abs_diff(p, softmax(l2)), 1e-15);
  for (std::size_t i = 0; i < 3; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < 4; ++j) s += p[i * 4 + j];
    EXPECT_NEAR(s, 1.0, 1e-15);
  }
}

TEST(Accuracy, CountsMatchesAndChecksSizes) {
  std::vector<int> p{0, 1, 2, 3}, y{0, 1, 0, 0};
  EXPECT_EQ(accuracy(p, y), 0.5);
  EXPECT_THROW(accuracy(p, std::vector<int>{0}), ShapeError);
}

TEST(Classifier, LearnsGlyphs) {
  const auto& f = fixture();
  EXPECT_GE(accuracy(f.classifier(), f.test.images, f.test.labels), 0.95);
  EXPECT_LT(f.trained.loss.back(), f.trained.loss.front());
  EXPECT_EQ(f.classifier().classes(), 4u);
}

TEST(Classifier, RejectsBadLabels) {
  Rng rng(0);
  std::vector<int> bad{0, 7};
  EXPECT_THROW(train_classifier(Tensor({2, 14, 14, 1}), bad, architectures::glyph_classifier(), {}, rng), ShapeError);
}

// ------------------------------------------------------------------ attacks

TEST(Fgsm, ZeroEpsilonIsIdentity) {
  const auto& f = fixture();
  Tensor x = f.test.images.rows(0, 10);
  std::span<const int> y(f.test.labels.data(), 10);
  EXPECT_EQ(fgsm(f.classifier(), x, y, 0.0), x);
  EXPECT_EQ(bim(f.classifier(), x, y, 0.0, 5, 0.05), x);
  EXPECT_THROW(fgsm(f.classifier(), x, y, -0.1), std::invalid_argument);
}

TEST(Fgsm, StaysInBallAndRange) {
  const auto& f = fixture();
  Tensor x = f.test.images.rows(0, 20);
  std::span<const int> y(f.test.labels.data(), 20);
  for (double eps : {0.05, 0.3}) {
    for (const Tensor& adv : {fgsm(f.classifier(), x, y, eps), bim(f.classifier(), x, y, eps, 10, eps / 4)}) {
      for (std::size_t i = 0; i < x.size(); ++i) {
        EXPECT_LE(std::abs(adv[i] - x[i]), eps + 1e-15);
        EXPECT_GE(adv[i], -1.0);
        EXPECT_LE(adv[i], 1.0);
      }
    }
  }
}

TEST(Fgsm, StepFollowsGradientSign) {
  const auto& f = fixture();
  Rng rng(2);
  // interior inputs so clipping never bites
  Tensor x = rng.uniform_tensor({4, 14, 14, 1}, -0.5, 0.5);
  std::vector<int> y{0, 1, 2, 3};
  Tensor g = input_gradient(f.classifier(), x, y);
  Tensor adv = fgsm(f.classifier(), x, y, 0.1);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double expect = g[i] > 0 ? 0.1 : (g[i] < 0 ? -0.1 : 0.0);
    EXPECT_NEAR(adv[i] - x[i], expect, 1e-15);
  }
}

TEST(Fgsm, RaisesTheLoss) {
  const auto& f = fixture();
  Tensor x = f.test.images.rows(0, 40);
  std::span<const int> y(f.test.labels.data(), 40);
  const double before = mean_ce(f.classifier(), x, y);
  EXPECT_GT(mean_ce(f.classifier(), fgsm(f.classifier(), x, y, 0.05), y), before);
  EXPECT_GT(mean_ce(f.classifier(), bim(f.classifier(), x, y, 0.05, 5, 0.02), y), before);
}

TEST(Universal, BoundedBySourceEpsilonAndSignSwitch) {
  const auto& f = fixture();
  Tensor src = f.train.images.rows(0, kUniversalSources);
  std::span<const int> y(f.train.labels.data(), kUniversalSources);
  Tensor a = universal_perturbation(f.classifier(), src, y, 0.3);
  Tensor b = universal_perturbation(f.classifier(), src, y, 0.3, UniversalSign::Corrected);
  EXPECT_EQ(a.shape(), (Shape{14, 14, 1}));
  double mx = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    mx = std::max(mx, std::abs(a[i]));
    EXPECT_EQ(a[i], -b[i]);
  }
  EXPECT_LE(mx, 0.3 + 1e-15);
  EXPECT_GT(mx, 0.0);
}

TEST(Universal, ApplyIsIdentityAtZeroAndLinearBeforeClipping) {
  Rng rng(3);
  Tensor x = rng.uniform_tensor({3, 14, 14, 1}, -0.5, 0.5);
  Tensor nu = rng.uniform_tensor({14, 14, 1}, -0.1, 0.1);
  EXPECT_EQ(apply_universal(x, nu, 0.0), x);
  Tensor one = apply_universal(x, nu, 1.0), two = apply_universal(x, nu, 2.0);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(two[i] - x[i], 2.0 * (one[i] - x[i]), 1e-15);
  Tensor big = apply_universal(x, nu, 100.0);
  for (double v : big.data()) EXPECT_LE(std::abs(v), 1.0);
  EXPECT_THROW(apply_universal(x, Tensor({14, 14, 3}), 1.0), ShapeError);
}

// ------------------------------------------------------------------ clean and predict

TEST(CleanAndPredict, DeterministicAndLabelFree) {
  const auto& f = fixture();
  Network gn = architectures::glyph_generator(8);
  Generator g(NetworkGenerator{gn, init_params(gn, 4)});
  RecoveryConfig cfg;
  cfg.outer_iters = 2;
  cfg.surrogate_steps = 1;
  cfg.latent_steps = 2;
  cfg.init_samples = 20;
  cfg.seed = 5;
  Tensor y = f.test.images.rows(0, 7);
  Tensor rec_a, rec_b;
  auto a = clean_and_predict(y, g, nullptr, SurrogateSpec::residual_style(), cfg, f.classifier(), 3, &rec_a);
  auto b = clean_and_predict(y, g, nullptr, SurrogateSpec::residual_style(), cfg, f.classifier(), 3, &rec_b);
  EXPECT_EQ(a, b);
  EXPECT_EQ(rec_a, rec_b);
  EXPECT_EQ(a.size(), 7u);
  EXPECT_EQ(rec_a.shape(), y.shape());
  EXPECT_EQ(a, f.classifier().predict(rec_a));
  // batch b runs with seed cfg.seed + b
  RecoveryConfig c2 = cfg;
  c2.seed = cfg.seed + 2;
  c2.observations = 1;
  auto last = run_mimicgan(y.rows(6, 7), g, nullptr, SurrogateSpec::residual_style(), c2);
  EXPECT_EQ(last.x_hat, rec_a.rows(6, 7));
}

TEST(DefenseCsv, Header) {
  std::ostringstream os;
  write_defense_csv(os, {{"glyphs", "universal_fgsm", 0.3, -6.0, 1.0, 0.47, 0.74}});
  EXPECT_EQ(os.str(),
            "scenario,attack,epsilon,alpha,accuracy_clean,accuracy_attacked,accuracy_defended\n"
            "glyphs,universal_fgsm,0.29999999999999999,-6,1,0.46999999999999997,0.73999999999999999\n");
}

}  // namespace
}  // namespace mimicinv
