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


// Adversarial attacks on a small classifier and recovery as an unsupervised
// preprocessing defense.

#ifndef MIMICINV_DEFENSE_HPP
#define MIMICINV_DEFENSE_HPP

#include <algorithm>
#include <cmath>
#include <vector>

#include "mimicinv/autodiff.hpp"
#include "mimicinv/datasets.hpp"
#include "mimicinv/nn.hpp"
#include "mimicinv/optim.hpp"
#include "mimicinv/recovery.hpp"

namespace mimicinv {

// ---------------------------------------------------------------- classifier

struct Classifier {
  Network net;
  Params params;

  std::size_t classes() const { return net.output_shape().at(0); }
  Tensor logits(const Tensor& x) const { return forward(net, params, x); }

  std::vector<int> predict(const Tensor& x) const {
    Tensor l = logits(x);
    const std::size_t b = l.dim(0), c = l.dim(1);
    std::vector<int> out(b);
    for (std::size_t i = 0; i < b; ++i) {
      auto row = l.data().subspan(i * c, c);
      out[i] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    }
    return out;
  }
};

/// Row-wise softmax of logits [B,C].
inline Tensor softmax(const Tensor& logits) {
  Tensor p = logits;
  const std::size_t b = p.dim(0), c = p.dim(1);
  for (std::size_t i = 0; i < b; ++i) {
    auto row = p.data().subspan(i * c, c);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (auto& v : row) z += (v = std::exp(v - mx));
    for (auto& v : row) v /= z;
  }
  return p;
}

inline double accuracy(std::span<const int> predicted, std::span<const int> labels) {
  if (predicted.size() != labels.size() || labels.empty()) throw ShapeError("accuracy: label count mismatch");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hit += predicted[i] == labels[i];
  return static_cast<double>(hit) / static_cast<double>(labels.size());
}

inline double accuracy(const Classifier& c, const Tensor& x, std::span<const int> labels) {
  return accuracy(c.predict(x), labels);
}

namespace architectures {

/// Small CNN for 14x14x1 glyphs.
inline Network glyph_classifier(std::size_t classes = kGlyphClasses) {
  namespace L = layers;
  return Network({14, 14, 1}, {L::Conv{3, 3, 1, 8, 2}, L::ReLU{}, L::Reshape{{7 * 7 * 8}}, L::Dense{7 * 7 * 8, 32},
                               L::ReLU{}, L::Dense{32, classes}});
}

}  // namespace architectures

struct ClassifierOptions {
  std::size_t steps = 500;
  std::size_t batch = 32;
  double lr = 1e-3;
};

struct ClassifierTraining {
  Classifier classifier;
  std::vector<double> loss;
  /// Minibatch accuracy before each step.
  std::vector<double> accuracy;
};

/// Mean cross-entropy minimized with RMSProp on random minibatches.
inline ClassifierTraining train_classifier(const Tensor& x, std::span<const int> labels, const Network& net,
                                           const ClassifierOptions& opt, Rng& rng) {
  if (x.rank() < 2 || x.dim(0) != labels.size()) throw ShapeError("train_classifier: data/label count mismatch");
  const std::size_t classes = net.output_shape().at(0);
  for (int l : labels)
    if (l < 0 || static_cast<std::size_t>(l) >= classes) throw ShapeError("train_classifier: label out of range");
  ClassifierTraining out{Classifier{net, init_params(net, rng)}, {}, {}};
  RmsProp optim;
  const std::size_t n = x.dim(0);
  std::vector<std::size_t> idx(std::min(opt.batch, n));
  std::vector<int> y(idx.size());
  for (std::size_t step = 0; step < opt.steps; ++step) {
    for (std::size_t i = 0; i < idx.size(); ++i) {
      idx[i] = rng.index(n);
      y[i] = labels[idx[i]];
    }
    Tape tape;
    auto bound = bind_params(tape, net, out.classifier.params, true);
    Var logits = apply(net, bound, tape.constant(detail::gather_rows(x, idx)));
    Var loss = softmax_cross_entropy(logits, y);
    std::vector<int> pred(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      auto row = logits.value().data().subspan(i * classes, classes);
      pred[i] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    }
    out.accuracy.push_back(accuracy(pred, y));
    out.loss.push_back(loss.value().item());
    auto grads = tape.backward(loss);
    optim.step(out.classifier.params, param_grads(grads, net, bound), opt.lr);
  }
  return out;
}

/// Writes `path` and its architecture sidecar `path`.json.
inline void save_classifier(const Classifier& c, const std::string& path) {
  save_network_prior(c.net, c.params, path, "classifier");
}

inline Classifier load_classifier(const std::string& path) {
  Network net = detail::load_sidecar(path, "classifier");
  Params p = load_params(path, net);
  return Classifier{std::move(net), std::move(p)};
}

// ---------------------------------------------------------------- attacks

/// Gradient of the mean cross-entropy wrt the input batch.
inline Tensor input_gradient(const Classifier& c, const Tensor& x, std::span<const int> labels) {
  Tape tape;
  auto bound = bind_params(tape, c.net, c.params, false);
  Var xv = tape.leaf(x);
  auto grads = tape.backward(softmax_cross_entropy(apply(c.net, bound, xv), labels));
  return grads.wrt(xv);
}

namespace detail {
inline double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }
}  // namespace detail

/// X + eps * sign(grad), clipped to [-1,1].
inline Tensor fgsm(const Classifier& c, const Tensor& x, std::span<const int> labels, double eps) {
  if (eps < 0.0) throw std::invalid_argument("fgsm: eps must be >= 0");
  Tensor g = input_gradient(c, x, labels);
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(x[i] + eps * detail::sign(g[i]), -1.0, 1.0);
  return out;
}

/// Iterated sign steps, each projected onto the eps-ball around X and then
/// onto [-1,1].
inline Tensor bim(const Classifier& c, const Tensor& x, std::span<const int> labels, double eps, std::size_t steps,
                  double step_size) {
  if (eps < 0.0) throw std::invalid_argument("bim: eps must be >= 0");
  if (steps < 1) throw std::invalid_argument("bim: steps must be >= 1");
  Tensor cur = x;
  for (std::size_t s = 0; s < steps; ++s) {
    Tensor g = input_gradient(c, cur, labels);
    for (std::size_t i = 0; i < cur.size(); ++i) {
      double v = cur[i] + step_size * detail::sign(g[i]);
      v = std::clamp(v, x[i] - eps, x[i] + eps);
      cur[i] = std::clamp(v, -1.0, 1.0);
    }
  }
  return cur;
}

enum class UniversalSign {
  AsWritten,  // nu = mean(X_i - adv_i), pointing away from the adversarial direction
  Corrected,  // nu = mean(adv_i - X_i)
};

inline constexpr std::size_t kUniversalSources = 15;

/// Mean FGSM perturbation over the source images, as a single image [H,W,C].
inline Tensor universal_perturbation(const Classifier& c, const Tensor& x, std::span<const int> labels, double eps,
                                     UniversalSign sign = UniversalSign::AsWritten) {
  if (x.rank() < 2 || x.dim(0) < 1) throw ShapeError("universal_perturbation: need at least one source image");
  Tensor adv = fgsm(c, x, labels, eps);
  const std::size_t n = x.dim(0), d = x.size() / n;
  Tensor nu(Shape(x.shape().begin() + 1, x.shape().end()));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < d; ++k) nu[k] += x[i * d + k] - adv[i * d + k];
  const double s = (sign == UniversalSign::AsWritten ? 1.0 : -1.0) / static_cast<double>(n);
  for (auto& v : nu.data()) v *= s;
  return nu;
}

/// X + alpha * nu for every image, clipped to [-1,1].
inline Tensor apply_universal(const Tensor& x, const Tensor& nu, double alpha) {
  if (x.rank() < 2 || Shape(x.shape().begin() + 1, x.shape().end()) != nu.shape()) {
    throw ShapeError("apply_universal: perturbation " + to_string(nu.shape()) + " vs images " + to_string(x.shape()));
  }
  Tensor out = x;
  const std::size_t d = nu.size();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(x[i] + alpha * nu[i % d], -1.0, 1.0);
  return out;
}

// ---------------------------------------------------------------- defense

/// Recover every batch of `batch_size` observations with the mimicking loop
/// and classify the recovered images. Labels are never consulted. Batch b
/// uses seed cfg.seed + b.
inline std::vector<int> clean_and_predict(const Tensor& y, const Generator& g, const Discriminator* d,
                                          const SurrogateSpec& spec, RecoveryConfig cfg, const Classifier& classifier,
                                          std::size_t batch_size = 25, Tensor* recovered = nullptr) {
  if (batch_size < 1) throw std::invalid_argument("clean_and_predict: batch size must be >= 1");
  const std::size_t n = y.dim(0);
  const std::uint64_t base_seed = cfg.seed;
  cfg.observations = 0;
  std::vector<int> out;
  out.reserve(n);
  std::vector<Tensor> parts;
  for (std::size_t b = 0, start = 0; start < n; ++b, start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    cfg.seed = base_seed + b;
    auto r = run_mimicgan(y.rows(start, end), g, d, spec, cfg);
    auto p = classifier.predict(r.x_hat);
    out.insert(out.end(), p.begin(), p.end());
    if (recovered) parts.push_back(std::move(r.x_hat));
  }
  if (recovered) {
    Tensor all = parts.front();
    for (std::size_t i = 1; i < parts.size(); ++i) all = concat_rows(all, parts[i]);
    *recovered = std::move(all);
  }
  return out;
}

inline constexpr const char* kDefenseCsvHeader =
    "scenario,attack,epsilon,alpha,accuracy_clean,accuracy_attacked,accuracy_defended";

struct DefenseRecord {
  std::string scenario;
  std::string attack;
  double epsilon = 0.0;
  double alpha = 0.0;
  double accuracy_clean = 0.0;
  double accuracy_attacked = 0.0;
  double accuracy_defended = 0.0;
};

inline void write_defense_csv(std::ostream& os, const std::vector<DefenseRecord>& rows) {
  os << kDefenseCsvHeader << "\n";
  for (const auto& r : rows) {
    os << r.scenario << "," << r.attack << "," << detail::csv_number(r.epsilon) << "," << detail::csv_number(r.alpha)
       << "," << detail::csv_number(r.accuracy_clean) << "," << detail::csv_number(r.accuracy_attacked) << ","
       << detail::csv_number(r.accuracy_defended) << "\n";
  }
}

}  // namespace mimicinv

#endif  // MIMICINV_DEFENSE_HPP
