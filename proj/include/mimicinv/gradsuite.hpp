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


// Gradient fidelity suite: every layer kind in isolation plus the full
// recovery objective, each at many random points. Points whose difference
// stencils straddle a kink are redrawn rather than scored.

#ifndef MIMICINV_GRADSUITE_HPP
#define MIMICINV_GRADSUITE_HPP

#include <functional>
#include <string>
#include <vector>

#include "mimicinv/gradcheck.hpp"
#include "mimicinv/nn.hpp"
#include "mimicinv/recovery.hpp"

namespace mimicinv {

struct GradCaseResult {
  std::string name;
  std::size_t points = 0;
  std::size_t redraws = 0;
  double max_rel_error = 0.0;
};

struct GradSuiteOptions {
  std::size_t points = 100;
  double step = 1e-6;
  /// Give up on a case after this many kinked draws per point.
  std::size_t max_redraws_per_point = 20;
  std::uint64_t seed = 0;
};

namespace detail {

/// One scored point: (graph, inputs) drawn by `draw`.
using PointDraw = std::function<std::pair<ScalarGraph, std::vector<Tensor>>(Rng&)>;

inline GradCaseResult run_case(const std::string& name, const PointDraw& draw, const GradSuiteOptions& opt, Rng& rng) {
  GradCaseResult r{name, 0, 0, 0.0};
  while (r.points < opt.points) {
    auto [graph, inputs] = draw(rng);
    if (kinked_coordinates(graph, inputs, opt.step) > 0) {
      if (++r.redraws > opt.max_redraws_per_point * opt.points) {
        throw NumericError("grad suite: case '" + name + "' could not find kink-free points");
      }
      continue;
    }
    r.max_rel_error = std::max(r.max_rel_error, grad_check(graph, inputs, opt.step));
    ++r.points;
  }
  return r;
}

/// Random values for every parameter; batch-norm variances stay positive.
inline Params random_params(const Network& net, Rng& rng) {
  Params p = init_params(net, rng);
  for (auto& [name, t] : p) {
    const bool var = name.ends_with("running_var");
    for (auto& v : t.data()) v = var ? rng.uniform(0.5, 1.5) : rng.uniform(-0.8, 0.8);
  }
  return p;
}

/// sum(R * net(x)) over the input and every parameter, R a fixed random readout.
inline PointDraw network_case(Network net, BatchNormMode mode, std::size_t batch) {
  return [net = std::move(net), mode, batch](Rng& rng) {
    Params p = random_params(net, rng);
    Shape xs = net.input_shape();
    xs.insert(xs.begin(), batch);
    Shape os = net.output_shape();
    os.insert(os.begin(), batch);
    Tensor readout = rng.uniform_tensor(os, -1.0, 1.0);
    // Running statistics are not differentiable; they ride along as constants.
    std::vector<std::string> names;
    Params fixed;
    std::vector<Tensor> inputs{rng.uniform_tensor(xs, -1.0, 1.0)};
    for (const auto& s : net.param_slots()) {
      if (s.trainable) {
        names.push_back(s.name), inputs.push_back(p.at(s.name));
      } else {
        fixed.emplace(s.name, p.at(s.name));
      }
    }
    ScalarGraph g = [net, mode, names, fixed, readout](Tape& tape, std::span<const Var> v) {
      BoundParams b;
      for (std::size_t i = 0; i < names.size(); ++i) b.emplace(names[i], v[i + 1]);
      for (const auto& [k, t] : fixed) b.emplace(k, tape.constant(t));
      return sum(mul(apply(net, b, v[0], ApplyOptions{mode, nullptr}), tape.constant(readout)));
    };
    return std::pair{std::move(g), std::move(inputs)};
  };
}

/// L = L_obs + lambda_adv L_adv + lambda_I L_I on a small prior, wrt the
/// surrogate parameters and the latents together.
inline PointDraw total_loss_case(FinalActivation final_activation) {
  namespace L = layers;
  Network gen({3}, {L::Dense{3, 72}, L::ReLU{}, L::Reshape{{6, 6, 2}}, L::Conv{3, 3, 2, 1, 1}, L::Tanh{}});
  Network disc({6, 6, 1}, {L::Conv{3, 3, 1, 2, 2}, L::LeakyReLU{0.2}, L::Reshape{{18}}, L::Dense{18, 1}, L::Sigmoid{}});
  SurrogateSpec spec;
  spec.conv_layers = 2;
  spec.filters = 2;
  spec.kernel = 3;
  spec.final_activation = final_activation;
  spec.input_residual = true;
  Network sur = build_surrogate(spec, {6, 6, 1});
  return [gen, disc, sur](Rng& rng) {
    auto g = std::make_shared<Generator>(NetworkGenerator{gen, random_params(gen, rng)});
    auto d = std::make_shared<Discriminator>(Discriminator{disc, random_params(disc, rng)});
    Params theta = random_params(sur, rng);
    Tensor y = rng.uniform_tensor({2, 6, 6, 1}, -1.0, 1.0);
    RecoveryConfig cfg;
    cfg.lambda_adv = 0.5;
    cfg.lambda_identity = 0.3;
    std::vector<std::string> names;
    std::vector<Tensor> inputs{rng.uniform_tensor({2, 3}, -0.9, 0.9)};
    for (const auto& [k, t] : theta) names.push_back(k), inputs.push_back(t);
    ScalarGraph graph = [g, d, sur, names, y, cfg](Tape& tape, std::span<const Var> v) {
      BoundParams b;
      for (std::size_t i = 0; i < names.size(); ++i) b.emplace(names[i], v[i + 1]);
      return build_loss(tape.constant(y), v[0], *g, d.get(), &sur, &b, cfg).total;
    };
    return std::pair{std::move(graph), std::move(inputs)};
  };
}

}  // namespace detail

/// Runs every case; results in a fixed order.
inline std::vector<GradCaseResult> run_grad_suite(const GradSuiteOptions& opt = {}) {
  namespace L = layers;
  using detail::network_case;
  const BatchNormMode frozen = BatchNormMode::Frozen, train = BatchNormMode::Train;
  const std::vector<std::pair<std::string, detail::PointDraw>> cases = {
      {"dense", network_case(Network({5}, {L::Dense{5, 4}}), frozen, 3)},
      {"conv_same", network_case(Network({5, 5, 2}, {L::Conv{3, 3, 2, 3, 1, Padding::Same}}), frozen, 2)},
      {"conv_valid_stride2", network_case(Network({6, 6, 2}, {L::Conv{3, 3, 2, 2, 2, Padding::Valid}}), frozen, 2)},
      {"conv_transpose", network_case(Network({3, 3, 2}, {L::ConvTranspose{4, 4, 2, 2, 2}}), frozen, 2)},
      {"relu", network_case(Network({4, 4, 2}, {L::Conv{3, 3, 2, 2, 1}, L::ReLU{}}), frozen, 2)},
      {"leaky_relu", network_case(Network({4, 4, 2}, {L::Conv{3, 3, 2, 2, 1}, L::LeakyReLU{0.2}}), frozen, 2)},
      {"tanh", network_case(Network({6}, {L::Dense{6, 4}, L::Tanh{}}), frozen, 3)},
      {"sigmoid", network_case(Network({6}, {L::Dense{6, 4}, L::Sigmoid{}}), frozen, 3)},
      {"batch_norm_train", network_case(Network({3, 3, 2}, {L::BatchNorm{2}}), train, 3)},
      {"batch_norm_frozen", network_case(Network({3, 3, 2}, {L::BatchNorm{2}}), frozen, 3)},
      {"mask_multiply", network_case(Network({4, 4, 2}, {L::Tanh{}, L::MaskMultiply{{4, 4, 2}}}), frozen, 2)},
      {"input_residual",
       network_case(Network({4, 4, 1}, {L::Conv{3, 3, 1, 1, 1}, L::Tanh{}, L::InputResidual{{4, 4, 1}}}), frozen, 2)},
      {"reshape", network_case(Network({2, 3, 2}, {L::Reshape{{12}}, L::Dense{12, 3}}), frozen, 2)},
      {"total_loss_relu_surrogate", detail::total_loss_case(FinalActivation::ReLU)},
      {"total_loss_tanh_surrogate", detail::total_loss_case(FinalActivation::Tanh)},
  };
  Rng rng(opt.seed);
  std::vector<GradCaseResult> out;
  for (const auto& [name, draw] : cases) {
    Rng case_rng = rng.split();
    out.push_back(detail::run_case(name, draw, opt, case_rng));
  }
  return out;
}

}  // namespace mimicinv

#endif  // MIMICINV_GRADSUITE_HPP
