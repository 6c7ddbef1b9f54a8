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

#ifndef MIMICINV_GRADCHECK_HPP
#define MIMICINV_GRADCHECK_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "mimicinv/autodiff.hpp"

namespace mimicinv {

/// A scalar-valued computation over tape variables.
using ScalarGraph = std::function<Var(Tape&, std::span<const Var>)>;

/// Evaluate `graph` on fresh leaves and return (value, gradient per input).
inline std::pair<Tensor, std::vector<Tensor>> value_and_grad(const ScalarGraph& graph,
                                                             std::span<const Tensor> inputs) {
  Tape tape;
  std::vector<Var> leaves;
  leaves.reserve(inputs.size());
  for (const auto& x : inputs) leaves.push_back(tape.leaf(x));
  Var out = graph(tape, leaves);
  Tensor value = out.value();
  auto grads = tape.backward(out);
  std::vector<Tensor> g;
  g.reserve(leaves.size());
  for (const auto& l : leaves) g.push_back(grads.wrt(l));
  return {std::move(value), std::move(g)};
}

/// Max over all input coordinates of
///   |analytic - central difference| / max(1, |analytic|).
inline double grad_check(const ScalarGraph& graph, std::span<const Tensor> inputs, double h = 1e-5) {
  if (!(h > 0.0)) throw std::invalid_argument("grad_check: step must be positive");
  auto [value, analytic] = value_and_grad(graph, inputs);
  if (value.size() != 1) {
    throw ShapeError("grad_check needs a scalar graph, got " + to_string(value.shape()));
  }
  auto eval = [&](const std::vector<Tensor>& xs) {
    Tape tape;
    std::vector<Var> leaves;
    for (const auto& x : xs) leaves.push_back(tape.constant(x));
    return graph(tape, leaves).value().item();
  };
  std::vector<Tensor> probe(inputs.begin(), inputs.end());
  double worst = 0.0;
  for (std::size_t k = 0; k < probe.size(); ++k) {
    for (std::size_t i = 0; i < probe[k].size(); ++i) {
      const double x0 = probe[k][i];
      probe[k][i] = x0 + h;
      const double fp = eval(probe);
      probe[k][i] = x0 - h;
      const double fm = eval(probe);
      probe[k][i] = x0;
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = analytic[k][i];
      worst = std::max(worst, std::abs(a - numeric) / std::max(1.0, std::abs(a)));
    }
  }
  return worst;
}

/// Number of input coordinates whose central differences at h and h/2
/// disagree by more than `tol` (relative). A nonzero count means some stencil
/// straddles a kink (ReLU, abs, clip) and the point should be redrawn. Only
/// finite differences are compared, never the analytic gradient.
inline std::size_t kinked_coordinates(const ScalarGraph& graph, std::span<const Tensor> inputs, double h = 1e-5,
                                      double tol = 1e-6) {
  auto eval = [&](const std::vector<Tensor>& xs) {
    Tape tape;
    std::vector<Var> leaves;
    for (const auto& x : xs) leaves.push_back(tape.constant(x));
    return graph(tape, leaves).value().item();
  };
  std::vector<Tensor> probe(inputs.begin(), inputs.end());
  std::size_t kinked = 0;
  for (auto& t : probe) {
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double x0 = t[i];
      auto diff = [&](double s) {
        t[i] = x0 + s;
        const double fp = eval(probe);
        t[i] = x0 - s;
        const double fm = eval(probe);
        t[i] = x0;
        return (fp - fm) / (2.0 * s);
      };
      const double d1 = diff(h), d2 = diff(h / 2.0);
      kinked += std::abs(d1 - d2) > tol * std::max(1.0, std::abs(d1));
    }
  }
  return kinked;
}

}  // namespace mimicinv

#endif  // MIMICINV_GRADCHECK_HPP
