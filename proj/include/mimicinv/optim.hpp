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

#ifndef MIMICINV_OPTIM_HPP
#define MIMICINV_OPTIM_HPP

#include <cmath>
#include <string>

#include "mimicinv/nn.hpp"

namespace mimicinv {

/// RMSProp without momentum:
///   v <- rho * v + (1 - rho) * g^2
///   theta <- theta - lr * g / (sqrt(v) + eps)
/// Accumulators start at zero and persist across calls.
class RmsProp {
 public:
  explicit RmsProp(double rho = 0.9, double eps = 1e-8) : rho_(rho), eps_(eps) {
    if (!(rho >= 0.0 && rho < 1.0)) throw std::invalid_argument("RmsProp: rho must be in [0,1)");
    if (!(eps > 0.0)) throw std::invalid_argument("RmsProp: eps must be positive");
  }

  double rho() const noexcept { return rho_; }
  double eps() const noexcept { return eps_; }
  const Params& accumulators() const noexcept { return accum_; }

  /// Update one named tensor in place.
  void step(const std::string& name, Tensor& param, const Tensor& grad, double lr) {
    if (grad.shape() != param.shape()) {
      throw ShapeError("RmsProp: gradient of " + name + " has shape " + to_string(grad.shape()) +
                       ", parameter " + to_string(param.shape()));
    }
    auto [it, fresh] = accum_.try_emplace(name, param.shape());
    if (!fresh && it->second.shape() != param.shape()) {
      throw ShapeError("RmsProp: accumulator of " + name + " changed shape");
    }
    auto v = it->second.data();
    auto p = param.data();
    auto g = grad.data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      v[i] = rho_ * v[i] + (1.0 - rho_) * g[i] * g[i];
      p[i] -= lr * g[i] / (std::sqrt(v[i]) + eps_);
    }
  }

  /// Update every parameter that has an entry in `grads`.
  void step(Params& params, const Params& grads, double lr) {
    for (const auto& [name, g] : grads) {
      auto it = params.find(name);
      if (it == params.end()) throw ShapeError("RmsProp: gradient for unknown parameter " + name);
      step(name, it->second, g, lr);
    }
  }

 private:
  double rho_;
  double eps_;
  Params accum_;
};

}  // namespace mimicinv

#endif  // MIMICINV_OPTIM_HPP
