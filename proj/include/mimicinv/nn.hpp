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

#ifndef MIMICINV_NN_HPP
#define MIMICINV_NN_HPP

#include <cstdio>
#include <map>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "mimicinv/autodiff.hpp"
#include "mimicinv/rng.hpp"

namespace mimicinv {

namespace layers {

struct Dense {
  std::size_t in = 0, out = 0;
};
struct Conv {
  std::size_t kh = 0, kw = 0, cin = 0, cout = 0, stride = 1;
  Padding padding = Padding::Same;
};
/// Kernel layout [kh,kw,cout,cin].
struct ConvTranspose {
  std::size_t kh = 0, kw = 0, cout = 0, cin = 0, stride = 1;
  Padding padding = Padding::Same;
};
struct ReLU {};
struct LeakyReLU {
  double alpha = 0.2;
};
struct Tanh {};
struct Sigmoid {};
struct BatchNorm {
  std::size_t channels = 0;
};
/// Learned elementwise mask, no bias.
struct MaskMultiply {
  Shape shape;
};
/// out = previous_activation + W * network_input, W learned, no bias.
struct InputResidual {
  Shape shape;
};
/// Per-sample reshape.
struct Reshape {
  Shape shape;
};

}  // namespace layers

using LayerSpec =
    std::variant<layers::Dense, layers::Conv, layers::ConvTranspose, layers::ReLU,
                 layers::LeakyReLU, layers::Tanh, layers::Sigmoid, layers::BatchNorm,
                 layers::MaskMultiply, layers::InputResidual, layers::Reshape>;

/// Named parameter set. Ordered, so iteration (and files) are deterministic.
using Params = std::map<std::string, Tensor>;
using BoundParams = std::map<std::string, Var>;

enum class BatchNormMode { Train, Frozen };

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kInitStddev = 0.02;

/// One parameter slot of a network.
struct ParamSlot {
  std::string name;
  Shape shape;
  enum class Init { Normal, Zero, One } init;
  bool trainable;
};

/// A validated layer stack over a fixed per-sample input shape.
class Network {
 public:
  Network() = default;

  Network(Shape input_shape, std::vector<LayerSpec> layer_specs)
      : input_shape_(std::move(input_shape)), layers_(std::move(layer_specs)) {
    shapes_.push_back(input_shape_);
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      shapes_.push_back(std::visit(
          [&](const auto& l) { return infer(i, l, shapes_.back()); }, layers_[i]));
    }
  }

  const Shape& input_shape() const noexcept { return input_shape_; }
  const Shape& output_shape() const noexcept { return shapes_.back(); }
  const std::vector<LayerSpec>& layers() const noexcept { return layers_; }
  /// Activation shape after layer i is activation_shapes()[i + 1].
  const std::vector<Shape>& activation_shapes() const noexcept { return shapes_; }
  bool empty() const noexcept { return layers_.empty(); }

  static std::string param_name(std::size_t layer, const char* field) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "l%02zu.", layer);
    return std::string(buf) + field;
  }

  std::vector<ParamSlot> param_slots() const {
    using Init = ParamSlot::Init;
    std::vector<ParamSlot> slots;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      std::visit(
          [&](const auto& l) {
            using L = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<L, layers::Dense>) {
              slots.push_back({param_name(i, "weight"), {l.in, l.out}, Init::Normal, true});
              slots.push_back({param_name(i, "bias"), {l.out}, Init::Zero, true});
            } else if constexpr (std::is_same_v<L, layers::Conv>) {
              slots.push_back({param_name(i, "weight"), {l.kh, l.kw, l.cin, l.cout}, Init::Normal, true});
              slots.push_back({param_name(i, "bias"), {l.cout}, Init::Zero, true});
            } else if constexpr (std::is_same_v<L, layers::ConvTranspose>) {
              slots.push_back({param_name(i, "weight"), {l.kh, l.kw, l.cout, l.cin}, Init::Normal, true});
              slots.push_back({param_name(i, "bias"), {l.cout}, Init::Zero, true});
            } else if constexpr (std::is_same_v<L, layers::BatchNorm>) {
              slots.push_back({param_name(i, "gamma"), {l.channels}, Init::One, true});
              slots.push_back({param_name(i, "beta"), {l.channels}, Init::Zero, true});
              slots.push_back({param_name(i, "running_mean"), {l.channels}, Init::Zero, false});
              slots.push_back({param_name(i, "running_var"), {l.channels}, Init::One, false});
            } else if constexpr (std::is_same_v<L, layers::MaskMultiply>) {
              slots.push_back({param_name(i, "mask"), l.shape, Init::One, true});
            } else if constexpr (std::is_same_v<L, layers::InputResidual>) {
              slots.push_back({param_name(i, "gate"), l.shape, Init::Zero, true});
            }
          },
          layers_[i]);
    }
    return slots;
  }

  std::vector<std::string> trainable_names() const {
    std::vector<std::string> names;
    for (auto& s : param_slots())
      if (s.trainable) names.push_back(s.name);
    return names;
  }

 private:
  static ShapeError layer_error(std::size_t i, const std::string& what) {
    return ShapeError("layer " + std::to_string(i) + ": " + what);
  }

  Shape infer(std::size_t i, const layers::Dense& l, const Shape& in) const {
    if (in != Shape{l.in}) throw layer_error(i, "dense expects (" + std::to_string(l.in) + "), got " + to_string(in));
    if (l.out == 0) throw layer_error(i, "dense with zero outputs");
    return {l.out};
  }
  Shape infer(std::size_t i, const layers::Conv& l, const Shape& in) const {
    if (in.size() != 3 || in[2] != l.cin) throw layer_error(i, "conv expects (H,W," + std::to_string(l.cin) + "), got " + to_string(in));
    if (l.cout == 0) throw layer_error(i, "conv with zero filters");
    auto g = kernels::ConvGeometry::make(in[0], in[1], l.kh, l.kw, l.stride, l.padding);
    return {g.out_h, g.out_w, l.cout};
  }
  Shape infer(std::size_t i, const layers::ConvTranspose& l, const Shape& in) const {
    if (in.size() != 3 || in[2] != l.cin) throw layer_error(i, "conv_transpose expects (h,w," + std::to_string(l.cin) + "), got " + to_string(in));
    if (l.cout == 0) throw layer_error(i, "conv_transpose with zero filters");
    auto g = kernels::ConvGeometry::for_transpose(in[0], in[1], l.kh, l.kw, l.stride, l.padding);
    return {g.in_h, g.in_w, l.cout};
  }
  Shape infer(std::size_t i, const layers::BatchNorm& l, const Shape& in) const {
    if (in.empty() || in.back() != l.channels) throw layer_error(i, "batch norm over " + std::to_string(l.channels) + " channels, got " + to_string(in));
    return in;
  }
  Shape infer(std::size_t i, const layers::MaskMultiply& l, const Shape& in) const {
    if (in != l.shape) throw layer_error(i, "mask shape " + to_string(l.shape) + " != activation " + to_string(in));
    return in;
  }
  Shape infer(std::size_t i, const layers::InputResidual& l, const Shape& in) const {
    if (in != l.shape) throw layer_error(i, "residual shape " + to_string(l.shape) + " != activation " + to_string(in));
    if (input_shape_ != l.shape) throw layer_error(i, "residual shape " + to_string(l.shape) + " != network input " + to_string(input_shape_));
    return in;
  }
  Shape infer(std::size_t i, const layers::Reshape& l, const Shape& in) const {
    if (numel(l.shape) != numel(in)) throw layer_error(i, "cannot reshape " + to_string(in) + " to " + to_string(l.shape));
    return l.shape;
  }
  template <class L>
  Shape infer(std::size_t, const L&, const Shape& in) const {
    return in;
  }

  Shape input_shape_;
  std::vector<LayerSpec> layers_;
  std::vector<Shape> shapes_;
};

/// Weights ~ N(0, 0.02^2), biases 0, batch-norm scale 1 / shift 0 with
/// stored mean 0 / var 1, masks 1, input-residual gates 0.
inline Params init_params(const Network& net, Rng& rng) {
  Params p;
  for (const auto& slot : net.param_slots()) {
    switch (slot.init) {
      case ParamSlot::Init::Normal:
        p.emplace(slot.name, rng.normal_tensor(slot.shape, kInitStddev));
        break;
      case ParamSlot::Init::Zero:
        p.emplace(slot.name, Tensor(slot.shape, 0.0));
        break;
      case ParamSlot::Init::One:
        p.emplace(slot.name, Tensor(slot.shape, 1.0));
        break;
    }
  }
  return p;
}

inline Params init_params(const Network& net, std::uint64_t seed) {
  Rng rng(seed);
  return init_params(net, rng);
}

/// Check that `params` has exactly the network's slots with matching shapes.
inline void check_params(const Network& net, const Params& params) {
  auto slots = net.param_slots();
  if (slots.size() != params.size()) {
    throw ShapeError("network has " + std::to_string(slots.size()) + " parameters, got " +
                     std::to_string(params.size()));
  }
  for (const auto& s : slots) {
    auto it = params.find(s.name);
    if (it == params.end()) throw ShapeError("missing parameter " + s.name);
    if (it->second.shape() != s.shape) {
      throw ShapeError("parameter " + s.name + " has shape " + to_string(it->second.shape()) +
                       ", expected " + to_string(s.shape));
    }
  }
}

/// Put parameters on a tape. Batch-norm statistics are always constants.
inline BoundParams bind_params(Tape& tape, const Network& net, const Params& params, bool trainable) {
  check_params(net, params);
  BoundParams bound;
  for (const auto& s : net.param_slots()) {
    bound.emplace(s.name, tape.leaf(params.at(s.name), trainable && s.trainable));
  }
  return bound;
}

/// Gradients of the trainable parameters after a backward pass.
inline Params param_grads(const Gradients& grads, const Network& net, const BoundParams& bound) {
  Params out;
  for (const auto& name : net.trainable_names()) out.emplace(name, grads.wrt(bound.at(name)));
  return out;
}

struct ApplyOptions {
  BatchNormMode batch_norm = BatchNormMode::Frozen;
  /// Train mode only: receives per-layer batch statistics keyed by layer index.
  std::map<std::size_t, ChannelStats>* record = nullptr;
};

/// Forward pass over a batch x[B, input_shape...].
inline Var apply(const Network& net, const BoundParams& p, const Var& x, const ApplyOptions& opt = {}) {
  const Shape& xs = x.shape();
  if (xs.empty() || Shape(xs.begin() + 1, xs.end()) != net.input_shape()) {
    throw ShapeError("network expects batches of " + to_string(net.input_shape()) + ", got " + to_string(xs));
  }
  const std::size_t batch = xs[0];
  Var h = x;
  for (std::size_t i = 0; i < net.layers().size(); ++i) {
    auto P = [&](const char* field) -> const Var& { return p.at(Network::param_name(i, field)); };
    h = std::visit(
        [&](const auto& l) -> Var {
          using L = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<L, layers::Dense>) {
            return add_bias(matmul(h, P("weight")), P("bias"));
          } else if constexpr (std::is_same_v<L, layers::Conv>) {
            return add_bias(conv2d(h, P("weight"), l.stride, l.padding), P("bias"));
          } else if constexpr (std::is_same_v<L, layers::ConvTranspose>) {
            return add_bias(conv_transpose2d(h, P("weight"), l.stride, l.padding), P("bias"));
          } else if constexpr (std::is_same_v<L, layers::ReLU>) {
            return relu(h);
          } else if constexpr (std::is_same_v<L, layers::LeakyReLU>) {
            return leaky_relu(h, l.alpha);
          } else if constexpr (std::is_same_v<L, layers::Tanh>) {
            return tanh(h);
          } else if constexpr (std::is_same_v<L, layers::Sigmoid>) {
            return sigmoid(h);
          } else if constexpr (std::is_same_v<L, layers::BatchNorm>) {
            if (opt.batch_norm == BatchNormMode::Train) {
              ChannelStats stats;
              Var y = batch_norm_train(h, P("gamma"), P("beta"), kBatchNormEps, opt.record ? &stats : nullptr);
              if (opt.record) (*opt.record)[i] = std::move(stats);
              return y;
            }
            return batch_norm_frozen(h, P("gamma"), P("beta"), P("running_mean"), P("running_var"));
          } else if constexpr (std::is_same_v<L, layers::MaskMultiply>) {
            return mul_broadcast(h, P("mask"));
          } else if constexpr (std::is_same_v<L, layers::InputResidual>) {
            return add(h, mul_broadcast(x, P("gate")));
          } else {
            static_assert(std::is_same_v<L, layers::Reshape>);
            return reshape(h, batched(batch, l.shape));
          }
        },
        net.layers()[i]);
  }
  return h;
}

/// Untaped convenience forward.
inline Tensor forward(const Network& net, const Params& params, const Tensor& x,
                      BatchNormMode mode = BatchNormMode::Frozen) {
  Tape tape;
  auto bound = bind_params(tape, net, params, false);
  ApplyOptions opt;
  opt.batch_norm = mode;
  return apply(net, bound, tape.constant(x), opt).value();
}

/// Replace stored batch-norm statistics with those of `batch` so frozen-mode
/// inference on that batch reproduces train-mode output exactly.
inline void freeze_batch_norm(const Network& net, Params& params, const Tensor& batch) {
  Tape tape;
  auto bound = bind_params(tape, net, params, false);
  std::map<std::size_t, ChannelStats> stats;
  ApplyOptions opt{BatchNormMode::Train, &stats};
  apply(net, bound, tape.constant(batch), opt);
  for (auto& [layer, s] : stats) {
    params[Network::param_name(layer, "running_mean")] = std::move(s.mean);
    params[Network::param_name(layer, "running_var")] = std::move(s.var);
  }
}

// ---------------------------------------------------------------- JSON

inline nlohmann::json layer_to_json(const LayerSpec& spec) {
  using nlohmann::json;
  return std::visit(
      [](const auto& l) -> json {
        using L = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<L, layers::Dense>) {
          return {{"type", "dense"}, {"in", l.in}, {"out", l.out}};
        } else if constexpr (std::is_same_v<L, layers::Conv>) {
          return {{"type", "conv"}, {"kh", l.kh}, {"kw", l.kw}, {"cin", l.cin}, {"cout", l.cout},
                  {"stride", l.stride}, {"padding", kernels::to_string(l.padding)}};
        } else if constexpr (std::is_same_v<L, layers::ConvTranspose>) {
          return {{"type", "conv_transpose"}, {"kh", l.kh}, {"kw", l.kw}, {"cout", l.cout}, {"cin", l.cin},
                  {"stride", l.stride}, {"padding", kernels::to_string(l.padding)}};
        } else if constexpr (std::is_same_v<L, layers::ReLU>) {
          return {{"type", "relu"}};
        } else if constexpr (std::is_same_v<L, layers::LeakyReLU>) {
          return {{"type", "leaky_relu"}, {"alpha", l.alpha}};
        } else if constexpr (std::is_same_v<L, layers::Tanh>) {
          return {{"type", "tanh"}};
        } else if constexpr (std::is_same_v<L, layers::Sigmoid>) {
          return {{"type", "sigmoid"}};
        } else if constexpr (std::is_same_v<L, layers::BatchNorm>) {
          return {{"type", "batch_norm"}, {"channels", l.channels}};
        } else if constexpr (std::is_same_v<L, layers::MaskMultiply>) {
          return {{"type", "mask_multiply"}, {"shape", l.shape}};
        } else if constexpr (std::is_same_v<L, layers::InputResidual>) {
          return {{"type", "input_residual"}, {"shape", l.shape}};
        } else {
          return {{"type", "reshape"}, {"shape", l.shape}};
        }
      },
      spec);
}

inline LayerSpec layer_from_json(const nlohmann::json& j) {
  const std::string type = j.at("type").get<std::string>();
  auto pad = [&]() {
    const std::string p = j.value("padding", std::string("same"));
    if (p == "same") return Padding::Same;
    if (p == "valid") return Padding::Valid;
    throw ConfigError("padding", "expected same|valid, got '" + p + "'");
  };
  if (type == "dense") return layers::Dense{j.at("in"), j.at("out")};
  if (type == "conv")
    return layers::Conv{j.at("kh"), j.at("kw"), j.at("cin"), j.at("cout"), j.value("stride", std::size_t{1}), pad()};
  if (type == "conv_transpose")
    return layers::ConvTranspose{j.at("kh"), j.at("kw"), j.at("cout"), j.at("cin"), j.value("stride", std::size_t{1}), pad()};
  if (type == "relu") return layers::ReLU{};
  if (type == "leaky_relu") return layers::LeakyReLU{j.value("alpha", 0.2)};
  if (type == "tanh") return layers::Tanh{};
  if (type == "sigmoid") return layers::Sigmoid{};
  if (type == "batch_norm") return layers::BatchNorm{j.at("channels")};
  if (type == "mask_multiply") return layers::MaskMultiply{j.at("shape").get<Shape>()};
  if (type == "input_residual") return layers::InputResidual{j.at("shape").get<Shape>()};
  if (type == "reshape") return layers::Reshape{j.at("shape").get<Shape>()};
  throw ConfigError("type", "unknown layer type '" + type + "'");
}

inline nlohmann::json network_to_json(const Network& net) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : net.layers()) layers.push_back(layer_to_json(l));
  return {{"input_shape", net.input_shape()}, {"layers", layers}};
}

inline Network network_from_json(const nlohmann::json& j) {
  std::vector<LayerSpec> specs;
  for (const auto& l : j.at("layers")) specs.push_back(layer_from_json(l));
  return Network(j.at("input_shape").get<Shape>(), std::move(specs));
}

}  // namespace mimicinv

#endif  // MIMICINV_NN_HPP
