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

// Generative priors: frozen generators and discriminators, latent sampling,
// the shared mean initialization, and a small GAN trainer.

#ifndef MIMICINV_PRIORS_HPP
#define MIMICINV_PRIORS_HPP

#include <cmath>
#include <fstream>
#include <numbers>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "mimicinv/autodiff.hpp"
#include "mimicinv/nn.hpp"
#include "mimicinv/optim.hpp"
#include "mimicinv/param_io.hpp"
#include "mimicinv/rng.hpp"

namespace mimicinv {

// ---------------------------------------------------------------- latents

/// `count` latents drawn i.i.d. from U(-1,1)^K.
inline Tensor sample_z(std::size_t latent_dim, std::size_t count, Rng& rng) {
  return rng.uniform_tensor({count, latent_dim}, -1.0, 1.0);
}

/// Average of `n_samples` uniform latents. Every observation starts here.
inline Tensor mean_init(std::size_t latent_dim, std::size_t n_samples, Rng& rng) {
  if (n_samples == 0) throw std::invalid_argument("mean_init: n_samples must be >= 1");
  Tensor draws = sample_z(latent_dim, n_samples, rng);
  Tensor z0({latent_dim});
  for (std::size_t i = 0; i < n_samples; ++i)
    for (std::size_t k = 0; k < latent_dim; ++k) z0[k] += draws[i * latent_dim + k];
  for (auto& v : z0.data()) v /= static_cast<double>(n_samples);
  return z0;
}

/// Repeat a single latent into an [N, K] batch.
inline Tensor tile_latent(const Tensor& z0, std::size_t n) {
  Tensor z({n, z0.size()});
  for (std::size_t j = 0; j < n; ++j)
    std::copy(z0.data().begin(), z0.data().end(), z.data().begin() + static_cast<std::ptrdiff_t>(j * z0.size()));
  return z;
}

// ---------------------------------------------------------------- generators

/// G(z) = A z + b with A of shape [M, K].
struct LinearGenerator {
  Tensor A;
  Tensor b;
};

/// Ring of the given radius in the first two coordinates of R^M, traced by a
/// single latent: G(z) = radius * (cos(pi z), sin(pi z), 0, ..., 0).
struct RingGenerator {
  double radius = 1.0;
  std::size_t ambient = 2;
};

/// A network generator with frozen parameters.
struct NetworkGenerator {
  Network net;
  Params params;
};

/// Frozen image prior. Parameters are bound as tape constants, so gradients
/// reach the latent but never the prior.
class Generator {
 public:
  using Kind = std::variant<LinearGenerator, RingGenerator, NetworkGenerator>;

  Generator() = default;
  explicit Generator(LinearGenerator g) : kind_(std::move(g)) {
    const auto& s = std::get<LinearGenerator>(kind_).A.shape();
    if (s.size() != 2 || std::get<LinearGenerator>(kind_).b.shape() != Shape{s[0]}) {
      throw ShapeError("linear generator needs A[M,K] and b[M]");
    }
  }
  explicit Generator(RingGenerator g) : kind_(g) {
    if (g.ambient < 2) throw ShapeError("ring generator needs ambient dimension >= 2");
  }
  explicit Generator(NetworkGenerator g) : kind_(std::move(g)) {
    const auto& n = std::get<NetworkGenerator>(kind_);
    if (n.net.input_shape().size() != 1) throw ShapeError("generator network input must be a flat latent");
    check_params(n.net, n.params);
  }

  const Kind& kind() const noexcept { return kind_; }
  bool is_network() const noexcept { return std::holds_alternative<NetworkGenerator>(kind_); }
  const NetworkGenerator& network() const { return std::get<NetworkGenerator>(kind_); }

  std::size_t latent_dim() const {
    return std::visit(
        [](const auto& g) -> std::size_t {
          using G = std::decay_t<decltype(g)>;
          if constexpr (std::is_same_v<G, LinearGenerator>) return g.A.dim(1);
          else if constexpr (std::is_same_v<G, RingGenerator>) return 1;
          else return g.net.input_shape()[0];
        },
        kind_);
  }

  /// Per-sample output shape.
  Shape output_shape() const {
    return std::visit(
        [](const auto& g) -> Shape {
          using G = std::decay_t<decltype(g)>;
          if constexpr (std::is_same_v<G, LinearGenerator>) return {g.A.dim(0)};
          else if constexpr (std::is_same_v<G, RingGenerator>) return {g.ambient};
          else return g.net.output_shape();
        },
        kind_);
  }

  /// Differentiable forward of a latent batch z[B, K].
  Var apply(const Var& z) const {
    if (z.shape().size() != 2 || z.shape()[1] != latent_dim()) {
      throw ShapeError("generator expects latents [B," + std::to_string(latent_dim()) + "], got " +
                       to_string(z.shape()));
    }
    Tape& tape = z.tape();
    return std::visit(
        [&](const auto& g) -> Var {
          using G = std::decay_t<decltype(g)>;
          if constexpr (std::is_same_v<G, LinearGenerator>) {
            const std::size_t m = g.A.dim(0), k = g.A.dim(1);
            Tensor at({k, m});
            for (std::size_t i = 0; i < m; ++i)
              for (std::size_t j = 0; j < k; ++j) at[j * m + i] = g.A[i * k + j];
            return add_bias(matmul(z, tape.constant(std::move(at))), tape.constant(g.b));
          } else if constexpr (std::is_same_v<G, RingGenerator>) {
            Tensor e0({1, g.ambient}), e1({1, g.ambient});
            e0[0] = g.radius;
            e1[1] = g.radius;
            Var a = scale(z, std::numbers::pi);
            return add(matmul(cos(a), tape.constant(std::move(e0))), matmul(sin(a), tape.constant(std::move(e1))));
          } else {
            auto bound = bind_params(tape, g.net, g.params, false);
            return mimicinv::apply(g.net, bound, z);
          }
        },
        kind_);
  }

  /// Untaped forward.
  Tensor generate(const Tensor& z) const {
    Tape tape;
    return apply(tape.constant(z)).value();
  }

 private:
  Kind kind_;
};

/// Frozen discriminator: image batch to probabilities [B, 1].
struct Discriminator {
  Network net;
  Params params;

  Var apply(const Var& x) const {
    auto bound = bind_params(x.tape(), net, params, false);
    return mimicinv::apply(net, bound, x);
  }
  Tensor probability(const Tensor& x) const { return forward(net, params, x); }
};

// ---------------------------------------------------------------- guarded logs

inline constexpr double kProbClamp = 1e-7;

/// log(p) with p clamped to [1e-7, 1 - 1e-7].
inline Var guarded_log(const Var& p) { return log(clip(p, kProbClamp, 1.0 - kProbClamp)); }

/// log(1 - p) with p clamped to [1e-7, 1 - 1e-7].
inline Var guarded_log1m(const Var& p) {
  return log(add_scalar(neg(clip(p, kProbClamp, 1.0 - kProbClamp)), 1.0));
}

// ---------------------------------------------------------------- architectures

namespace architectures {

/// Generator for 14x14x1 images: FC-FC-reshape-upsampling transposed convs.
inline Network glyph_generator(std::size_t latent_dim = 100) {
  namespace L = layers;
  return Network({latent_dim},
                 {L::Dense{latent_dim, 128}, L::ReLU{}, L::BatchNorm{128},
                  L::Dense{128, 7 * 7 * 16}, L::ReLU{}, L::BatchNorm{7 * 7 * 16},
                  L::Reshape{{7, 7, 16}},
                  L::ConvTranspose{4, 4, 8, 16, 2}, L::ReLU{},
                  L::ConvTranspose{4, 4, 1, 8, 1}, L::Tanh{}});
}

/// Discriminator for 14x14x1 images: two strided convs then FC to a probability.
inline Network glyph_discriminator() {
  namespace L = layers;
  return Network({14, 14, 1},
                 {L::Conv{4, 4, 1, 16, 2}, L::LeakyReLU{},
                  L::Conv{4, 4, 16, 32, 2}, L::LeakyReLU{},
                  L::Reshape{{4 * 4 * 32}},
                  L::Dense{4 * 4 * 32, 128}, L::LeakyReLU{},
                  L::Dense{128, 1}, L::Sigmoid{}});
}

/// MLP generator for 2-D toy data.
inline Network toy2d_generator(std::size_t latent_dim = 2, std::size_t hidden = 64) {
  namespace L = layers;
  return Network({latent_dim}, {L::Dense{latent_dim, hidden}, L::ReLU{}, L::Dense{hidden, hidden}, L::ReLU{},
                                L::Dense{hidden, 2}, L::Tanh{}});
}

/// MLP discriminator for 2-D toy data.
inline Network toy2d_discriminator(std::size_t hidden = 64) {
  namespace L = layers;
  return Network({2}, {L::Dense{2, hidden}, L::LeakyReLU{}, L::Dense{hidden, hidden}, L::LeakyReLU{},
                       L::Dense{hidden, 1}, L::Sigmoid{}});
}

}  // namespace architectures

// ---------------------------------------------------------------- training

enum class GeneratorLoss {
  Saturating,     // minimize log(1 - D(G(z)))
  NonSaturating,  // minimize -log D(G(z))
};

struct GanOptions {
  std::size_t steps = 2000;
  std::size_t batch = 64;
  double lr_generator = 2e-4;
  double lr_discriminator = 2e-4;
  GeneratorLoss generator_loss = GeneratorLoss::Saturating;
  /// Batch used to freeze batch-norm statistics after training.
  std::size_t freeze_batch = 512;
};

struct GanTrace {
  std::vector<double> d_loss;
  std::vector<double> g_loss;
};

struct GanResult {
  Generator generator;
  Discriminator discriminator;
  GanTrace trace;
};

/// Training hit a non-finite value; carries the losses recorded so far.
class GanDiverged : public NumericError {
 public:
  GanDiverged(const std::string& what, GanTrace trace) : NumericError(what), trace_(std::move(trace)) {}
  const GanTrace& trace() const noexcept { return trace_; }

 private:
  GanTrace trace_;
};

namespace detail {

inline Tensor gather_rows(const Tensor& data, std::span<const std::size_t> idx) {
  const std::size_t n = data.size() / data.dim(0);
  Shape s = data.shape();
  s[0] = idx.size();
  Tensor out(s);
  for (std::size_t i = 0; i < idx.size(); ++i)
    std::copy_n(data.data().begin() + static_cast<std::ptrdiff_t>(idx[i] * n), n,
                out.data().begin() + static_cast<std::ptrdiff_t>(i * n));
  return out;
}

inline Tensor random_batch(const Tensor& data, std::size_t batch, Rng& rng) {
  std::vector<std::size_t> idx(batch);
  for (auto& i : idx) i = rng.index(data.dim(0));
  return gather_rows(data, idx);
}

}  // namespace detail

/// Alternating GAN training with RMSProp for both players. Batch norm runs
/// on batch statistics during training; afterwards the generator's stored
/// statistics come from a latent batch and the discriminator's from data.
inline GanResult gan_train(const Tensor& data, const Network& gen_net, const Network& disc_net,
                           const GanOptions& opt, Rng& rng) {
  if (data.rank() < 2 || Shape(data.shape().begin() + 1, data.shape().end()) != disc_net.input_shape()) {
    throw ShapeError("gan_train: data shape " + to_string(data.shape()) + " does not match discriminator input " +
                     to_string(disc_net.input_shape()));
  }
  if (gen_net.output_shape() != disc_net.input_shape()) {
    throw ShapeError("gan_train: generator output " + to_string(gen_net.output_shape()) +
                     " != discriminator input " + to_string(disc_net.input_shape()));
  }
  if (disc_net.output_shape() != Shape{1}) throw ShapeError("gan_train: discriminator must output one value");
  for (double v : data.data()) {
    if (!(v >= -1.0 && v <= 1.0)) throw std::invalid_argument("gan_train: data must lie in [-1,1]");
  }
  const std::size_t k = gen_net.input_shape().at(0);
  Params gp = init_params(gen_net, rng);
  Params dp = init_params(disc_net, rng);
  RmsProp g_opt, d_opt;
  GanTrace trace;
  const ApplyOptions train{BatchNormMode::Train, nullptr};

  try {
    for (std::size_t step = 0; step < opt.steps; ++step) {
      {
        Tape tape;
        auto gb = bind_params(tape, gen_net, gp, false);
        auto db = bind_params(tape, disc_net, dp, true);
        Var real = tape.constant(detail::random_batch(data, opt.batch, rng));
        Var fake = apply(gen_net, gb, tape.constant(sample_z(k, opt.batch, rng)), train);
        Var loss = neg(add(mean(guarded_log(apply(disc_net, db, real, train))),
                           mean(guarded_log1m(apply(disc_net, db, fake, train)))));
        trace.d_loss.push_back(loss.value().item());
        auto grads = tape.backward(loss);
        d_opt.step(dp, param_grads(grads, disc_net, db), opt.lr_discriminator);
      }
      {
        Tape tape;
        auto gb = bind_params(tape, gen_net, gp, true);
        auto db = bind_params(tape, disc_net, dp, false);
        Var p = apply(disc_net, db, apply(gen_net, gb, tape.constant(sample_z(k, opt.batch, rng)), train), train);
        Var loss = opt.generator_loss == GeneratorLoss::Saturating ? mean(guarded_log1m(p)) : neg(mean(guarded_log(p)));
        trace.g_loss.push_back(loss.value().item());
        auto grads = tape.backward(loss);
        g_opt.step(gp, param_grads(grads, gen_net, gb), opt.lr_generator);
      }
    }
  } catch (const NumericError& e) {
    throw GanDiverged(std::string("GAN training diverged: ") + e.what(), std::move(trace));
  }
  for (const auto& [name, t] : gp)
    if (!t.all_finite()) throw GanDiverged("GAN generator parameters became non-finite", trace);

  if (opt.steps > 0) {
    freeze_batch_norm(gen_net, gp, sample_z(k, opt.freeze_batch, rng));
    const std::size_t m = std::min(opt.freeze_batch, data.dim(0));
    freeze_batch_norm(disc_net, dp, data.rows(0, m));
  }
  return {Generator(NetworkGenerator{gen_net, std::move(gp)}), Discriminator{disc_net, std::move(dp)},
          std::move(trace)};
}

/// Fraction of correct real/fake calls at threshold 0.5 on `data` and an
/// equal number of generated samples.
inline double discriminator_accuracy(const Generator& g, const Discriminator& d, const Tensor& data, Rng& rng) {
  const std::size_t n = data.dim(0);
  Tensor pr = d.probability(data);
  Tensor pf = d.probability(g.generate(sample_z(g.latent_dim(), n, rng)));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) correct += (pr[i] > 0.5) + (pf[i] <= 0.5);
  return static_cast<double>(correct) / static_cast<double>(2 * n);
}

// ---------------------------------------------------------------- persistence

/// Writes `path` (parameter file) and `path`.json (architecture sidecar).
inline void save_network_prior(const Network& net, const Params& params, const std::string& path,
                               const std::string& role) {
  save_params(params, path);
  nlohmann::json side = network_to_json(net);
  side["role"] = role;
  side["output_shape"] = net.output_shape();
  if (role == "generator") side["latent_dim"] = net.input_shape().at(0);
  std::ofstream f(path + ".json");
  if (!f) throw std::runtime_error("cannot open " + path + ".json for writing");
  f << side.dump(2) << "\n";
}

inline void save_generator(const Generator& g, const std::string& path) {
  const auto& n = g.network();
  save_network_prior(n.net, n.params, path, "generator");
}

inline void save_discriminator(const Discriminator& d, const std::string& path) {
  save_network_prior(d.net, d.params, path, "discriminator");
}

namespace detail {

inline Network load_sidecar(const std::string& path, const std::string& role) {
  std::ifstream f(path + ".json");
  if (!f) throw std::runtime_error("cannot open " + path + ".json");
  nlohmann::json side;
  try {
    side = nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ".json: " + e.what());
  }
  if (side.value("role", std::string()) != role) {
    throw FormatError(path + ".json: expected role '" + role + "'");
  }
  return network_from_json(side);
}

}  // namespace detail

inline Generator load_generator(const std::string& path) {
  Network net = detail::load_sidecar(path, "generator");
  Params p = load_params(path, net);
  return Generator(NetworkGenerator{std::move(net), std::move(p)});
}

inline Discriminator load_discriminator(const std::string& path) {
  Network net = detail::load_sidecar(path, "discriminator");
  Params p = load_params(path, net);
  return Discriminator{std::move(net), std::move(p)};
}

}  // namespace mimicinv

#endif  // MIMICINV_PRIORS_HPP
