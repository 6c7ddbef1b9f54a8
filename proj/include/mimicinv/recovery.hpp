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

// Blind recovery by corruption mimicking. A small surrogate network learns
// to imitate the unknown corruption while the latents of a frozen generator
// are re-estimated through it:
//
//   L = L_obs + lambda_adv * L_adv + lambda_I * L_I
//   L_obs = sum_j |Y_j - f(G(z_j))|_1
//   L_adv = sum_j log(1 - D(G(z_j)))
//   L_I   = sum_j |Y_j - G(z_j)|_1 + |f(G(z_j)) - G(z_j)|_1
//
// Projected gradient descent on z alone is the special case f = identity.

#ifndef MIMICINV_RECOVERY_HPP
#define MIMICINV_RECOVERY_HPP

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mimicinv/autodiff.hpp"
#include "mimicinv/metrics.hpp"
#include "mimicinv/nn.hpp"
#include "mimicinv/optim.hpp"
#include "mimicinv/priors.hpp"

namespace mimicinv {

// ---------------------------------------------------------------- surrogate

enum class FinalActivation { ReLU, Tanh };

/// Shape of the corruption-mimicking network: `conv_layers` same-padded
/// convolutions (ReLU between them, `final_activation` after the last), then
/// an optional learned mask and an optional input residual out + W * input.
struct SurrogateSpec {
  std::size_t conv_layers = 3;
  std::size_t filters = 16;
  std::size_t kernel = 5;
  /// Output channels; 0 means the image's channel count.
  std::size_t out_channels = 0;
  FinalActivation final_activation = FinalActivation::ReLU;
  bool mask = true;
  bool input_residual = false;

  static constexpr std::size_t kMaxConvLayers = 3;

  /// Two convolutions, mask and input residual.
  static SurrogateSpec residual_style() {
    SurrogateSpec s;
    s.conv_layers = 2;
    s.input_residual = true;
    return s;
  }

  void validate() const {
    if (conv_layers > kMaxConvLayers) {
      throw ConfigError("surrogate.conv_layers", "at most " + std::to_string(kMaxConvLayers) +
                                                     " layers; deeper surrogates overfit the observations");
    }
    if (conv_layers > 0 && (filters == 0 || kernel == 0)) {
      throw ConfigError("surrogate.filters", "filters and kernel must be positive");
    }
  }
};

/// Network for images of per-sample shape [H,W,C].
inline Network build_surrogate(const SurrogateSpec& spec, const Shape& image_shape) {
  spec.validate();
  if (image_shape.size() != 3) throw ShapeError("surrogate needs [H,W,C] images, got " + to_string(image_shape));
  namespace L = layers;
  const std::size_t h = image_shape[0], w = image_shape[1], c = image_shape[2];
  const std::size_t out = spec.out_channels ? spec.out_channels : c;
  std::vector<LayerSpec> ls;
  std::size_t cin = c;
  for (std::size_t i = 0; i < spec.conv_layers; ++i) {
    const bool last = i + 1 == spec.conv_layers;
    const std::size_t cout = last ? out : spec.filters;
    ls.push_back(L::Conv{spec.kernel, spec.kernel, cin, cout, 1, Padding::Same});
    if (last && spec.final_activation == FinalActivation::Tanh) ls.push_back(L::Tanh{});
    else ls.push_back(L::ReLU{});
    cin = cout;
  }
  if (spec.mask) ls.push_back(L::MaskMultiply{{h, w, cin}});
  if (spec.input_residual) {
    if (cin != c) throw ConfigError("surrogate.input_residual", "needs output channels equal to input channels");
    ls.push_back(L::InputResidual{{h, w, c}});
  }
  return Network(image_shape, std::move(ls));
}

// ---------------------------------------------------------------- config

enum class Task { GrayBlur, Stylize, Negative, StuckPixels, Occlusion, Inpainting };

inline const char* to_string(Task t) {
  switch (t) {
    case Task::GrayBlur: return "gray_blur";
    case Task::Stylize: return "stylize";
    case Task::Negative: return "negative";
    case Task::StuckPixels: return "stuck_pixels";
    case Task::Occlusion: return "occlusion";
    case Task::Inpainting: return "inpainting";
  }
  return "?";
}

inline Task task_from_string(const std::string& s) {
  for (int i = 0; i <= static_cast<int>(Task::Inpainting); ++i)
    if (s == to_string(static_cast<Task>(i))) return static_cast<Task>(i);
  throw ConfigError("task", "unknown task '" + s + "'");
}

struct RecoveryConfig {
  double lambda_identity = 0.0;
  double lambda_adv = 0.0;
  double lr_surrogate = 2e-4;  // gamma_s
  double lr_latent = 1e-3;     // gamma_g
  std::size_t outer_iters = 50;     // T
  std::size_t surrogate_steps = 5;  // T1
  std::size_t latent_steps = 10;    // T2
  /// Expected observation count N; 0 accepts any batch size.
  std::size_t observations = 25;
  double clip_lo = -1.0;
  double clip_hi = 1.0;
  std::size_t init_samples = 1000;
  std::uint64_t seed = 0;

  /// Per-task loss weights and learning rates.
  static RecoveryConfig for_task(Task t) {
    RecoveryConfig c;
    switch (t) {
      case Task::GrayBlur: c.lr_surrogate = 2e-4; c.lr_latent = 1e-3; break;
      case Task::Stylize: c.lr_surrogate = 8e-5; c.lr_latent = 4e-4; break;
      case Task::Negative: c.lambda_adv = 1e-4; c.lr_surrogate = 1e-3; c.lr_latent = 1e-3; break;
      case Task::StuckPixels:
      case Task::Occlusion:
      case Task::Inpainting:
        c.lambda_identity = 1e-1; c.lambda_adv = 1e-4; c.lr_surrogate = 4e-3; c.lr_latent = 3e-3;
        break;
    }
    return c;
  }

  /// `pgd` relaxes T1 >= 1 to T1 == 0.
  void validate(bool pgd = false) const {
    if (!(lambda_identity >= 0.0)) throw ConfigError("lambda_identity", "must be >= 0");
    if (!(lambda_adv >= 0.0)) throw ConfigError("lambda_adv", "must be >= 0");
    if (!(lr_surrogate > 0.0)) throw ConfigError("lr_surrogate", "must be > 0");
    if (!(lr_latent > 0.0)) throw ConfigError("lr_latent", "must be > 0");
    if (outer_iters < 1) throw ConfigError("outer_iters", "must be >= 1");
    if (!pgd && surrogate_steps < 1) throw ConfigError("surrogate_steps", "must be >= 1 (0 only for pgd)");
    if (latent_steps < 1) throw ConfigError("latent_steps", "must be >= 1");
    if (!(clip_lo < clip_hi)) throw ConfigError("clip", "clip_lo must be < clip_hi");
    if (init_samples < 1) throw ConfigError("init_samples", "must be >= 1");
  }
};

// ---------------------------------------------------------------- losses

/// sum_j |Y_j - pred_j|_1
inline Var loss_obs(const Var& y, const Var& pred) {
  detail::require_same_shape("loss_obs", y, pred);
  return sum(abs(sub(y, pred)));
}

/// sum_j log(1 - D(G(z_j))) on discriminator outputs, clamped to [1e-7, 1 - 1e-7].
inline Var loss_adv(const Var& d_prob) { return sum(guarded_log1m(d_prob)); }

/// sum_j |Y_j - G(z_j)|_1 + |f(G(z_j)) - G(z_j)|_1
inline Var loss_identity(const Var& y, const Var& pred, const Var& gz) {
  detail::require_same_shape("loss_identity", y, gz);
  detail::require_same_shape("loss_identity", pred, gz);
  return add(sum(abs(sub(y, gz))), sum(abs(sub(pred, gz))));
}

/// Values of the loss terms at one point. Terms that cannot be evaluated
/// (no discriminator, shape-changing corruption for L_I) are NaN.
struct LossTerms {
  double obs = 0.0;
  double adv = std::numeric_limits<double>::quiet_NaN();
  double identity = std::numeric_limits<double>::quiet_NaN();
  double total = 0.0;
};

/// Clamp every latent to [lo, hi].
inline Tensor project_z(Tensor z, double lo = -1.0, double hi = 1.0) {
  for (auto& v : z.data()) v = std::clamp(v, lo, hi);
  return z;
}

// ---------------------------------------------------------------- result

struct RecoveryResult {
  Tensor z;      // [N, K]
  Tensor x_hat;  // [N, ...] = G(z)
  Network surrogate;
  Params surrogate_params;
  LossTerms initial;
  std::vector<LossTerms> trace;  // one entry per outer iteration
  std::vector<double> psnr;      // per image, when ground truth was supplied
  std::vector<std::string> warnings;
};

/// Non-finite loss during recovery; carries the state reached so far.
class RecoveryAborted : public NumericError {
 public:
  RecoveryAborted(const std::string& what, RecoveryResult partial)
      : NumericError(what), partial_(std::move(partial)) {}
  const RecoveryResult& partial() const noexcept { return partial_; }

 private:
  RecoveryResult partial_;
};

/// Called after every latent update (after projection).
struct LatentStep {
  std::size_t outer;  // 1-based t
  std::size_t inner;  // 1-based step within the inversion loop
  const Tensor& z;
};
using LatentObserver = std::function<void(const LatentStep&)>;

/// Optional inputs to a recovery run.
struct RecoveryExtras {
  /// Clean images for per-image PSNR.
  const Tensor* truth = nullptr;
  /// Start the surrogate from these parameters instead of a fresh init.
  const Params* surrogate_init = nullptr;
  LatentObserver observer;
};

namespace detail {

struct LossGraph {
  Var total;
  Var obs;
  std::optional<Var> adv;
  std::optional<Var> identity;
};

/// `surrogate` null means f = identity.
inline LossGraph build_loss(const Var& y, const Var& z, const Generator& g, const Discriminator* d,
                            const Network* surrogate, const BoundParams* theta, const RecoveryConfig& cfg) {
  Var gz = g.apply(z);
  Var pred = surrogate ? apply(*surrogate, *theta, gz) : gz;
  LossGraph out;
  out.obs = loss_obs(y, pred);
  out.total = out.obs;
  if (d) {
    out.adv = loss_adv(d->apply(gz));
    if (cfg.lambda_adv > 0.0) out.total = add(out.total, scale(*out.adv, cfg.lambda_adv));
  }
  if (y.shape() == gz.shape()) {
    out.identity = loss_identity(y, pred, gz);
    if (cfg.lambda_identity > 0.0) out.total = add(out.total, scale(*out.identity, cfg.lambda_identity));
  }
  return out;
}

inline LossTerms evaluate(const Tensor& y, const Tensor& z, const Generator& g, const Discriminator* d,
                          const Network* surrogate, const Params* theta, const RecoveryConfig& cfg) {
  Tape tape;
  BoundParams bound;
  if (surrogate) bound = bind_params(tape, *surrogate, *theta, false);
  auto lg = build_loss(tape.constant(y), tape.constant(z), g, d, surrogate, &bound, cfg);
  LossTerms t;
  t.obs = lg.obs.value().item();
  if (lg.adv) t.adv = lg.adv->value().item();
  if (lg.identity) t.identity = lg.identity->value().item();
  t.total = lg.total.value().item();
  return t;
}

/// The alternating loop shared by every method.
inline RecoveryResult alternate(const Tensor& y, const Generator& g, const Discriminator* d,
                                const Network* surrogate, const RecoveryConfig& cfg, const RecoveryExtras& extras) {
  const std::size_t n = y.dim(0);
  if (cfg.observations != 0 && cfg.observations != n) {
    throw ConfigError("observations", "config expects " + std::to_string(cfg.observations) + " observations, got " +
                                          std::to_string(n));
  }
  if (cfg.lambda_adv > 0.0 && !d) throw ConfigError("lambda_adv", "adversarial loss needs a discriminator");
  if (cfg.lambda_identity > 0.0 && Shape(y.shape().begin() + 1, y.shape().end()) != g.output_shape()) {
    throw ShapeError("identity loss needs observations shaped like generator output " + to_string(g.output_shape()));
  }
  if (surrogate) {
    if (surrogate->input_shape() != g.output_shape()) {
      throw ShapeError("surrogate input " + to_string(surrogate->input_shape()) + " != generator output " +
                       to_string(g.output_shape()));
    }
    if (Shape(y.shape().begin() + 1, y.shape().end()) != surrogate->output_shape()) {
      throw ShapeError("surrogate output " + to_string(surrogate->output_shape()) + " != observation shape " +
                       to_string(y.shape()));
    }
  } else if (Shape(y.shape().begin() + 1, y.shape().end()) != g.output_shape()) {
    throw ShapeError("observation shape " + to_string(y.shape()) + " != generator output " +
                     to_string(g.output_shape()));
  }

  RecoveryResult res;
  if (n == 1) res.warnings.push_back("N=1: the surrogate sees a single observation and may memorize it");

  Rng root(cfg.seed);
  Rng z_rng = root.split();
  Rng s_rng = root.split();
  res.z = tile_latent(mean_init(g.latent_dim(), cfg.init_samples, z_rng), n);
  if (surrogate) {
    res.surrogate = *surrogate;
    if (extras.surrogate_init) {
      check_params(*surrogate, *extras.surrogate_init);
      res.surrogate_params = *extras.surrogate_init;
    } else {
      res.surrogate_params = init_params(*surrogate, s_rng);
    }
  }
  const Params* theta = surrogate ? &res.surrogate_params : nullptr;

  RmsProp theta_opt, z_opt;
  try {
    res.initial = evaluate(y, res.z, g, d, surrogate, theta, cfg);
    for (std::size_t t = 1; t <= cfg.outer_iters; ++t) {
      if (surrogate) {
        for (std::size_t s = 0; s < cfg.surrogate_steps; ++s) {
          Tape tape;
          auto bound = bind_params(tape, *surrogate, res.surrogate_params, true);
          auto lg = build_loss(tape.constant(y), tape.constant(res.z), g, d, surrogate, &bound, cfg);
          auto grads = tape.backward(lg.total);
          theta_opt.step(res.surrogate_params, param_grads(grads, *surrogate, bound), cfg.lr_surrogate);
        }
      }
      for (std::size_t s = 1; s <= cfg.latent_steps; ++s) {
        Tape tape;
        BoundParams bound;
        if (surrogate) bound = bind_params(tape, *surrogate, res.surrogate_params, false);
        Var z = tape.leaf(res.z);
        auto lg = build_loss(tape.constant(y), z, g, d, surrogate, &bound, cfg);
        auto grads = tape.backward(lg.total);
        z_opt.step("z", res.z, grads.wrt(z), cfg.lr_latent);
        res.z = project_z(std::move(res.z), cfg.clip_lo, cfg.clip_hi);
        if (extras.observer) extras.observer(LatentStep{t, s, res.z});
      }
      res.trace.push_back(evaluate(y, res.z, g, d, surrogate, theta, cfg));
      if (!std::isfinite(res.trace.back().total)) throw NumericError("non-finite total loss");
    }
  } catch (const NumericError& e) {
    res.x_hat = g.generate(res.z);
    throw RecoveryAborted(std::string("recovery aborted: ") + e.what(), std::move(res));
  }
  res.x_hat = g.generate(res.z);
  if (extras.truth) res.psnr = psnr_per_image(*extras.truth, res.x_hat);
  return res;
}

}  // namespace detail

/// Alternating surrogate fitting and latent inversion.
inline RecoveryResult run_mimicgan(const Tensor& y, const Generator& g, const Discriminator* d,
                                   const SurrogateSpec& spec, const RecoveryConfig& cfg,
                                   const RecoveryExtras& extras = {}) {
  cfg.validate(false);
  if (y.rank() < 2) throw ShapeError("observations must be batched, got " + to_string(y.shape()));
  Network net = build_surrogate(spec, g.output_shape());
  return detail::alternate(y, g, d, &net, cfg, extras);
}

/// Same loop with a caller-built surrogate network; T1 = 0 keeps it frozen.
inline RecoveryResult run_mimicgan(const Tensor& y, const Generator& g, const Discriminator* d,
                                   const Network& surrogate, const RecoveryConfig& cfg,
                                   const RecoveryExtras& extras = {}) {
  cfg.validate(true);
  if (y.rank() < 2) throw ShapeError("observations must be batched, got " + to_string(y.shape()));
  return detail::alternate(y, g, d, &surrogate, cfg, extras);
}

/// Projected gradient descent on z: f = identity, no surrogate loop, no
/// identity loss.
inline RecoveryResult run_pgd(const Tensor& y, const Generator& g, const Discriminator* d, RecoveryConfig cfg,
                              const RecoveryExtras& extras = {}) {
  cfg.surrogate_steps = 0;
  cfg.lambda_identity = 0.0;
  cfg.validate(true);
  if (y.rank() < 2) throw ShapeError("observations must be batched, got " + to_string(y.shape()));
  return detail::alternate(y, g, d, nullptr, cfg, extras);
}

inline constexpr double kCowboyLambdaAdv = 1e-3;

/// PGD plus the adversarial loss at weight 1e-3.
inline RecoveryResult run_cowboy(const Tensor& y, const Generator& g, const Discriminator& d, RecoveryConfig cfg,
                                 const RecoveryExtras& extras = {}) {
  cfg.lambda_adv = kCowboyLambdaAdv;
  return run_pgd(y, g, &d, cfg, extras);
}

/// Surrogate whose output equals its input exactly: mask 0, residual gate 1
/// around the given convolution stack.
inline std::pair<Network, Params> identity_surrogate(const SurrogateSpec& base, const Shape& image_shape,
                                                     std::uint64_t seed = 0) {
  SurrogateSpec s = base;
  s.mask = true;
  s.input_residual = true;
  s.out_channels = 0;
  Network net = build_surrogate(s, image_shape);
  Params p = init_params(net, seed);
  for (auto& [name, t] : p) {
    if (name.ends_with(".mask")) std::fill(t.data().begin(), t.data().end(), 0.0);
    if (name.ends_with(".gate")) std::fill(t.data().begin(), t.data().end(), 1.0);
  }
  return {std::move(net), std::move(p)};
}

// ---------------------------------------------------------------- I/O

inline constexpr const char* kTraceCsvHeader = "t,loss_obs,loss_adv,loss_identity,total";

namespace detail {
inline std::string csv_number(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}
}  // namespace detail

/// Row t=0 holds the values at initialization, then one row per iteration.
inline void write_trace_csv(std::ostream& os, const RecoveryResult& r) {
  os << kTraceCsvHeader << "\n";
  auto row = [&](std::size_t t, const LossTerms& l) {
    os << t << "," << detail::csv_number(l.obs) << "," << detail::csv_number(l.adv) << ","
       << detail::csv_number(l.identity) << "," << detail::csv_number(l.total) << "\n";
  };
  row(0, r.initial);
  for (std::size_t t = 0; t < r.trace.size(); ++t) row(t + 1, r.trace[t]);
}

inline nlohmann::json to_json(const SurrogateSpec& s) {
  return {{"conv_layers", s.conv_layers},
          {"filters", s.filters},
          {"kernel", s.kernel},
          {"out_channels", s.out_channels},
          {"final_activation", s.final_activation == FinalActivation::Tanh ? "tanh" : "relu"},
          {"mask", s.mask},
          {"input_residual", s.input_residual}};
}

namespace detail {
inline void reject_unknown(const nlohmann::json& j, const std::vector<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where, "expected an object");
  for (const auto& [key, _] : j.items())
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw ConfigError(where.empty() ? key : where + "." + key, "unknown field");
}
}  // namespace detail

inline SurrogateSpec surrogate_from_json(const nlohmann::json& j, SurrogateSpec s = {}) {
  detail::reject_unknown(j, {"conv_layers", "filters", "kernel", "out_channels", "final_activation", "mask",
                             "input_residual"},
                         "surrogate");
  try {
    s.conv_layers = j.value("conv_layers", s.conv_layers);
    s.filters = j.value("filters", s.filters);
    s.kernel = j.value("kernel", s.kernel);
    s.out_channels = j.value("out_channels", s.out_channels);
    if (j.contains("final_activation")) {
      const auto a = j.at("final_activation").get<std::string>();
      if (a == "tanh") s.final_activation = FinalActivation::Tanh;
      else if (a == "relu") s.final_activation = FinalActivation::ReLU;
      else throw ConfigError("surrogate.final_activation", "expected relu|tanh, got '" + a + "'");
    }
    s.mask = j.value("mask", s.mask);
    s.input_residual = j.value("input_residual", s.input_residual);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("surrogate", e.what());
  }
  s.validate();
  return s;
}

inline nlohmann::json to_json(const RecoveryConfig& c) {
  return {{"lambda_identity", c.lambda_identity}, {"lambda_adv", c.lambda_adv}, {"lr_surrogate", c.lr_surrogate},
          {"lr_latent", c.lr_latent},           {"outer_iters", c.outer_iters}, {"surrogate_steps", c.surrogate_steps},
          {"latent_steps", c.latent_steps},     {"observations", c.observations}, {"clip_lo", c.clip_lo},
          {"clip_hi", c.clip_hi},               {"init_samples", c.init_samples}, {"seed", c.seed}};
}

/// Fields absent from `j` keep their values from `base`.
inline RecoveryConfig recovery_from_json(const nlohmann::json& j, RecoveryConfig c = {}) {
  detail::reject_unknown(j, {"lambda_identity", "lambda_adv", "lr_surrogate", "lr_latent", "outer_iters",
                             "surrogate_steps", "latent_steps", "observations", "clip_lo", "clip_hi", "init_samples",
                             "seed"},
                         "recovery");
  try {
    c.lambda_identity = j.value("lambda_identity", c.lambda_identity);
    c.lambda_adv = j.value("lambda_adv", c.lambda_adv);
    c.lr_surrogate = j.value("lr_surrogate", c.lr_surrogate);
    c.lr_latent = j.value("lr_latent", c.lr_latent);
    c.outer_iters = j.value("outer_iters", c.outer_iters);
    c.surrogate_steps = j.value("surrogate_steps", c.surrogate_steps);
    c.latent_steps = j.value("latent_steps", c.latent_steps);
    c.observations = j.value("observations", c.observations);
    c.clip_lo = j.value("clip_lo", c.clip_lo);
    c.clip_hi = j.value("clip_hi", c.clip_hi);
    c.init_samples = j.value("init_samples", c.init_samples);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("recovery", e.what());
  }
  return c;
}

}  // namespace mimicinv

#endif  // MIMICINV_RECOVERY_HPP
