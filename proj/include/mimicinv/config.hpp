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


// Experiment configuration for the command-line harness: one JSON document
// names the task, corruption, recovery settings, prior, dataset, output
// directory and seeds. Field errors carry their JSON path.

#ifndef MIMICINV_CONFIG_HPP
#define MIMICINV_CONFIG_HPP

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mimicinv/corruptions.hpp"
#include "mimicinv/datasets.hpp"
#include "mimicinv/defense.hpp"
#include "mimicinv/imageio.hpp"
#include "mimicinv/priors.hpp"
#include "mimicinv/recovery.hpp"

#ifndef MIMICINV_VERSION
#define MIMICINV_VERSION "0.1.0"
#endif

namespace mimicinv {

inline constexpr const char* kVersion = MIMICINV_VERSION;

enum class Method { MimicGan, Pgd, Cowboy };

inline const char* to_string(Method m) {
  switch (m) {
    case Method::MimicGan: return "mimicgan";
    case Method::Pgd: return "pgd";
    case Method::Cowboy: return "cowboy";
  }
  return "?";
}

inline Method method_from_string(const std::string& s, const std::string& field = "method") {
  for (Method m : {Method::MimicGan, Method::Pgd, Method::Cowboy})
    if (s == to_string(m)) return m;
  throw ConfigError(field, "unknown method '" + s + "' (expected mimicgan|pgd|cowboy)");
}

/// Corruption a task uses when the config gives none.
inline CorruptionKind default_corruption(Task t) {
  switch (t) {
    case Task::GrayBlur: return CorruptionKind::GrayBlur;
    case Task::Stylize: return CorruptionKind::StylizeNoise;
    case Task::Negative: return CorruptionKind::Negative;
    case Task::StuckPixels: return CorruptionKind::PixelError;
    case Task::Occlusion: return CorruptionKind::Occlusion;
    case Task::Inpainting: return CorruptionKind::Inpainting;
  }
  return CorruptionKind::Identity;
}

// ---------------------------------------------------------------- sections

struct PriorSource {
  enum class Kind { Weights, Linear, Ring };
  Kind kind = Kind::Weights;
  std::string generator;      // Weights
  std::string discriminator;  // Weights, optional
  std::size_t ambient = 16;   // Linear M, Ring ambient
  std::size_t latent = 4;     // Linear K
  double radius = 1.0;        // Ring
  std::uint64_t seed = 0;     // Linear: draws A ~ N(0,1/K) and b = 0
};

struct DatasetSource {
  enum class Kind { Glyphs, EightGaussians, Prior, Idx };
  Kind kind = Kind::Glyphs;
  std::size_t count = 1000;
  std::string images;  // Idx
  std::string labels;  // Idx
  std::uint64_t seed = 0;
};

struct GanSettings {
  enum class Architecture { Glyph, Toy2d };
  Architecture architecture = Architecture::Glyph;
  std::size_t latent_dim = 100;
  std::size_t hidden = 64;
  GanOptions options;
};

struct ClassifierSettings {
  std::string path;  // weights for defend; empty trains a fresh classifier
  ClassifierOptions options;
};

struct DefenseSettings {
  enum class Attack { Universal, Fgsm, Bim };
  Attack attack = Attack::Universal;
  double epsilon = 0.3;
  /// Universal attack: scales tried in order until accuracy falls by `target_drop`.
  std::vector<double> alphas = {-1, -2, -3, -4, -6, -8, -10, -12};
  double target_drop = 0.3;
  std::size_t sources = kUniversalSources;
  UniversalSign sign = UniversalSign::AsWritten;
  std::size_t bim_steps = 10;
  std::size_t test_count = 100;
  std::size_t batch = 25;
};

struct ExperimentConfig {
  Task task = Task::Negative;
  Method method = Method::MimicGan;
  CorruptionSpec corruption;
  RecoveryConfig recovery;
  SurrogateSpec surrogate;
  PriorSource prior;
  DatasetSource dataset;
  GanSettings gan;
  ClassifierSettings classifier;
  DefenseSettings defense;
  std::string out = "runs/default";
  std::vector<std::uint64_t> seeds = {0};
  /// The document this was parsed from, for hashing and the manifest.
  nlohmann::json source;
};

// ---------------------------------------------------------------- parsing

namespace detail {

template <class T>
T get_field(const nlohmann::json& j, const std::string& key, const T& fallback, const std::string& path) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(path + "." + key, "wrong type");
  }
}

inline const nlohmann::json& object_at(const nlohmann::json& j, const std::string& key) {
  static const nlohmann::json empty = nlohmann::json::object();
  if (!j.contains(key)) return empty;
  if (!j.at(key).is_object()) throw ConfigError(key, "expected an object");
  return j.at(key);
}

/// Re-raise a section parser's error with the section name prefixed.
template <class F>
auto in_section(const std::string& section, F&& f) {
  try {
    return f();
  } catch (const ConfigError& e) {
    if (e.field().rfind(section, 0) == 0) throw;
    const std::string what = e.what();
    const std::string msg = e.field().empty() ? what : what.substr(e.field().size() + 2);
    throw ConfigError(e.field().empty() ? section : section + "." + e.field(), msg);
  }
}

inline PriorSource prior_from_json(const nlohmann::json& j) {
  reject_unknown(j, {"source", "kind", "generator", "discriminator", "ambient", "latent", "radius", "seed"}, "prior");
  PriorSource p;
  const auto source = get_field<std::string>(j, "source", "weights", "prior");
  if (source == "weights") {
    p.kind = PriorSource::Kind::Weights;
    p.generator = get_field<std::string>(j, "generator", "", "prior");
    p.discriminator = get_field<std::string>(j, "discriminator", "", "prior");
    if (p.generator.empty()) throw ConfigError("prior.generator", "required for weight priors");
  } else if (source == "analytic") {
    const auto kind = get_field<std::string>(j, "kind", "linear", "prior");
    if (kind == "linear") p.kind = PriorSource::Kind::Linear;
    else if (kind == "ring") p.kind = PriorSource::Kind::Ring;
    else throw ConfigError("prior.kind", "expected linear|ring, got '" + kind + "'");
  } else {
    throw ConfigError("prior.source", "expected weights|analytic, got '" + source + "'");
  }
  p.ambient = get_field(j, "ambient", p.ambient, "prior");
  p.latent = get_field(j, "latent", p.latent, "prior");
  p.radius = get_field(j, "radius", p.radius, "prior");
  p.seed = get_field(j, "seed", p.seed, "prior");
  if (p.ambient < 1 || p.latent < 1) throw ConfigError("prior.ambient", "dimensions must be positive");
  return p;
}

inline DatasetSource dataset_from_json(const nlohmann::json& j) {
  reject_unknown(j, {"source", "kind", "count", "images", "labels", "seed"}, "dataset");
  DatasetSource d;
  const auto source = get_field<std::string>(j, "source", "synthetic", "dataset");
  if (source == "idx") {
    d.kind = DatasetSource::Kind::Idx;
    d.images = get_field<std::string>(j, "images", "", "dataset");
    d.labels = get_field<std::string>(j, "labels", "", "dataset");
    if (d.images.empty()) throw ConfigError("dataset.images", "required for idx datasets");
    if (d.labels.empty()) throw ConfigError("dataset.labels", "required for idx datasets");
  } else if (source == "synthetic") {
    const auto kind = get_field<std::string>(j, "kind", "glyphs", "dataset");
    if (kind == "glyphs") d.kind = DatasetSource::Kind::Glyphs;
    else if (kind == "eight_gaussians") d.kind = DatasetSource::Kind::EightGaussians;
    else if (kind == "prior") d.kind = DatasetSource::Kind::Prior;
    else throw ConfigError("dataset.kind", "expected glyphs|eight_gaussians|prior, got '" + kind + "'");
  } else {
    throw ConfigError("dataset.source", "expected synthetic|idx, got '" + source + "'");
  }
  d.count = get_field(j, "count", d.count, "dataset");
  d.seed = get_field(j, "seed", d.seed, "dataset");
  if (d.count < 1) throw ConfigError("dataset.count", "must be >= 1");
  return d;
}

inline GanSettings gan_from_json(const nlohmann::json& j) {
  reject_unknown(j, {"architecture", "latent_dim", "hidden", "steps", "batch", "lr_generator", "lr_discriminator",
                     "loss", "freeze_batch"},
                 "gan");
  GanSettings g;
  const auto arch = get_field<std::string>(j, "architecture", "glyph", "gan");
  if (arch == "glyph") g.architecture = GanSettings::Architecture::Glyph;
  else if (arch == "toy2d") g.architecture = GanSettings::Architecture::Toy2d, g.latent_dim = 2;
  else throw ConfigError("gan.architecture", "expected glyph|toy2d, got '" + arch + "'");
  g.latent_dim = get_field(j, "latent_dim", g.latent_dim, "gan");
  g.hidden = get_field(j, "hidden", g.hidden, "gan");
  auto& o = g.options;
  o.steps = get_field(j, "steps", o.steps, "gan");
  o.batch = get_field(j, "batch", o.batch, "gan");
  o.lr_generator = get_field(j, "lr_generator", o.lr_generator, "gan");
  o.lr_discriminator = get_field(j, "lr_discriminator", o.lr_discriminator, "gan");
  o.freeze_batch = get_field(j, "freeze_batch", o.freeze_batch, "gan");
  const auto loss = get_field<std::string>(j, "loss", "saturating", "gan");
  if (loss == "saturating") o.generator_loss = GeneratorLoss::Saturating;
  else if (loss == "non_saturating") o.generator_loss = GeneratorLoss::NonSaturating;
  else throw ConfigError("gan.loss", "expected saturating|non_saturating, got '" + loss + "'");
  if (!(o.lr_generator > 0.0 && o.lr_discriminator > 0.0)) throw ConfigError("gan.lr_generator", "must be > 0");
  if (o.batch < 1) throw ConfigError("gan.batch", "must be >= 1");
  if (g.latent_dim < 1) throw ConfigError("gan.latent_dim", "must be >= 1");
  return g;
}

inline ClassifierSettings classifier_from_json(const nlohmann::json& j) {
  reject_unknown(j, {"path", "steps", "batch", "lr"}, "classifier");
  ClassifierSettings c;
  c.path = get_field<std::string>(j, "path", "", "classifier");
  c.options.steps = get_field(j, "steps", c.options.steps, "classifier");
  c.options.batch = get_field(j, "batch", c.options.batch, "classifier");
  c.options.lr = get_field(j, "lr", c.options.lr, "classifier");
  if (!(c.options.lr > 0.0)) throw ConfigError("classifier.lr", "must be > 0");
  if (c.options.batch < 1) throw ConfigError("classifier.batch", "must be >= 1");
  return c;
}

inline DefenseSettings defense_from_json(const nlohmann::json& j) {
  reject_unknown(j, {"attack", "epsilon", "alphas", "target_drop", "sources", "sign", "bim_steps", "test_count",
                     "batch"},
                 "defense");
  DefenseSettings d;
  const auto attack = get_field<std::string>(j, "attack", "universal", "defense");
  if (attack == "universal") d.attack = DefenseSettings::Attack::Universal;
  else if (attack == "fgsm") d.attack = DefenseSettings::Attack::Fgsm;
  else if (attack == "bim") d.attack = DefenseSettings::Attack::Bim;
  else throw ConfigError("defense.attack", "expected universal|fgsm|bim, got '" + attack + "'");
  d.epsilon = get_field(j, "epsilon", d.epsilon, "defense");
  d.alphas = get_field(j, "alphas", d.alphas, "defense");
  d.target_drop = get_field(j, "target_drop", d.target_drop, "defense");
  d.sources = get_field(j, "sources", d.sources, "defense");
  const auto sign = get_field<std::string>(j, "sign", "as_written", "defense");
  if (sign == "as_written") d.sign = UniversalSign::AsWritten;
  else if (sign == "corrected") d.sign = UniversalSign::Corrected;
  else throw ConfigError("defense.sign", "expected as_written|corrected, got '" + sign + "'");
  d.bim_steps = get_field(j, "bim_steps", d.bim_steps, "defense");
  d.test_count = get_field(j, "test_count", d.test_count, "defense");
  d.batch = get_field(j, "batch", d.batch, "defense");
  if (!(d.epsilon >= 0.0)) throw ConfigError("defense.epsilon", "must be >= 0");
  if (d.alphas.empty()) throw ConfigError("defense.alphas", "must not be empty");
  if (d.sources < 1) throw ConfigError("defense.sources", "must be >= 1");
  if (d.test_count < 1) throw ConfigError("defense.test_count", "must be >= 1");
  if (d.batch < 1) throw ConfigError("defense.batch", "must be >= 1");
  return d;
}

}  // namespace detail

/// Parses and checks types and ranges. File existence is checked separately
/// by `validate_files`, since not every subcommand reads every file.
inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  using namespace detail;
  reject_unknown(j, {"task", "method", "corruption", "recovery", "surrogate", "prior", "dataset", "gan", "classifier",
                     "defense", "out", "seeds"},
                 "");
  ExperimentConfig c;
  c.source = j;
  c.task = task_from_string(get_field<std::string>(j, "task", "negative", ""));
  c.method = method_from_string(get_field<std::string>(j, "method", "mimicgan", ""));
  if (j.contains("corruption")) {
    c.corruption = in_section("corruption", [&] { return corruption_from_json(object_at(j, "corruption")); });
  } else {
    c.corruption.kind = default_corruption(c.task);
  }
  // Task defaults first, then explicit overrides.
  c.recovery = in_section("recovery", [&] {
    return recovery_from_json(object_at(j, "recovery"), RecoveryConfig::for_task(c.task));
  });
  in_section("recovery", [&] { c.recovery.validate(c.method != Method::MimicGan); return 0; });
  c.surrogate = in_section("surrogate", [&] { return surrogate_from_json(object_at(j, "surrogate")); });
  if (j.contains("prior")) c.prior = prior_from_json(object_at(j, "prior"));
  else c.prior.kind = PriorSource::Kind::Linear;
  c.dataset = dataset_from_json(object_at(j, "dataset"));
  c.gan = gan_from_json(object_at(j, "gan"));
  c.classifier = classifier_from_json(object_at(j, "classifier"));
  c.defense = defense_from_json(object_at(j, "defense"));
  c.out = get_field<std::string>(j, "out", c.out, "");
  c.seeds = get_field(j, "seeds", c.seeds, "");
  if (c.out.empty()) throw ConfigError("out", "must not be empty");
  if (c.seeds.empty()) throw ConfigError("seeds", "must list at least one seed");
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("--config", "cannot open '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("--config", path + ": " + e.what());
  }
  return config_from_json(j);
}

/// Which referenced files a subcommand reads.
struct FileNeeds {
  bool prior = false;
  bool discriminator = false;
  bool dataset = true;
  bool classifier = false;
};

inline void validate_files(const ExperimentConfig& c, const FileNeeds& needs) {
  namespace fs = std::filesystem;
  auto require = [](const std::string& path, const std::string& field) {
    if (!fs::is_regular_file(path)) throw ConfigError(field, "file not found: '" + path + "'");
  };
  if (needs.prior && c.prior.kind == PriorSource::Kind::Weights) {
    require(c.prior.generator, "prior.generator");
    require(c.prior.generator + ".json", "prior.generator");
    if (needs.discriminator) {
      if (c.prior.discriminator.empty()) throw ConfigError("prior.discriminator", "required by this subcommand");
      require(c.prior.discriminator, "prior.discriminator");
      require(c.prior.discriminator + ".json", "prior.discriminator");
    } else if (!c.prior.discriminator.empty()) {
      require(c.prior.discriminator, "prior.discriminator");
    }
  }
  if (needs.dataset && c.dataset.kind == DatasetSource::Kind::Idx) {
    require(c.dataset.images, "dataset.images");
    require(c.dataset.labels, "dataset.labels");
  }
  if (needs.classifier && !c.classifier.path.empty()) {
    require(c.classifier.path, "classifier.path");
    require(c.classifier.path + ".json", "classifier.path");
  }
}

// ---------------------------------------------------------------- seeds

/// Precedence: command-line --seed, then MIMICINV_SEED, then the config list.
inline std::vector<std::uint64_t> resolve_seeds(const ExperimentConfig& c, std::optional<std::uint64_t> cli_seed) {
  if (cli_seed) return {*cli_seed};
  if (const char* env = std::getenv("MIMICINV_SEED"); env && *env) {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(env, &used);
      if (used != std::string(env).size()) throw std::invalid_argument(env);
      return {v};
    } catch (const std::exception&) {
      throw ConfigError("MIMICINV_SEED", std::string("not an unsigned integer: '") + env + "'");
    }
  }
  return c.seeds;
}

// ---------------------------------------------------------------- construction

inline Generator make_generator(const PriorSource& p) {
  switch (p.kind) {
    case PriorSource::Kind::Weights: return load_generator(p.generator);
    case PriorSource::Kind::Ring: return Generator(RingGenerator{p.radius, p.ambient});
    case PriorSource::Kind::Linear: {
      Rng rng(p.seed);
      Tensor a = rng.normal_tensor({p.ambient, p.latent}, 1.0 / std::sqrt(static_cast<double>(p.latent)));
      return Generator(LinearGenerator{std::move(a), Tensor({p.ambient})});
    }
  }
  throw ConfigError("prior", "unsupported prior");
}

inline std::optional<Discriminator> make_discriminator(const PriorSource& p) {
  if (p.kind != PriorSource::Kind::Weights || p.discriminator.empty()) return std::nullopt;
  return load_discriminator(p.discriminator);
}

/// Consecutive disjoint splits of the given sizes. Synthetic sets draw each
/// split from `rng` in order; IDX files are read once and sliced in order.
/// `Prior` samples G(z) with z uniform in [-1,1] and needs a generator.
inline std::vector<LabeledImages> load_splits(const DatasetSource& d, const std::vector<std::size_t>& sizes, Rng& rng,
                                              const Generator* prior = nullptr) {
  std::vector<LabeledImages> out;
  if (d.kind == DatasetSource::Kind::Idx) {
    LabeledImages all = read_idx(d.images, d.labels);
    std::size_t need = 0;
    for (auto n : sizes) need += n;
    if (all.labels.size() < need) {
      throw ConfigError("dataset.images", "holds " + std::to_string(all.labels.size()) + " images, " +
                                              std::to_string(need) + " requested");
    }
    std::size_t at = 0;
    for (auto n : sizes) {
      if (n == 0) {
        out.emplace_back();
        continue;
      }
      out.push_back({all.images.rows(at, at + n), std::vector<int>(all.labels.begin() + static_cast<std::ptrdiff_t>(at),
                                                                   all.labels.begin() + static_cast<std::ptrdiff_t>(at + n))});
      at += n;
    }
    return out;
  }
  for (auto n : sizes) {
    if (n == 0) {
      out.emplace_back();
      continue;
    }
    switch (d.kind) {
      case DatasetSource::Kind::Glyphs: out.push_back(glyphs(n, rng)); break;
      case DatasetSource::Kind::EightGaussians:
        out.push_back({EightGaussians{}.sample(n, rng), std::vector<int>(n, 0)});
        break;
      case DatasetSource::Kind::Prior: {
        if (!prior) throw ConfigError("dataset.kind", "'prior' needs a generator");
        Tensor z = rng.uniform_tensor({n, prior->latent_dim()}, -1.0, 1.0);
        out.push_back({prior->generate(z), std::vector<int>(n, 0)});
        break;
      }
      case DatasetSource::Kind::Idx: break;
    }
  }
  return out;
}

inline LabeledImages load_dataset(const DatasetSource& d, std::size_t count, Rng& rng,
                                  const Generator* prior = nullptr) {
  return load_splits(d, {count}, rng, prior).front();
}

// ---------------------------------------------------------------- manifest

/// 64-bit FNV-1a, printed as 16 hex digits. Stable across platforms.
inline std::string fnv1a_hex(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) h = (h ^ c) * 0x100000001b3ULL;
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

/// Hash of the config as parsed, keys sorted, output directory excluded so
/// the same experiment hashes alike wherever it is written.
inline std::string config_hash(const ExperimentConfig& c) {
  nlohmann::json j = c.source;
  if (j.is_object()) j.erase("out");
  return fnv1a_hex(j.dump());
}

inline nlohmann::json make_manifest(const ExperimentConfig& c, const std::string& subcommand,
                                    const std::vector<std::uint64_t>& seeds) {
  return {{"subcommand", subcommand},
          {"version", kVersion},
          {"config_hash", config_hash(c)},
          {"seeds", seeds},
          {"config", c.source}};
}

inline void write_json(const nlohmann::json& j, const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << j.dump(2) << "\n";
}

// ---------------------------------------------------------------- metrics

/// One recovery run. Wall time is kept out of metrics.csv so that file is
/// reproducible bit for bit; it goes to timing.csv.
struct MetricRecord {
  std::string task;
  Method method = Method::MimicGan;
  std::uint64_t seed = 0;
  std::vector<double> psnr;
  double mean_psnr = 0.0;
  double wall_seconds = 0.0;
};

inline constexpr const char* kMetricsCsvHeader = "task,method,seed,mean_psnr,psnr_per_image";
inline constexpr const char* kTimingCsvHeader = "task,method,seed,wall_seconds";

/// Per-image values are ';'-separated inside the last column.
inline void write_metrics_csv(std::ostream& os, const std::vector<MetricRecord>& rows) {
  os << kMetricsCsvHeader << "\n";
  for (const auto& r : rows) {
    os << r.task << "," << to_string(r.method) << "," << r.seed << "," << detail::csv_number(r.mean_psnr) << ",";
    for (std::size_t i = 0; i < r.psnr.size(); ++i) os << (i ? ";" : "") << detail::csv_number(r.psnr[i]);
    os << "\n";
  }
}

inline void write_timing_csv(std::ostream& os, const std::vector<MetricRecord>& rows) {
  os << kTimingCsvHeader << "\n";
  for (const auto& r : rows) {
    os << r.task << "," << to_string(r.method) << "," << r.seed << "," << detail::csv_number(r.wall_seconds) << "\n";
  }
}

}  // namespace mimicinv

#endif  // MIMICINV_CONFIG_HPP
