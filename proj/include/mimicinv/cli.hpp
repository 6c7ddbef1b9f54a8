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


// Command-line harness. Subcommands: train-gan, train-classifier, corrupt,
// recover, defend, evaluate, grad-check. Each writes its artifacts under the
// output directory, one subdirectory per seed, plus a manifest.

#ifndef MIMICINV_CLI_HPP
#define MIMICINV_CLI_HPP

#include <atomic>
#include <chrono>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "mimicinv/config.hpp"
#include "mimicinv/gradsuite.hpp"
#include "mimicinv/metrics.hpp"

namespace mimicinv {
namespace cli {

namespace fs = std::filesystem;

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::size_t parallel_seeds = 1;
  std::string method;
};

/// Images shown per grid row.
inline constexpr std::size_t kGridColumns = 8;

inline fs::path seed_dir(const ExperimentConfig& c, std::uint64_t seed) {
  fs::path p = fs::path(c.out) / ("seed_" + std::to_string(seed));
  fs::create_directories(p);
  return p;
}

inline std::ofstream open_out(const fs::path& p) {
  std::ofstream f(p);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  return f;
}

inline bool is_image_batch(const Tensor& t) { return t.rank() == 4 && (t.dim(3) == 1 || t.dim(3) == 3); }

inline Tensor head_rows(const Tensor& t) { return t.rows(0, std::min(kGridColumns, t.dim(0))); }

inline std::string grid_name(const Tensor& t) { return t.dim(3) == 1 ? "grid.pgm" : "grid.ppm"; }

/// Runs `fn(seed)` for every seed on up to `workers` threads. Results come
/// back in seed-list order; the first failure (in that order) is rethrown.
template <class R, class F>
std::vector<R> for_each_seed(const std::vector<std::uint64_t>& seeds, std::size_t workers, F fn) {
  std::vector<std::optional<R>> out(seeds.size());
  std::vector<std::exception_ptr> errors(seeds.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < seeds.size();) {
      try {
        out[i] = fn(seeds[i]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  workers = std::clamp<std::size_t>(workers, 1, seeds.size());
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  std::vector<R> res;
  for (auto& r : out) res.push_back(std::move(*r));
  return res;
}

/// Per-seed derived settings shared by every subcommand, so paired runs
/// (e.g. recover --method pgd and --method mimicgan) see the same data and
/// the same observations.
struct SeedContext {
  std::uint64_t seed;
  Rng data_rng;
  CorruptionSpec corruption;
  RecoveryConfig recovery;
};

inline SeedContext seed_context(const ExperimentConfig& c, std::uint64_t seed) {
  SeedContext s{seed, Rng(c.dataset.seed + seed), c.corruption, c.recovery};
  s.corruption.seed = c.corruption.seed + seed;
  s.recovery.seed = c.recovery.seed + seed;
  return s;
}

inline std::size_t observation_count(const ExperimentConfig& c) {
  return c.recovery.observations ? c.recovery.observations : c.dataset.count;
}

// ---------------------------------------------------------------- train-gan

inline int train_gan(const ExperimentConfig& c, const std::vector<std::uint64_t>& seeds, std::size_t workers) {
  validate_files(c, {.prior = false, .discriminator = false, .dataset = true, .classifier = false});
  if (c.dataset.kind == DatasetSource::Kind::Prior) throw ConfigError("dataset.kind", "train-gan needs real data");
  const bool toy = c.gan.architecture == GanSettings::Architecture::Toy2d;
  const Network gnet = toy ? architectures::toy2d_generator(c.gan.latent_dim, c.gan.hidden)
                           : architectures::glyph_generator(c.gan.latent_dim);
  const Network dnet = toy ? architectures::toy2d_discriminator(c.gan.hidden) : architectures::glyph_discriminator();
  auto rows = for_each_seed<std::string>(seeds, workers, [&](std::uint64_t seed) {
    auto ctx = seed_context(c, seed);
    Tensor data = load_dataset(c.dataset, c.dataset.count, ctx.data_rng).images;
    Rng rng(seed);
    GanResult r = gan_train(data, gnet, dnet, c.gan.options, rng);
    const fs::path dir = seed_dir(c, seed);
    save_generator(r.generator, (dir / "generator.bin").string());
    save_discriminator(r.discriminator, (dir / "discriminator.bin").string());
    {
      auto f = open_out(dir / "gan_trace.csv");
      f << "step,d_loss,g_loss\n";
      for (std::size_t i = 0; i < r.trace.d_loss.size(); ++i)
        f << i + 1 << "," << detail::csv_number(r.trace.d_loss[i]) << "," << detail::csv_number(r.trace.g_loss[i])
          << "\n";
    }
    Tensor samples = r.generator.generate(sample_z(r.generator.latent_dim(), toy ? 1000 : 2 * kGridColumns, rng));
    std::string modes;
    if (toy) {
      modes = std::to_string(EightGaussians{}.modes_covered(samples, 10));
      auto f = open_out(dir / "samples.csv");
      f << "x,y\n";
      for (std::size_t i = 0; i < samples.dim(0); ++i)
        f << detail::csv_number(samples[2 * i]) << "," << detail::csv_number(samples[2 * i + 1]) << "\n";
    } else if (is_image_batch(samples)) {
      write_image_grid({samples.rows(0, kGridColumns), samples.rows(kGridColumns, 2 * kGridColumns)},
                       (dir / grid_name(samples)).string());
    }
    const double dacc = discriminator_accuracy(r.generator, r.discriminator, data, rng);
    return std::to_string(seed) + "," + detail::csv_number(r.trace.d_loss.empty() ? 0.0 : r.trace.d_loss.back()) +
           "," + detail::csv_number(r.trace.g_loss.empty() ? 0.0 : r.trace.g_loss.back()) + "," +
           detail::csv_number(dacc) + "," + modes;
  });
  auto f = open_out(fs::path(c.out) / "gan_metrics.csv");
  f << "seed,d_loss,g_loss,discriminator_accuracy,modes_covered\n";
  for (const auto& r : rows) f << r << "\n";
  return 0;
}

// ---------------------------------------------------------------- train-classifier

inline int train_classifier_cmd(const ExperimentConfig& c, const std::vector<std::uint64_t>& seeds,
                                std::size_t workers) {
  validate_files(c, {.prior = false, .discriminator = false, .dataset = true, .classifier = false});
  if (c.dataset.kind != DatasetSource::Kind::Glyphs && c.dataset.kind != DatasetSource::Kind::Idx)
    throw ConfigError("dataset.kind", "train-classifier needs labelled images (glyphs or idx)");
  auto rows = for_each_seed<std::string>(seeds, workers, [&](std::uint64_t seed) {
    auto ctx = seed_context(c, seed);
    const std::size_t test_n = std::max<std::size_t>(1, c.dataset.count / 4);
    auto splits = load_splits(c.dataset, {c.dataset.count, test_n}, ctx.data_rng);
    const auto& train = splits[0];
    const auto& test = splits[1];
    const Shape in(train.images.shape().begin() + 1, train.images.shape().end());
    if (in != Shape{kGlyphSize, kGlyphSize, 1})
      throw ConfigError("dataset.images", "classifier expects 14x14x1 images, got " + to_string(in));
    int classes = 0;
    for (int l : train.labels) classes = std::max(classes, l + 1);
    Rng rng(seed);
    auto t = train_classifier(train.images, train.labels, architectures::glyph_classifier(classes),
                              c.classifier.options, rng);
    const fs::path dir = seed_dir(c, seed);
    save_classifier(t.classifier, (dir / "classifier.bin").string());
    auto f = open_out(dir / "classifier_trace.csv");
    f << "step,loss,batch_accuracy\n";
    for (std::size_t i = 0; i < t.loss.size(); ++i)
      f << i + 1 << "," << detail::csv_number(t.loss[i]) << "," << detail::csv_number(t.accuracy[i]) << "\n";
    return std::to_string(seed) + "," + detail::csv_number(accuracy(t.classifier, train.images, train.labels)) + "," +
           detail::csv_number(accuracy(t.classifier, test.images, test.labels));
  });
  auto f = open_out(fs::path(c.out) / "classifier_metrics.csv");
  f << "seed,train_accuracy,test_accuracy\n";
  for (const auto& r : rows) f << r << "\n";
  return 0;
}

// ---------------------------------------------------------------- corrupt

struct Observation {
  Tensor clean;
  Tensor observed;
};

inline Observation observe(const ExperimentConfig& c, SeedContext& ctx, const Generator* prior) {
  Tensor x = load_dataset(c.dataset, observation_count(c), ctx.data_rng, prior).images;
  if (x.rank() == 4) return {x, corrupt(x, ctx.corruption)};
  // Flat signals: only the additive measurement noise applies.
  if (ctx.corruption.kind != CorruptionKind::Identity)
    throw ConfigError("corruption.kind", "image corruptions need [N,H,W,C] data, got " + to_string(x.shape()));
  Tensor y = x;
  Rng rng(ctx.corruption.seed);
  for (auto& v : y.data()) v += ctx.corruption.measurement_noise * rng.normal();
  return {x, y};
}

inline void save_tensors(const Params& tensors, const fs::path& p) { save_params(tensors, p.string()); }

inline int corrupt_cmd(const ExperimentConfig& c, const std::vector<std::uint64_t>& seeds, std::size_t workers) {
  const bool needs_prior = c.dataset.kind == DatasetSource::Kind::Prior;
  validate_files(c, {.prior = needs_prior, .discriminator = false, .dataset = true, .classifier = false});
  std::optional<Generator> g;
  if (needs_prior) g = make_generator(c.prior);
  auto rows = for_each_seed<std::string>(seeds, workers, [&](std::uint64_t seed) {
    auto ctx = seed_context(c, seed);
    Observation o = observe(c, ctx, g ? &*g : nullptr);
    const fs::path dir = seed_dir(c, seed);
    save_tensors({{"clean", o.clean}, {"observed", o.observed}}, dir / "observations.bin");
    if (is_image_batch(o.clean))
      write_image_grid({head_rows(o.clean), head_rows(o.observed)}, (dir / grid_name(o.clean)).string());
    return std::to_string(seed) + "," + to_string(ctx.corruption.kind) + "," +
           detail::csv_number(mean_finite(psnr_per_image(o.clean, o.observed)));
  });
  auto f = open_out(fs::path(c.out) / "corrupt_metrics.csv");
  f << "seed,corruption,mean_psnr_observed\n";
  for (const auto& r : rows) f << r << "\n";
  return 0;
}

// ---------------------------------------------------------------- recover / evaluate

struct MethodRun {
  MetricRecord metrics;
  RecoveryResult result;
  /// f_hat(G(z_hat)); empty for methods without a surrogate.
  std::optional<Tensor> estimated_corruption;
};

inline MethodRun run_method(const ExperimentConfig& c, Method m, const Observation& o, const Generator& g,
                            const Discriminator* d, const RecoveryConfig& cfg, std::uint64_t seed) {
  RecoveryExtras extras;
  extras.truth = &o.clean;
  const auto t0 = std::chrono::steady_clock::now();
  MethodRun run;
  switch (m) {
    case Method::MimicGan:
      if (g.output_shape().size() != 3)
        throw ConfigError("method", "mimicgan needs an image prior; use pgd or cowboy for flat signals");
      run.result = run_mimicgan(o.observed, g, d, c.surrogate, cfg, extras);
      run.estimated_corruption = forward(run.result.surrogate, run.result.surrogate_params, run.result.x_hat);
      break;
    case Method::Pgd: run.result = run_pgd(o.observed, g, d, cfg, extras); break;
    case Method::Cowboy:
      if (!d) throw ConfigError("prior.discriminator", "cowboy needs a discriminator");
      run.result = run_cowboy(o.observed, g, *d, cfg, extras);
      break;
  }
  run.metrics = {to_string(c.task), m, seed, run.result.psnr, mean_finite(run.result.psnr),
                 std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()};
  return run;
}

inline void write_run_csvs(const fs::path& dir, const std::vector<MetricRecord>& rows) {
  auto m = open_out(dir / "metrics.csv");
  write_metrics_csv(m, rows);
  auto t = open_out(dir / "timing.csv");
  write_timing_csv(t, rows);
}

inline FileNeeds recovery_needs(const ExperimentConfig& c, bool cowboy) {
  return {.prior = true,
          .discriminator = cowboy || c.recovery.lambda_adv > 0.0,
          .dataset = true,
          .classifier = false};
}

inline int recover_cmd(const ExperimentConfig& c, const std::vector<std::uint64_t>& seeds, std::size_t workers) {
  validate_files(c, recovery_needs(c, c.method == Method::Cowboy));
  const Generator g = make_generator(c.prior);
  const auto d = make_discriminator(c.prior);
  auto rows = for_each_seed<MetricRecord>(seeds, workers, [&](std::uint64_t seed) {
    auto ctx = seed_context(c, seed);
    Observation o = observe(c, ctx, &g);
    MethodRun run = run_method(c, c.method, o, g, d ? &*d : nullptr, ctx.recovery, seed);
    const fs::path dir = seed_dir(c, seed);
    {
      auto f = open_out(dir / "trace.csv");
      write_trace_csv(f, run.result);
    }
    write_run_csvs(dir, {run.metrics});
    Params saved{{"z", run.result.z}, {"x_hat", run.result.x_hat}, {"observed", o.observed}, {"clean", o.clean}};
    save_tensors(saved, dir / "recovered.bin");
    if (c.method == Method::MimicGan) save_params(run.result.surrogate_params, (dir / "surrogate.bin").string());
    if (is_image_batch(o.observed)) {
      std::vector<Tensor> grid{head_rows(o.observed)};
      if (run.estimated_corruption) grid.push_back(head_rows(*run.estimated_corruption));
      grid.push_back(head_rows(run.result.x_hat));
      write_image_grid(grid, (dir / grid_name(o.observed)).string());
    }
    for (const auto& w : run.result.warnings) std::cerr << "warning (seed " << seed << "): " << w << "\n";
    return run.metrics;
  });
  write_run_csvs(c.out, rows);
  for (const auto& r : rows)
    std::cout << to_string(r.method) << " seed " << r.seed << " mean PSNR " << r.mean_psnr << " dB\n";
  return 0;
}

inline constexpr const char* kSummaryCsvHeader = "task,seeds,mean_psnr_mimicgan,mean_psnr_pgd,wins,ties,sign_test_p";

/// All methods on identical observations: figure-layout grid
/// (Observed / Estimated Corruption / PGD / Proposed) and a paired summary.
inline int evaluate_cmd(const ExperimentConfig& c, const std::vector<std::uint64_t>& seeds, std::size_t workers) {
  validate_files(c, recovery_needs(c, false));
  const Generator g = make_generator(c.prior);
  const auto d = make_discriminator(c.prior);
  std::vector<Method> methods{Method::Pgd};
  if (d) methods.push_back(Method::Cowboy);
  methods.push_back(Method::MimicGan);
  auto per_seed = for_each_seed<std::vector<MetricRecord>>(seeds, workers, [&](std::uint64_t seed) {
    auto ctx = seed_context(c, seed);
    Observation o = observe(c, ctx, &g);
    const fs::path dir = seed_dir(c, seed);
    std::vector<MetricRecord> rows;
    std::optional<Tensor> estimated, pgd, proposed;
    for (Method m : methods) {
      MethodRun run = run_method(c, m, o, g, d ? &*d : nullptr, ctx.recovery, seed);
      auto f = open_out(dir / ("trace_" + std::string(to_string(m)) + ".csv"));
      write_trace_csv(f, run.result);
      if (m == Method::Pgd) pgd = run.result.x_hat;
      if (m == Method::MimicGan) proposed = run.result.x_hat, estimated = run.estimated_corruption;
      rows.push_back(run.metrics);
    }
    write_run_csvs(dir, rows);
    if (is_image_batch(o.observed)) {
      write_image_grid({head_rows(o.observed), head_rows(*estimated), head_rows(*pgd), head_rows(*proposed)},
                       (dir / grid_name(o.observed)).string());
    }
    return rows;
  });
  std::vector<MetricRecord> all;
  double sum_m = 0.0, sum_p = 0.0;
  std::size_t wins = 0, ties = 0;
  for (const auto& rows : per_seed) {
    double m = 0.0, p = 0.0;
    for (const auto& r : rows) {
      all.push_back(r);
      if (r.method == Method::MimicGan) m = r.mean_psnr;
      if (r.method == Method::Pgd) p = r.mean_psnr;
    }
    sum_m += m, sum_p += p;
    wins += m > p;
    ties += m == p;
  }
  write_run_csvs(c.out, all);
  const std::size_t n = per_seed.size();
  auto f = open_out(fs::path(c.out) / "summary.csv");
  f << kSummaryCsvHeader << "\n"
    << to_string(c.task) << "," << n << "," << detail::csv_number(sum_m / n) << "," << detail::csv_number(sum_p / n)
    << "," << wins << "," << ties << "," << detail::csv_number(sign_test_p(wins, n - ties)) << "\n";
  std::cout << "mimicgan " << sum_m / n << " dB, pgd " << sum_p / n << " dB, mimicgan wins " << wins << "/" << n
            << " (sign test p = " << sign_test_p(wins, n - ties) << ")\n";
  return 0;
}

// ---------------------------------------------------------------- defend

struct AttackOutcome {
  Tensor attacked;
  double alpha = 0.0;
  double accuracy = 0.0;
  std::vector<std::pair<double, double>> sweep;  // (alpha, accuracy)
};

/// Universal attack: first alpha (in config order) whose accuracy falls by
/// target_drop, else the most damaging one. FGSM/BIM are per-image.
inline AttackOutcome attack(const DefenseSettings& s, const Classifier& clf, const LabeledImages& test,
                            const LabeledImages& sources, double clean) {
  AttackOutcome out;
  switch (s.attack) {
    case DefenseSettings::Attack::Universal: {
      Tensor nu = universal_perturbation(clf, sources.images, sources.labels, s.epsilon, s.sign);
      std::optional<std::size_t> worst;
      for (double a : s.alphas) {
        Tensor x = apply_universal(test.images, nu, a);
        const double acc = accuracy(clf, x, test.labels);
        out.sweep.emplace_back(a, acc);
        if (!worst || acc < out.sweep[*worst].second) worst = out.sweep.size() - 1, out.attacked = x;
        if (acc <= clean - s.target_drop) {
          out.attacked = std::move(x);
          worst = out.sweep.size() - 1;
          break;
        }
      }
      out.alpha = out.sweep[*worst].first;
      out.accuracy = out.sweep[*worst].second;
      break;
    }
    case DefenseSettings::Attack::Fgsm:
      out.attacked = fgsm(clf, test.images, test.labels, s.epsilon);
      out.accuracy = accuracy(clf, out.attacked, test.labels);
      break;
    case DefenseSettings::Attack::Bim:
      out.attacked = bim(clf, test.images, test.labels, s.epsilon, s.bim_steps, s.epsilon / s.bim_steps);
      out.accuracy = accuracy(clf, out.attacked, test.labels);
      break;
  }
  return out;
}

inline const char* attack_name(DefenseSettings::Attack a) {
  switch (a) {
    case DefenseSettings::Attack::Universal: return "universal";
    case DefenseSettings::Attack::Fgsm: return "fgsm";
    case DefenseSettings::Attack::Bim: return "bim";
  }
  return "?";
}

inline int defend_cmd(const ExperimentConfig& c, const std::vector<std::uint64_t>& seeds, std::size_t workers) {
  FileNeeds needs = recovery_needs(c, false);
  needs.classifier = true;
  validate_files(c, needs);
  if (c.dataset.kind != DatasetSource::Kind::Glyphs && c.dataset.kind != DatasetSource::Kind::Idx)
    throw ConfigError("dataset.kind", "defend needs labelled images (glyphs or idx)");
  const Generator g = make_generator(c.prior);
  const auto d = make_discriminator(c.prior);
  std::optional<Classifier> loaded;
  if (!c.classifier.path.empty()) loaded = load_classifier(c.classifier.path);
  auto rows = for_each_seed<DefenseRecord>(seeds, workers, [&](std::uint64_t seed) {
    auto ctx = seed_context(c, seed);
    const std::size_t train_n = loaded ? 0 : c.dataset.count;
    auto splits = load_splits(c.dataset, {train_n, c.defense.test_count, c.defense.sources}, ctx.data_rng);
    Classifier clf;
    if (loaded) {
      clf = *loaded;
    } else {
      Rng rng(seed);
      clf = train_classifier(splits[0].images, splits[0].labels, architectures::glyph_classifier(),
                             c.classifier.options, rng)
                .classifier;
    }
    const auto& test = splits[1];
    const double clean = accuracy(clf, test.images, test.labels);
    AttackOutcome atk = attack(c.defense, clf, test, splits[2], clean);
    Tensor recovered;
    auto pred = clean_and_predict(atk.attacked, g, d ? &*d : nullptr, c.surrogate, ctx.recovery, clf,
                                  c.defense.batch, &recovered);
    DefenseRecord rec{"seed_" + std::to_string(seed), attack_name(c.defense.attack), c.defense.epsilon, atk.alpha,
                      clean, atk.accuracy, accuracy(pred, test.labels)};
    const fs::path dir = seed_dir(c, seed);
    {
      auto f = open_out(dir / "defense.csv");
      write_defense_csv(f, {rec});
    }
    if (!atk.sweep.empty()) {
      auto f = open_out(dir / "alpha_sweep.csv");
      f << "alpha,accuracy\n";
      for (auto [a, acc] : atk.sweep) f << detail::csv_number(a) << "," << detail::csv_number(acc) << "\n";
    }
    if (is_image_batch(test.images)) {
      write_image_grid({head_rows(test.images), head_rows(atk.attacked), head_rows(recovered)},
                       (dir / grid_name(test.images)).string());
    }
    return rec;
  });
  auto f = open_out(fs::path(c.out) / "defense.csv");
  write_defense_csv(f, rows);
  for (const auto& r : rows)
    std::cout << r.scenario << ": clean " << r.accuracy_clean << ", attacked " << r.accuracy_attacked
              << ", defended " << r.accuracy_defended << "\n";
  return 0;
}

// ---------------------------------------------------------------- grad-check

inline constexpr const char* kGradCheckCsvHeader = "case,points,redraws,max_rel_error,pass";

inline int grad_check_cmd(const fs::path& out, std::uint64_t seed, std::size_t points, double tolerance) {
  GradSuiteOptions opt;
  opt.points = points;
  opt.seed = seed;
  auto results = run_grad_suite(opt);
  fs::create_directories(out);
  auto f = open_out(out / "gradcheck.csv");
  f << kGradCheckCsvHeader << "\n";
  bool ok = true;
  for (const auto& r : results) {
    const bool pass = r.max_rel_error <= tolerance;
    ok = ok && pass;
    f << r.name << "," << r.points << "," << r.redraws << "," << detail::csv_number(r.max_rel_error) << ","
      << (pass ? 1 : 0) << "\n";
    std::cout << (pass ? "ok   " : "FAIL ") << r.name << " max rel error " << r.max_rel_error << "\n";
  }
  return ok ? 0 : 3;
}

// ---------------------------------------------------------------- entry

inline void write_manifest(const ExperimentConfig& c, const std::string& sub, const std::vector<std::uint64_t>& seeds) {
  fs::create_directories(c.out);
  write_json(make_manifest(c, sub, seeds), fs::path(c.out) / "manifest.json");
}

/// Exit codes: 0 success, 1 runtime failure, 2 usage or config error,
/// 3 grad-check over tolerance.
inline int cli_main(int argc, char** argv) {
  CLI::App app{"Image recovery with corruption-mimicking GAN inversion"};
  app.require_subcommand(1);
  CommonFlags flags;
  std::size_t gc_points = 100;
  double gc_tol = 1e-5;

  auto add_common = [&](CLI::App* s, bool config_required) {
    auto* opt = s->add_option("--config", flags.config, "experiment config (JSON)");
    if (config_required) opt->required();
    opt->check(CLI::ExistingFile);
    s->add_option("--seed", flags.seed, "single seed; overrides MIMICINV_SEED and the config list");
    s->add_option("--out", flags.out, "output directory; overrides the config");
    s->add_option("--parallel-seeds", flags.parallel_seeds, "worker threads, one seed each")
        ->check(CLI::PositiveNumber);
  };
  auto* train_gan_s = app.add_subcommand("train-gan", "train a GAN prior on the configured dataset");
  auto* train_clf_s = app.add_subcommand("train-classifier", "train a glyph/IDX classifier");
  auto* corrupt_s = app.add_subcommand("corrupt", "apply the configured corruption and save observations");
  auto* recover_s = app.add_subcommand("recover", "recover images from corrupted observations");
  auto* defend_s = app.add_subcommand("defend", "attack a classifier and clean inputs before prediction");
  auto* evaluate_s = app.add_subcommand("evaluate", "compare mimicgan, pgd and cowboy on identical observations");
  auto* grad_s = app.add_subcommand("grad-check", "check analytic gradients against central differences");
  for (auto* s : {train_gan_s, train_clf_s, corrupt_s, recover_s, defend_s, evaluate_s}) add_common(s, true);
  add_common(grad_s, false);
  recover_s->add_option("--method", flags.method, "mimicgan | pgd | cowboy; overrides the config")
      ->check(CLI::IsMember({"mimicgan", "pgd", "cowboy"}));
  grad_s->add_option("--points", gc_points, "random points per case")->check(CLI::PositiveNumber);
  grad_s->add_option("--tolerance", gc_tol, "max relative error")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (grad_s->parsed()) {
      ExperimentConfig c;
      if (!flags.config.empty()) c = load_config(flags.config);
      else c.out = "runs/grad-check";
      if (!flags.out.empty()) c.out = flags.out;
      const auto seeds = resolve_seeds(c, flags.seed);
      write_manifest(c, "grad-check", seeds);
      return grad_check_cmd(c.out, seeds.front(), gc_points, gc_tol);
    }
    ExperimentConfig c = load_config(flags.config);
    if (!flags.out.empty()) c.out = flags.out;
    if (!flags.method.empty()) {
      c.method = method_from_string(flags.method, "--method");
      c.recovery.validate(c.method != Method::MimicGan);
    }
    const auto seeds = resolve_seeds(c, flags.seed);
    CLI::App* sub = app.get_subcommands().front();
    write_manifest(c, sub->get_name(), seeds);
    const std::size_t w = flags.parallel_seeds;
    if (sub == train_gan_s) return train_gan(c, seeds, w);
    if (sub == train_clf_s) return train_classifier_cmd(c, seeds, w);
    if (sub == corrupt_s) return corrupt_cmd(c, seeds, w);
    if (sub == recover_s) return recover_cmd(c, seeds, w);
    if (sub == defend_s) return defend_cmd(c, seeds, w);
    if (sub == evaluate_s) return evaluate_cmd(c, seeds, w);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace cli

using cli::cli_main;

}  // namespace mimicinv

#endif  // MIMICINV_CLI_HPP
