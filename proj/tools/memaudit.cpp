// Copyright 2026 The memaudit Authors
// SPDX-License-Identifier: Apache-2.0

// memaudit: memorization audit for 3D latent diffusion models.

#include <CLI11.hpp>

#include <iostream>
#include <optional>

#include "memaudit/cli/pipeline.hpp"
#include "memaudit/errors.hpp"
#include "memaudit/io.hpp"

namespace {

using memaudit::cli::Arm;
using memaudit::cli::Pipeline;
using nlohmann::json;

enum Exit { kOk = 0, kFailure = 1, kConfig = 2, kMissing = 3, kNumerical = 4 };

template <typename T>
void set_if(json& j, const std::string& key, const std::optional<T>& v) {
  if (v) j[key] = *v;
}

void set_in(json& j, const std::string& section, const std::string& key, const auto& v) {
  if (v) j[section][key] = *v;
}

void print_report_summary(const memaudit::audit::AuditReport& r) {
  std::size_t copies = 0;
  for (const auto& rec : r.records) copies += rec.is_copy ? 1 : 0;
  std::cout << "tau " << r.tau << " (q=" << r.quantile << "), copy rate " << r.copy_rate << " ("
            << copies << "/" << r.records.size() << ")\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"memaudit: train a latent diffusion pipeline on phantom volumes and audit it for "
               "copies of training data"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path, root;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> dims;
  bool force = false;
  app.add_option("--config", config_path, "Run config JSON (flags override its fields)");
  app.add_option("--root", root,
                 "Run root holding data/, checkpoints/ and reports/ (default $MEMAUDIT_ROOT or "
                 "./memaudit_run)");
  app.add_option("--seed", seed, "Master seed");
  app.add_option("--dims", dims, "Volume dims D,H,W");
  app.add_flag("--force", force, "Rerun stages even if cached outputs are current");

  // phantom
  auto* phantom = app.add_subcommand("phantom", "Generate the train/val phantom corpus");
  std::optional<std::size_t> count, val_count;
  std::optional<std::string> out;
  phantom->add_option("--count", count, "Training volumes");
  phantom->add_option("--val-count", val_count, "Validation volumes");
  phantom->add_option("--out", out, "Data directory");

  auto* plant = app.add_subcommand(
      "plant", "Build a synthetic pool of fresh phantoms plus planted copies of training volumes");

  bool augment = false;
  std::size_t run = 0;
  std::optional<std::size_t> epochs;

  auto* train_ae = app.add_subcommand("train-ae", "Train the latent autoencoder");
  train_ae->add_flag("--augment", augment, "Train on random orientations");
  train_ae->add_option("--epochs", epochs);

  auto* train_diff = app.add_subcommand("train-diff", "Train the latent denoiser");
  std::optional<std::size_t> steps;
  train_diff->add_flag("--augment", augment, "Train on latents of every orientation");
  train_diff->add_option("--run", run, "Run index; selects the denoiser seed");
  train_diff->add_option("--epochs", epochs);
  train_diff->add_option("--steps", steps, "Diffusion steps T");

  auto* train_con = app.add_subcommand("train-con", "Train the contrastive embedder");
  std::optional<double> margin;
  train_con->add_option("--epochs", epochs);
  train_con->add_option("--margin", margin, "Triplet margin");

  auto* generate = app.add_subcommand("generate", "Sample synthetic volumes");
  std::optional<std::size_t> multiplier;
  generate->add_flag("--augment", augment, "Use the augmented arm");
  generate->add_option("--run", run, "Run index");
  generate->add_option("--multiplier", multiplier, "Synthetic pool size / training size");

  auto* audit = app.add_subcommand("audit", "Audit a synthetic pool for training-data copies");
  std::string pool = "planted";
  bool with_ncc = false;
  std::optional<double> quantile;
  audit->add_option("--pool", pool, "planted | generated")
      ->check(CLI::IsMember({"planted", "generated"}));
  audit->add_flag("--augment", augment, "With --pool generated: the augmented arm");
  audit->add_option("--run", run, "With --pool generated: run index");
  audit->add_flag("--ncc", with_ncc, "Also run the pixel-space NCC baseline");
  audit->add_option("--quantile", quantile, "Validation quantile for the copy threshold");

  auto* experiment =
      app.add_subcommand("experiment", "Compare copy rates with and without augmentation");
  std::optional<std::size_t> seeds;
  experiment->add_option("--seeds", seeds, "Number of paired runs");

  auto* show = app.add_subcommand("config", "Print the effective run config");

  CLI11_PARSE(app, argc, argv);

  try {
    json j = json::object();
    if (!config_path.empty()) {
      if (!std::filesystem::exists(config_path)) {
        throw memaudit::MissingDependencyError("config file not found: " + config_path);
      }
      try {
        j = memaudit::read_json(config_path);
      } catch (const memaudit::FormatError& e) {
        throw memaudit::ConfigError(e.what());
      }
    }
    if (!root.empty()) {
      j["paths"] = {{"root", root}};
    }
    if (out) j["paths"]["data"] = *out;
    set_if(j, "seed", seed);
    if (dims) j["dims"] = memaudit::volumes::Dims::parse(*dims).as_array();
    set_if(j, "train_count", count);
    set_if(j, "val_count", val_count);
    set_if(j, "synth_multiplier", multiplier);
    set_if(j, "quantile", quantile);
    set_if(j, "experiment_seeds", seeds);
    if (augment) j["augment"] = true;
    if (epochs) {
      const char* section = train_ae->parsed()     ? "autoencoder"
                            : train_diff->parsed() ? "diffusion"
                                                   : "embedder";
      j[section]["epochs"] = *epochs;
    }
    set_in(j, "diffusion", "steps", steps);
    set_in(j, "embedder", "margin", margin);

    const auto config = memaudit::cli::config_from_json(j);
    if (show->parsed()) {
      std::cout << memaudit::cli::to_json(config).dump(2) << "\n";
      return kOk;
    }
    Pipeline p(config, force, &std::cerr);
    const Arm arm{config.augment, run};
    if (phantom->parsed()) {
      p.phantom();
      std::cout << "corpus: " << p.corpus_manifest().string() << "\n";
    } else if (plant->parsed()) {
      const auto copies = p.plant();
      std::cout << "planted " << copies.size() << " copies into "
                << p.pool_manifest("planted").string() << "\n";
    } else if (train_ae->parsed()) {
      p.train_autoencoder(config.augment);
      std::cout << p.autoencoder_checkpoint(config.augment).string() << "\n";
    } else if (train_diff->parsed()) {
      p.train_denoiser(arm);
      std::cout << p.denoiser_checkpoint(arm).string() << "\n";
    } else if (train_con->parsed()) {
      p.train_embedder();
      std::cout << p.embedder_checkpoint().string() << "\n";
    } else if (generate->parsed()) {
      p.generate(arm);
      std::cout << p.pool_manifest(arm.name()).string() << "\n";
    } else if (audit->parsed()) {
      const std::string name = pool == "planted" ? "planted" : arm.name();
      const auto report = p.audit(name);
      print_report_summary(report);
      if (with_ncc) {
        const auto r = p.ncc_baseline(name);
        std::size_t hits = 0;
        for (const auto& m : r.matches) hits += m.ncc >= r.threshold ? 1 : 0;
        std::cout << "ncc >= " << r.threshold << ": " << hits << "/" << r.matches.size() << "\n";
      }
      std::cout << "report: " << (p.report_dir(name) / "audit.json").string() << "\n";
    } else if (experiment->parsed()) {
      const auto r = p.experiment();
      for (const auto& row : r.rows) {
        std::cout << "run " << row.run << ": copy rate noaug " << row.copy_rate_noaug << ", aug "
                  << row.copy_rate_aug << "\n";
      }
      std::cout << "mean: noaug " << r.copy_rate_noaug << ", aug " << r.copy_rate_aug << "\n";
    }
    return kOk;
  } catch (const memaudit::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const memaudit::ShapeError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const memaudit::MissingDependencyError& e) {
    std::cerr << "missing dependency: " << e.what() << "\n";
    return kMissing;
  } catch (const memaudit::FormatError& e) {
    std::cerr << "unreadable artifact: " << e.what() << "\n";
    return kMissing;
  } catch (const memaudit::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
}
