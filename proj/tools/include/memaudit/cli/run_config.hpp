// Copyright 2026 The memaudit Authors
// SPDX-License-Identifier: Apache-2.0

// Run configuration: one JSON document covering every stage.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "memaudit/autoencoder/autoencoder.hpp"
#include "memaudit/contrastive/embedder.hpp"
#include "memaudit/diffusion/diffusion.hpp"
#include "memaudit/volumes/volume.hpp"

namespace memaudit::cli {

/// Environment variable naming the default run root.
inline constexpr const char* kRootEnv = "MEMAUDIT_ROOT";

/// MEMAUDIT_ROOT if set, else ./memaudit_run.
std::filesystem::path default_root();

struct Paths {
  std::filesystem::path data;
  std::filesystem::path checkpoints;
  std::filesystem::path reports;

  static Paths under(const std::filesystem::path& root);
};

struct PlantConfig {
  std::size_t exact = 3;
  std::size_t flipped = 4;
  std::size_t rotated = 3;

  std::size_t total() const { return exact + flipped + rotated; }
};

/// Denoiser settings for full runs: a 100-step chain with the linear
/// schedule stretched to the same total noise as the 1000-step default.
diffusion::DenoiserConfig run_denoiser_defaults();
/// Embedder settings for full runs: pooled, bounded, in-batch negatives.
contrastive::EmbedderConfig run_embedder_defaults();

struct RunConfig {
  Paths paths = Paths::under(default_root());
  std::uint64_t seed = 7;
  volumes::Dims dims{16, 16, 16};
  std::size_t train_count = 64;
  std::size_t val_count = 256;
  /// Synthetic pool size as a multiple of train_count.
  std::size_t synth_multiplier = 4;
  /// Orientation augmentation for autoencoder and denoiser training.
  bool augment = false;
  double quantile = 0.05;
  std::size_t bins = 20;
  double ncc_threshold = 0.95;
  /// Leading validation volumes used for embedder model selection (capped
  /// at val_count).
  std::size_t embedder_val_count = 64;
  std::size_t experiment_seeds = 3;
  PlantConfig plant;
  autoencoder::AutoencoderConfig autoencoder;
  diffusion::DenoiserConfig diffusion = run_denoiser_defaults();
  contrastive::EmbedderConfig embedder = run_embedder_defaults();

  void validate() const;
  std::size_t synth_count() const { return synth_multiplier * train_count; }

  // Module configs with dims and seeds filled in from the run settings.
  autoencoder::AutoencoderConfig autoencoder_config(bool augment) const;
  diffusion::DenoiserConfig denoiser_config(std::size_t run) const;
  contrastive::EmbedderConfig embedder_config() const;
  std::uint64_t generation_seed(std::size_t run) const;
};

/// Everything except paths, which do not affect results.
nlohmann::json settings_json(const RunConfig& c);
nlohmann::json to_json(const RunConfig& c);

/// Missing fields keep their defaults. Unknown fields and type errors are
/// reported as ConfigError naming the field.
RunConfig config_from_json(const nlohmann::json& j);
RunConfig load_config(const std::filesystem::path& path);

/// Hex FNV-1a of the compact JSON dump.
std::string json_hash(const nlohmann::json& j);

}  // namespace memaudit::cli
