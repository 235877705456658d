// Copyright 2026 The memaudit Authors
// SPDX-License-Identifier: Apache-2.0

// Stage orchestration with config-hash caching.
//
// Layout under the configured paths:
//   data/corpus/        train + val phantoms and their manifest
//   data/planted/       planted-copy synthetic pool, manifest, truth.json
//   data/generated/A/   generated pool for arm A ("noaug" or "aug", run k)
//   checkpoints/        autoencoder-A, denoiser-A-runK, embedder
//   reports/POOL/       embedding tables, audit.json, audit.csv, ncc.json
//   data/run_manifest.json

#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "memaudit/audit/audit.hpp"
#include "memaudit/cli/run_config.hpp"
#include "memaudit/volumes/orientation.hpp"

namespace memaudit::cli {

inline constexpr const char* kToolVersion = "0.1.0";

struct StageRecord {
  std::string config_hash;
  /// Output path (relative to its root directory) -> content hash.
  std::map<std::string, std::string> outputs;
  double seconds = 0.0;
  bool complete = false;
};

struct RunManifest {
  nlohmann::json config = nlohmann::json::object();
  std::string tool_version = kToolVersion;
  std::map<std::string, StageRecord> stages;

  static RunManifest load_or_new(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
};

nlohmann::json to_json(const RunManifest& m);

/// A planted copy: the synthetic id that holds an oriented copy of a source.
struct PlantedCopy {
  std::string synth_id;
  std::string source_id;
  std::string kind;  // "exact", "flipped" or "rotated"
  volumes::Orientation orientation;
};

/// Training arm of the latent diffusion pipeline.
struct Arm {
  bool augment = false;
  std::size_t run = 0;

  std::string name() const;  // e.g. "aug-run1"
};

struct NccResult {
  double threshold = 0.0;
  std::vector<audit::NccMatch> matches;
};

struct ExperimentRow {
  std::size_t run = 0;
  double copy_rate_noaug = 0.0;
  double copy_rate_aug = 0.0;
};

struct ExperimentResult {
  std::vector<ExperimentRow> rows;
  double copy_rate_noaug = 0.0;
  double copy_rate_aug = 0.0;
};

class Pipeline {
 public:
  /// `force` reruns stages even when their cache entry matches.
  Pipeline(RunConfig config, bool force = false, std::ostream* log = nullptr);

  const RunConfig& config() const { return config_; }

  // Stages. Each returns immediately when its cached outputs are current.
  void phantom();
  std::vector<PlantedCopy> plant();
  void train_autoencoder(bool augment);
  void train_denoiser(const Arm& arm);
  void train_embedder();
  void generate(const Arm& arm);
  /// Audits a synthetic pool: "planted" or an arm name under data/generated.
  audit::AuditReport audit(const std::string& pool);
  NccResult ncc_baseline(const std::string& pool);
  ExperimentResult experiment();

  // Artifact locations.
  std::filesystem::path corpus_manifest() const;
  std::filesystem::path pool_manifest(const std::string& pool) const;
  std::filesystem::path autoencoder_checkpoint(bool augment) const;
  std::filesystem::path denoiser_checkpoint(const Arm& arm) const;
  std::filesystem::path embedder_checkpoint() const;
  std::filesystem::path report_dir(const std::string& pool) const;
  std::filesystem::path run_manifest_path() const;

  const RunManifest& manifest() const { return manifest_; }

 private:
  /// Runs `body` unless the stage is cached under `key`. `outputs` are the
  /// files the stage writes; they are hashed into the manifest.
  bool run_stage(const std::string& name, const nlohmann::json& key,
                 const std::vector<std::filesystem::path>& outputs,
                 const std::function<void()>& body);
  std::string stage_hash(const std::string& name) const;
  nlohmann::json corpus_key() const;
  /// Hash of the recorded corpus; throws unless it matches the config.
  std::string corpus_hash() const;
  void require(const std::filesystem::path& artifact, const std::string& producer) const;
  void log(const std::string& line) const;

  RunConfig config_;
  bool force_;
  std::ostream* log_;
  RunManifest manifest_;
};

/// Reads planted-copy ground truth written by Pipeline::plant.
std::vector<PlantedCopy> load_truth(const std::filesystem::path& path);

}  // namespace memaudit::cli
