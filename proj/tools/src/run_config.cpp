// Copyright 2026 The memaudit Authors
// SPDX-License-Identifier: Apache-2.0

#include "memaudit/cli/run_config.hpp"

#include <cstdlib>
#include <set>

#include "memaudit/errors.hpp"
#include "memaudit/io.hpp"
#include "memaudit/rng.hpp"

namespace memaudit::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Seed streams derived from the master seed.
constexpr std::uint64_t kAutoencoderStream = 10;
constexpr std::uint64_t kEmbedderStream = 20;
constexpr std::uint64_t kDenoiserStream = 100;
constexpr std::uint64_t kGenerationStream = 200;

// Keys set at the top level and filled into module configs.
const std::set<std::string> kDerivedKeys = {"dims", "seed", "augment", "latent_shape"};

void check_keys(const json& j, const json& defaults, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    if (!defaults.contains(key)) throw ConfigError(where + "." + key + ": unknown field");
    if (where != "config" && kDerivedKeys.count(key) > 0) {
      throw ConfigError(where + "." + key + ": set at the top level of the run config");
    }
  }
}

template <typename T>
T section(const json& j, const char* name, const T& fallback) {
  if (!j.contains(name)) return fallback;
  const json& s = j.at(name);
  check_keys(s, json(fallback), std::string("config.") + name);
  try {
    json merged = fallback;
    merged.update(s);
    return merged.get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config.") + name + ": " + e.what());
  }
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where = "config") {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + ": wrong type (" + j.at(key).dump() + ")");
  }
}

}  // namespace

fs::path default_root() {
  if (const char* env = std::getenv(kRootEnv); env != nullptr && *env != '\0') return env;
  return "memaudit_run";
}

Paths Paths::under(const fs::path& root) {
  return {root / "data", root / "checkpoints", root / "reports"};
}

void RunConfig::validate() const {
  if (paths.data.empty() || paths.checkpoints.empty() || paths.reports.empty()) {
    throw ConfigError("config.paths: data, checkpoints and reports must be set");
  }
  if (train_count < 2) throw ConfigError("config.train_count: need at least 2 training volumes");
  if (val_count < 5) throw ConfigError("config.val_count: need at least 5 validation volumes");
  if (synth_multiplier < 1) throw ConfigError("config.synth_multiplier: must be >= 1");
  if (!(quantile > 0.0 && quantile < 1.0)) throw ConfigError("config.quantile: must lie in (0, 1)");
  if (bins < 2) throw ConfigError("config.bins: need at least 2 bins");
  if (!(ncc_threshold >= -1.0 && ncc_threshold <= 1.0)) {
    throw ConfigError("config.ncc_threshold: must lie in [-1, 1]");
  }
  if (embedder_val_count < 2) throw ConfigError("config.embedder_val_count: must be >= 2");
  if (experiment_seeds < 1) throw ConfigError("config.experiment_seeds: must be >= 1");
  if (plant.total() > train_count) {
    throw ConfigError("config.plant: more planted copies than training volumes");
  }
  if (plant.total() > synth_count()) {
    throw ConfigError("config.plant: more planted copies than the synthetic pool holds");
  }
  if (plant.rotated > 0 && dims.d != dims.h && dims.h != dims.w && dims.d != dims.w) {
    throw ConfigError("config.plant.rotated: dims " + dims.to_string() +
                      " admit no axis permutation");
  }
  try {
    autoencoder_config(augment).validate();
    denoiser_config(0).validate();
    embedder_config().validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

diffusion::DenoiserConfig run_denoiser_defaults() {
  diffusion::DenoiserConfig c;
  c.steps = 100;
  c.beta_1 = 1e-3;
  c.beta_T = 0.2;
  return c;
}

contrastive::EmbedderConfig run_embedder_defaults() {
  contrastive::EmbedderConfig c;
  c.widths = {8};
  c.trunk_channels = 32;
  c.global_pool = true;
  c.hidden = 64;
  c.bounded = true;
  c.margin = 0.5;
  c.negatives = contrastive::Negatives::kBatch;
  c.augment_anchor = true;
  c.cosine_decay = true;
  c.batch_size = 32;
  c.epochs = 2000;
  return c;
}

autoencoder::AutoencoderConfig RunConfig::autoencoder_config(bool aug) const {
  auto c = autoencoder;
  c.dims = dims;
  c.seed = derive_seed(seed, kAutoencoderStream);
  c.augment = aug;
  return c;
}

diffusion::DenoiserConfig RunConfig::denoiser_config(std::size_t run) const {
  auto c = diffusion;
  c.latent_shape = autoencoder_config(false).latent_shape();
  c.seed = derive_seed(seed, kDenoiserStream + run);
  return c;
}

contrastive::EmbedderConfig RunConfig::embedder_config() const {
  auto c = embedder;
  c.dims = dims;
  c.seed = derive_seed(seed, kEmbedderStream);
  return c;
}

std::uint64_t RunConfig::generation_seed(std::size_t run) const {
  return derive_seed(seed, kGenerationStream + run);
}

json settings_json(const RunConfig& c) {
  json ae = c.autoencoder, dn = c.diffusion, em = c.embedder;
  for (json* s : {&ae, &dn, &em}) {
    for (const auto& k : kDerivedKeys) s->erase(k);
  }
  return {{"seed", c.seed},
          {"dims", c.dims.as_array()},
          {"train_count", c.train_count},
          {"val_count", c.val_count},
          {"synth_multiplier", c.synth_multiplier},
          {"augment", c.augment},
          {"quantile", c.quantile},
          {"bins", c.bins},
          {"ncc_threshold", c.ncc_threshold},
          {"embedder_val_count", c.embedder_val_count},
          {"experiment_seeds", c.experiment_seeds},
          {"plant", {{"exact", c.plant.exact}, {"flipped", c.plant.flipped},
                     {"rotated", c.plant.rotated}}},
          {"autoencoder", ae},
          {"diffusion", dn},
          {"embedder", em}};
}

json to_json(const RunConfig& c) {
  json j = settings_json(c);
  j["paths"] = {{"data", c.paths.data.string()},
                {"checkpoints", c.paths.checkpoints.string()},
                {"reports", c.paths.reports.string()}};
  return j;
}

RunConfig config_from_json(const json& j) {
  RunConfig c;
  const json defaults = to_json(c);
  check_keys(j, defaults, "config");
  if (j.contains("paths")) {
    const json& p = j.at("paths");
    json allowed = defaults.at("paths");
    allowed["root"] = "";
    check_keys(p, allowed, "config.paths");
    std::string root, data, checkpoints, reports;
    read(p, "root", root, "config.paths");
    read(p, "data", data, "config.paths");
    read(p, "checkpoints", checkpoints, "config.paths");
    read(p, "reports", reports, "config.paths");
    if (!root.empty()) c.paths = Paths::under(root);
    if (!data.empty()) c.paths.data = data;
    if (!checkpoints.empty()) c.paths.checkpoints = checkpoints;
    if (!reports.empty()) c.paths.reports = reports;
  }
  read(j, "seed", c.seed);
  if (j.contains("dims")) {
    std::array<std::size_t, 3> d{};
    read(j, "dims", d);
    c.dims = {d[0], d[1], d[2]};
  }
  read(j, "train_count", c.train_count);
  read(j, "val_count", c.val_count);
  read(j, "synth_multiplier", c.synth_multiplier);
  read(j, "augment", c.augment);
  read(j, "quantile", c.quantile);
  read(j, "bins", c.bins);
  read(j, "ncc_threshold", c.ncc_threshold);
  read(j, "embedder_val_count", c.embedder_val_count);
  read(j, "experiment_seeds", c.experiment_seeds);
  if (j.contains("plant")) {
    const json& p = j.at("plant");
    check_keys(p, defaults.at("plant"), "config.plant");
    read(p, "exact", c.plant.exact, "config.plant");
    read(p, "flipped", c.plant.flipped, "config.plant");
    read(p, "rotated", c.plant.rotated, "config.plant");
  }
  c.autoencoder = section(j, "autoencoder", c.autoencoder);
  c.diffusion = section(j, "diffusion", c.diffusion);
  c.embedder = section(j, "embedder", c.embedder);
  c.validate();
  return c;
}

RunConfig load_config(const fs::path& path) {
  if (!fs::exists(path)) throw MissingDependencyError("config file not found: " + path.string());
  try {
    return config_from_json(read_json(path));
  } catch (const FormatError& e) {
    throw ConfigError("config file " + path.string() + ": " + e.what());
  }
}

std::string json_hash(const json& j) { return to_hex(fnv1a64(j.dump())); }

}  // namespace memaudit::cli
