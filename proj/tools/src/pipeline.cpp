// Copyright 2026 The memaudit Authors
// SPDX-License-Identifier: Apache-2.0

#include "memaudit/cli/pipeline.hpp"

#include <cstdio>

#include "memaudit/autoencoder/autoencoder.hpp"
#include "memaudit/contrastive/embedder.hpp"
#include "memaudit/diffusion/diffusion.hpp"
#include "memaudit/errors.hpp"
#include "memaudit/io.hpp"
#include "memaudit/numerics/checkpoint.hpp"
#include "memaudit/numerics/training.hpp"
#include "memaudit/rng.hpp"
#include "memaudit/volumes/manifest.hpp"
#include "memaudit/volumes/phantom.hpp"

namespace memaudit::cli {

namespace fs = std::filesystem;
namespace nm = numerics;
using nlohmann::json;
using volumes::Split;
using volumes::Volume;

namespace {

// Phantom streams derived from the master seed.
constexpr std::uint64_t kTrainStream = 1;
constexpr std::uint64_t kValStream = 2;
constexpr std::uint64_t kFreshStream = 3;
constexpr std::uint64_t kPlantStream = 4;

std::string numbered(const std::string& prefix, std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04zu", i);
  return prefix + buf;
}

std::string file_hash(const fs::path& p) { return to_hex(fnv1a64(read_bytes(p))); }

std::vector<Volume> load_corpus_split(const fs::path& manifest_path, Split split) {
  const auto m = volumes::load_manifest(manifest_path);
  return volumes::load_split(m, manifest_path, split);
}

void write_pool(const std::vector<Volume>& pool, const fs::path& dir, std::uint64_t seed,
                const std::string& notes) {
  volumes::DatasetManifest m;
  m.seed = seed;
  m.notes = notes;
  m.entries = volumes::write_volumes(pool, dir, "synth", Split::kSynth);
  volumes::save_manifest(m, dir / "manifest.json");
}

// Saves the last good parameters next to the intended checkpoint, then rethrows.
template <typename F>
void guard_divergence(const fs::path& ckpt_path, F&& body) {
  try {
    body();
  } catch (const nm::TrainingDiverged& e) {
    fs::path saved = ckpt_path;
    saved += ".diverged";
    nm::save_checkpoint(e.last_good(), saved);
    throw nm::TrainingDiverged(std::string(e.what()) + " (last good parameters saved to " +
                                   saved.string() + ")",
                               e.last_good());
  }
}

json orientation_json(const volumes::Orientation& o) {
  return {{"perm", o.perm}, {"flip", o.flip}, {"label", o.label()}};
}

}  // namespace

// ---------------------------------------------------------------------------
// RunManifest

json to_json(const RunManifest& m) {
  json stages = json::object();
  for (const auto& [name, r] : m.stages) {
    stages[name] = {{"config_hash", r.config_hash},
                    {"outputs", r.outputs},
                    {"seconds", r.seconds},
                    {"complete", r.complete}};
  }
  return {{"config", m.config}, {"tool_version", m.tool_version}, {"stages", stages}};
}

RunManifest RunManifest::load_or_new(const fs::path& path) {
  RunManifest m;
  if (!fs::exists(path)) return m;
  try {
    const json j = read_json(path);
    m.config = j.at("config");
    m.tool_version = j.at("tool_version").get<std::string>();
    for (const auto& [name, r] : j.at("stages").items()) {
      m.stages[name] = {r.at("config_hash").get<std::string>(),
                        r.at("outputs").get<std::map<std::string, std::string>>(),
                        r.at("seconds").get<double>(), r.at("complete").get<bool>()};
    }
  } catch (const json::exception& e) {
    throw FormatError(FormatError::Kind::kMalformed,
                      "run manifest " + path.string() + ": " + e.what());
  }
  return m;
}

void RunManifest::save(const fs::path& path) const {
  fs::create_directories(path.parent_path());
  write_text_atomic(path, to_json(*this).dump(2) + "\n");
}

std::string Arm::name() const {
  return std::string(augment ? "aug" : "noaug") + "-run" + std::to_string(run);
}

// ---------------------------------------------------------------------------
// Pipeline plumbing

Pipeline::Pipeline(RunConfig config, bool force, std::ostream* log)
    : config_(std::move(config)), force_(force), log_(log) {
  config_.validate();
  for (const auto& dir : {config_.paths.data, config_.paths.checkpoints, config_.paths.reports}) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw ConfigError("cannot create directory " + dir.string() + ": " + ec.message());
  }
  manifest_ = RunManifest::load_or_new(run_manifest_path());
  manifest_.config = to_json(config_);
  manifest_.tool_version = kToolVersion;
}

fs::path Pipeline::corpus_manifest() const {
  return config_.paths.data / "corpus" / "manifest.json";
}

fs::path Pipeline::pool_manifest(const std::string& pool) const {
  if (pool == "planted") return config_.paths.data / "planted" / "manifest.json";
  return config_.paths.data / "generated" / pool / "manifest.json";
}

fs::path Pipeline::autoencoder_checkpoint(bool augment) const {
  return config_.paths.checkpoints / (std::string("autoencoder-") + (augment ? "aug" : "noaug") +
                                      ".ckpt");
}

fs::path Pipeline::denoiser_checkpoint(const Arm& arm) const {
  return config_.paths.checkpoints / ("denoiser-" + arm.name() + ".ckpt");
}

fs::path Pipeline::embedder_checkpoint() const {
  return config_.paths.checkpoints / "embedder.ckpt";
}

fs::path Pipeline::report_dir(const std::string& pool) const {
  return config_.paths.reports / pool;
}

fs::path Pipeline::run_manifest_path() const {
  return config_.paths.data / "run_manifest.json";
}

void Pipeline::log(const std::string& line) const {
  if (log_ != nullptr) *log_ << line << std::endl;
}

void Pipeline::require(const fs::path& artifact, const std::string& producer) const {
  if (!fs::exists(artifact)) {
    throw MissingDependencyError("missing " + artifact.string() + "; run `memaudit " +
                                 producer + "` first");
  }
}

std::string Pipeline::stage_hash(const std::string& name) const {
  const auto it = manifest_.stages.find(name);
  if (it == manifest_.stages.end() || !it->second.complete) {
    throw MissingDependencyError("stage " + name + " has not completed for this run");
  }
  return it->second.config_hash;
}

bool Pipeline::run_stage(const std::string& name, const json& key,
                         const std::vector<fs::path>& outputs,
                         const std::function<void()>& body) {
  const std::string hash = json_hash(key);
  const auto it = manifest_.stages.find(name);
  if (!force_ && it != manifest_.stages.end() && it->second.complete &&
      it->second.config_hash == hash) {
    bool current = it->second.outputs.size() == outputs.size();
    for (const auto& p : outputs) {
      const auto o = it->second.outputs.find(p.generic_string());
      current = current && o != it->second.outputs.end() && fs::exists(p) &&
                file_hash(p) == o->second;
    }
    if (current) {
      log("[" + name + "] up to date (" + hash + ")");
      return false;
    }
  }
  log("[" + name + "] running");
  manifest_.stages[name] = {hash, {}, 0.0, false};
  manifest_.save(run_manifest_path());
  const auto start = std::chrono::steady_clock::now();
  body();
  StageRecord& rec = manifest_.stages[name];
  rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  for (const auto& p : outputs) rec.outputs[p.generic_string()] = file_hash(p);
  rec.complete = true;
  manifest_.save(run_manifest_path());
  log("[" + name + "] done in " + std::to_string(rec.seconds) + " s");
  return true;
}

// ---------------------------------------------------------------------------
// Stages

json Pipeline::corpus_key() const {
  return {{"stage", "phantom"},
          {"seed", config_.seed},
          {"dims", config_.dims.as_array()},
          {"train_count", config_.train_count},
          {"val_count", config_.val_count}};
}

std::string Pipeline::corpus_hash() const {
  require(corpus_manifest(), "phantom");
  const std::string recorded = stage_hash("phantom");
  if (recorded != json_hash(corpus_key())) {
    throw ConfigError("the corpus in " + corpus_manifest().parent_path().string() +
                      " was generated with different seed, dims or counts; pass the same "
                      "config or rerun `memaudit phantom`");
  }
  return recorded;
}

void Pipeline::phantom() {
  const auto& c = config_;
  run_stage("phantom", corpus_key(), {corpus_manifest()}, [&] {
    const fs::path dir = corpus_manifest().parent_path();
    volumes::PhantomConfig train_cfg, val_cfg;
    train_cfg.id_prefix = "train_";
    val_cfg.id_prefix = "val_";
    const auto train =
        volumes::generate_phantoms(derive_seed(c.seed, kTrainStream), c.train_count, c.dims,
                                   train_cfg);
    const auto val =
        volumes::generate_phantoms(derive_seed(c.seed, kValStream), c.val_count, c.dims, val_cfg);
    volumes::DatasetManifest m;
    m.seed = c.seed;
    m.notes = "synthetic phantoms; train and val use independent streams";
    m.entries = volumes::write_volumes(train, dir, "train", Split::kTrain);
    auto val_entries = volumes::write_volumes(val, dir, "val", Split::kVal);
    m.entries.insert(m.entries.end(), val_entries.begin(), val_entries.end());
    volumes::save_manifest(m, corpus_manifest());
  });
}

std::vector<PlantedCopy> Pipeline::plant() {
  const auto& c = config_;
  const std::string corpus = corpus_hash();
  const fs::path dir = pool_manifest("planted").parent_path();
  const json key = {{"stage", "plant"},
                    {"corpus", corpus},
                    {"synth_count", c.synth_count()},
                    {"exact", c.plant.exact},
                    {"flipped", c.plant.flipped},
                    {"rotated", c.plant.rotated}};
  run_stage("plant", key, {pool_manifest("planted"), dir / "truth.json"}, [&] {
    const auto train = load_corpus_split(corpus_manifest(), Split::kTrain);
    Rng rng(derive_seed(c.seed, kPlantStream));

    std::vector<volumes::Orientation> flips, rotations;
    for (const auto& o : volumes::enumerate_orientations(c.dims)) {
      if (o.is_identity()) continue;
      if (o.perm == std::array<int, 3>{0, 1, 2}) {
        flips.push_back(o);
      } else if (o.determinant() > 0) {
        rotations.push_back(o);
      }
    }

    const auto sources = nm::shuffled_indices(train.size(), rng);
    std::vector<Volume> pool;
    std::vector<PlantedCopy> copies;
    std::size_t next = 0;
    const auto add = [&](std::size_t count, const std::string& kind,
                         const std::vector<volumes::Orientation>& choices) {
      for (std::size_t i = 0; i < count; ++i) {
        const Volume& src = train[sources[next++]];
        const auto o = choices.empty() ? volumes::Orientation::identity()
                                       : choices[rng.index(choices.size())];
        pool.push_back(volumes::apply_orientation(src, o));
        copies.push_back({"", src.id, kind, o});
      }
    };
    add(c.plant.exact, "exact", {});
    add(c.plant.flipped, "flipped", flips);
    add(c.plant.rotated, "rotated", rotations);

    volumes::PhantomConfig fresh_cfg;
    fresh_cfg.id_prefix = "fresh_";
    const auto fresh = volumes::generate_phantoms(derive_seed(c.seed, kFreshStream),
                                                  c.synth_count() - copies.size(), c.dims,
                                                  fresh_cfg);
    pool.insert(pool.end(), fresh.begin(), fresh.end());

    // Shuffle so ids carry no hint of which entries are copies.
    const auto order = nm::shuffled_indices(pool.size(), rng);
    std::vector<Volume> shuffled(pool.size());
    for (std::size_t slot = 0; slot < order.size(); ++slot) {
      shuffled[slot] = pool[order[slot]];
      shuffled[slot].id = numbered("synth_", slot);
      if (order[slot] < copies.size()) copies[order[slot]].synth_id = shuffled[slot].id;
    }
    write_pool(shuffled, dir, c.seed, "planted-copy pool");

    json truth = json::array();
    for (const auto& p : copies) {
      truth.push_back({{"synth_id", p.synth_id},
                       {"source_id", p.source_id},
                       {"kind", p.kind},
                       {"orientation", orientation_json(p.orientation)}});
    }
    write_text_atomic(dir / "truth.json", truth.dump(2) + "\n");
  });
  return load_truth(dir / "truth.json");
}

void Pipeline::train_autoencoder(bool augment) {
  const auto cfg = config_.autoencoder_config(augment);
  const std::string name = std::string("train-ae/") + (augment ? "aug" : "noaug");
  const json key = {{"stage", "train-ae"}, {"corpus", corpus_hash()}, {"config", cfg}};
  const fs::path out = autoencoder_checkpoint(augment);
  run_stage(name, key, {out}, [&] {
    const auto train = load_corpus_split(corpus_manifest(), Split::kTrain);
    guard_divergence(out, [&] {
      const auto r = autoencoder::train(cfg, train);
      log("  final reconstruction loss " + std::to_string(r.loss_curve.back()));
      nm::save_checkpoint(autoencoder::to_checkpoint(cfg, r), out);
    });
  });
}

void Pipeline::train_denoiser(const Arm& arm) {
  const fs::path ae_path = autoencoder_checkpoint(arm.augment);
  require(ae_path, std::string("train-ae") + (arm.augment ? " --augment" : ""));
  const auto cfg = config_.denoiser_config(arm.run);
  const std::string ae_stage = std::string("train-ae/") + (arm.augment ? "aug" : "noaug");
  const json key = {{"stage", "train-diff"},
                    {"autoencoder", stage_hash(ae_stage)},
                    {"augment", arm.augment},
                    {"config", cfg}};
  const fs::path out = denoiser_checkpoint(arm);
  run_stage("train-diff/" + arm.name(), key, {out}, [&] {
    const auto [ae_cfg, ae_params] =
        autoencoder::from_checkpoint(nm::load_checkpoint(ae_path, autoencoder::kCheckpointKind));
    const auto train = load_corpus_split(corpus_manifest(), Split::kTrain);
    std::vector<std::vector<nm::Tensor>> variants;
    std::vector<nm::Tensor> all;
    for (const auto& v : train) {
      std::vector<Volume> views{v};
      if (arm.augment) {
        views.clear();
        for (const auto& o : volumes::enumerate_orientations(v.dims)) {
          views.push_back(volumes::apply_orientation(v, o));
        }
      }
      variants.push_back(autoencoder::encode_all(ae_params, ae_cfg, views));
      all.insert(all.end(), variants.back().begin(), variants.back().end());
    }
    const auto stats = diffusion::LatentStats::compute(all);
    for (auto& vs : variants) {
      for (auto& z : vs) z = stats.standardize(z);
    }
    guard_divergence(out, [&] {
      const auto r = diffusion::train(cfg, variants);
      log("  final denoising loss " + std::to_string(r.loss_curve.back()));
      nm::save_checkpoint(diffusion::to_checkpoint(cfg, stats, r), out);
    });
  });
}

void Pipeline::generate(const Arm& arm) {
  const fs::path ae_path = autoencoder_checkpoint(arm.augment);
  const fs::path dn_path = denoiser_checkpoint(arm);
  require(ae_path, std::string("train-ae") + (arm.augment ? " --augment" : ""));
  require(dn_path, std::string("train-diff") + (arm.augment ? " --augment" : "") + " --run " +
                       std::to_string(arm.run));
  const json key = {{"stage", "generate"},
                    {"autoencoder", stage_hash(std::string("train-ae/") +
                                               (arm.augment ? "aug" : "noaug"))},
                    {"denoiser", stage_hash("train-diff/" + arm.name())},
                    {"count", config_.synth_count()},
                    {"seed", config_.generation_seed(arm.run)}};
  const fs::path manifest = pool_manifest(arm.name());
  run_stage("generate/" + arm.name(), key, {manifest}, [&] {
    const auto [ae_cfg, ae_params] =
        autoencoder::from_checkpoint(nm::load_checkpoint(ae_path, autoencoder::kCheckpointKind));
    const auto dn = diffusion::from_checkpoint(nm::load_checkpoint(dn_path, diffusion::kCheckpointKind));
    const auto latents = diffusion::generate(dn.params, dn.config, dn.stats, config_.synth_count(),
                                             config_.generation_seed(arm.run));
    std::vector<Volume> pool;
    pool.reserve(latents.size());
    for (std::size_t i = 0; i < latents.size(); ++i) {
      pool.push_back(autoencoder::decode(ae_params, ae_cfg, latents[i], numbered("gen_", i)));
    }
    write_pool(pool, manifest.parent_path(), config_.generation_seed(arm.run),
               "generated by " + arm.name());
  });
}

void Pipeline::train_embedder() {
  const auto cfg = config_.embedder_config();
  const json key = {{"stage", "train-con"},
                    {"corpus", corpus_hash()},
                    {"val_count", std::min(config_.val_count, config_.embedder_val_count)},
                    {"config", cfg}};
  const fs::path out = embedder_checkpoint();
  run_stage("train-con", key, {out}, [&] {
    const auto train = load_corpus_split(corpus_manifest(), Split::kTrain);
    auto val = load_corpus_split(corpus_manifest(), Split::kVal);
    val.resize(std::min(val.size(), config_.embedder_val_count));
    guard_divergence(out, [&] {
      const auto r = contrastive::train(cfg, train, val);
      const std::size_t e = r.best_epoch;
      log("  best epoch " + std::to_string(e) + ", val triplet accuracy " +
          std::to_string(e > 0 ? r.val_accuracy[e - 1] : 0.0));
      nm::save_checkpoint(contrastive::to_checkpoint(cfg, r), out);
    });
  });
}

audit::AuditReport Pipeline::audit(const std::string& pool) {
  const std::string producer = pool == "planted" ? "plant" : "generate/" + pool;
  const std::string corpus = corpus_hash();
  require(pool_manifest(pool), pool == "planted" ? "plant" : "generate");
  require(embedder_checkpoint(), "train-con");
  const fs::path dir = report_dir(pool);
  const fs::path report_json = dir / "audit.json";
  const json key = {{"stage", "audit"},
                    {"corpus", corpus},
                    {"pool", stage_hash(producer)},
                    {"embedder", stage_hash("train-con")},
                    {"quantile", config_.quantile},
                    {"bins", config_.bins}};
  run_stage("audit/" + pool, key,
            {report_json, dir / "audit.csv", dir / "train.emb", dir / "val.emb", dir / "synth.emb"},
            [&] {
              const auto bytes = read_bytes(embedder_checkpoint());
              const auto ckpt = nm::decode_checkpoint(bytes);
              const auto [cfg, params] = contrastive::from_checkpoint(ckpt);
              const std::string id = nm::checkpoint_id(bytes);
              const auto train = load_corpus_split(corpus_manifest(), Split::kTrain);
              const auto val = load_corpus_split(corpus_manifest(), Split::kVal);
              const auto synth = load_corpus_split(pool_manifest(pool), Split::kSynth);
              const auto train_t = contrastive::make_table(params, cfg, train, id);
              const auto val_t = contrastive::make_table(params, cfg, val, id);
              const auto synth_t = contrastive::make_table(params, cfg, synth, id);
              fs::create_directories(dir);
              contrastive::save_table(train_t, dir / "train.emb");
              contrastive::save_table(val_t, dir / "val.emb");
              contrastive::save_table(synth_t, dir / "synth.emb");

              const auto candidates = audit::copy_candidates(train_t, synth_t);
              const auto baseline = audit::validation_baseline(train_t, val_t);
              std::vector<double> base_msd;
              for (const auto& b : baseline) base_msd.push_back(b.msd);
              const double tau = audit::calibrate_threshold(base_msd, config_.quantile);

              std::map<std::string, bool> truth;
              const fs::path truth_path = pool_manifest(pool).parent_path() / "truth.json";
              if (fs::exists(truth_path)) {
                for (const auto& v : train) truth[v.id] = false;
                for (const auto& p : load_truth(truth_path)) truth[p.source_id] = true;
              }
              auto report =
                  audit::build_report(candidates, baseline, tau, config_.quantile, config_.bins, truth);
              report.config = settings_json(config_);
              report.seeds = {{"master", config_.seed},
                              {"embedder", cfg.seed},
                              {"pool", pool},
                              {"embedder_checkpoint", id}};
              write_text_atomic(report_json, audit::report_to_json_text(report));
              write_text_atomic(dir / "audit.csv", audit::report_to_csv(report));
              log("  tau " + std::to_string(tau) + ", copy rate " +
                  std::to_string(report.copy_rate));
            });
  return audit::report_from_json(read_json(report_json));
}

NccResult Pipeline::ncc_baseline(const std::string& pool) {
  corpus_hash();
  require(pool_manifest(pool), pool == "planted" ? "plant" : "generate");
  const auto train = load_corpus_split(corpus_manifest(), Split::kTrain);
  const auto synth = load_corpus_split(pool_manifest(pool), Split::kSynth);
  NccResult r{config_.ncc_threshold, audit::ncc_matches(train, synth)};
  json matches = json::array();
  for (const auto& m : r.matches) {
    matches.push_back({{"train_id", m.train_id},
                       {"synth_id", m.synth_id},
                       {"ncc", m.ncc},
                       {"is_copy", m.ncc >= r.threshold}});
  }
  const fs::path dir = report_dir(pool);
  fs::create_directories(dir);
  write_text_atomic(dir / "ncc.json",
                    json{{"threshold", r.threshold}, {"matches", matches}}.dump(2) + "\n");
  return r;
}

ExperimentResult Pipeline::experiment() {
  phantom();
  train_embedder();
  ExperimentResult result;
  json per_seed = json::array();
  for (std::size_t run = 0; run < config_.experiment_seeds; ++run) {
    ExperimentRow row{run, 0.0, 0.0};
    for (bool augment : {false, true}) {
      const Arm arm{augment, run};
      train_autoencoder(augment);
      train_denoiser(arm);
      generate(arm);
      const double rate = audit(arm.name()).copy_rate;
      (augment ? row.copy_rate_aug : row.copy_rate_noaug) = rate;
    }
    result.rows.push_back(row);
    result.copy_rate_noaug += row.copy_rate_noaug / static_cast<double>(config_.experiment_seeds);
    result.copy_rate_aug += row.copy_rate_aug / static_cast<double>(config_.experiment_seeds);
    per_seed.push_back({{"run", run},
                        {"denoiser_seed", config_.denoiser_config(run).seed},
                        {"generation_seed", config_.generation_seed(run)},
                        {"copy_rate_noaug", row.copy_rate_noaug},
                        {"copy_rate_aug", row.copy_rate_aug}});
  }
  const json out = {{"config", settings_json(config_)},
                    {"copy_rate_noaug", result.copy_rate_noaug},
                    {"copy_rate_aug", result.copy_rate_aug},
                    {"per_seed", per_seed},
                    {"shared", {{"corpus", stage_hash("phantom")},
                                {"detector", stage_hash("train-con")}}}};
  write_text_atomic(config_.paths.reports / "experiment.json", out.dump(2) + "\n");
  return result;
}

std::vector<PlantedCopy> load_truth(const fs::path& path) {
  std::vector<PlantedCopy> out;
  try {
    for (const auto& t : read_json(path)) {
      PlantedCopy p;
      p.synth_id = t.at("synth_id").get<std::string>();
      p.source_id = t.at("source_id").get<std::string>();
      p.kind = t.at("kind").get<std::string>();
      p.orientation.perm = t.at("orientation").at("perm").get<std::array<int, 3>>();
      p.orientation.flip = t.at("orientation").at("flip").get<std::array<bool, 3>>();
      out.push_back(std::move(p));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(FormatError::Kind::kMalformed, "truth file " + path.string() + ": " + e.what());
  }
  return out;
}

}  // namespace memaudit::cli
