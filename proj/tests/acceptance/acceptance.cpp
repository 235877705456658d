// Copyright 2026 The memaudit Authors
// SPDX-License-Identifier: Apache-2.0

// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits non-zero if any criterion fails.
//
//   memaudit_acceptance <workspace> [--only N]
//
// The workspace is wiped first so every stage runs (and is timed) from
// scratch. With --only, a single criterion runs and cached stages in the
// workspace are reused.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "memaudit/audit/audit.hpp"
#include "memaudit/autoencoder/autoencoder.hpp"
#include "memaudit/cli/pipeline.hpp"
#include "memaudit/contrastive/embedder.hpp"
#include "memaudit/diffusion/diffusion.hpp"
#include "memaudit/io.hpp"
#include "memaudit/numerics/autodiff.hpp"
#include "memaudit/numerics/checkpoint.hpp"
#include "memaudit/numerics/grad_check.hpp"
#include "memaudit/rng.hpp"
#include "memaudit/volumes/manifest.hpp"
#include "memaudit/volumes/orientation.hpp"
#include "memaudit/volumes/phantom.hpp"

namespace {

using namespace memaudit;
namespace fs = std::filesystem;
namespace nm = numerics;
using nm::Tensor;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  // Records a check; failing checks are prefixed with "FAILED".
  void check(bool ok, const std::string& what) {
    if (detail.tellp() > 0) detail << "; ";
    if (!ok) detail << "FAILED ";
    detail << what;
    pass = pass && ok;
  }
};

std::string fmt(double x, int precision = 4) {
  std::ostringstream s;
  s.precision(precision);
  s << x;
  return s.str();
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

Tensor random_tensor(const nm::Shape& shape, Rng& rng, double scale = 1.0) {
  Tensor t(shape, 0.0);
  for (double& x : t.data()) x = scale * rng.normal();
  return t;
}

// ---------------------------------------------------------------------------
// 1. Gradient fidelity

void criterion_gradients(Outcome& out) {
  const auto t0 = Clock::now();
  Rng rng(101);
  double worst = 0.0;
  std::string worst_name;
  std::size_t checks = 0;
  const auto run = [&](const std::string& name, const nm::ParamSet& p, const nm::LossFn& fn) {
    const auto r = nm::grad_check(fn, p);
    ++checks;
    if (!(r.max_rel_error <= worst)) {
      worst = r.max_rel_error;
      worst_name = name + ":" + r.worst_param;
    }
  };

  for (const nm::ConvGeometry g : {nm::ConvGeometry{1, 1}, nm::ConvGeometry{2, 1}}) {
    nm::ParamSet p;
    p.add("x", random_tensor({2, 2, 5, 5, 5}, rng));
    p.add("k", random_tensor({3, 2, 3, 3, 3}, rng, 0.5));
    const Tensor target = random_tensor(nm::conv3d(p["x"], p["k"], g).shape(), rng);
    run("conv3d", p, [&](nm::Tape& t, const nm::BoundParams& b) {
      return nm::mse_loss(nm::conv3d(b["x"], b["k"], g), t.constant(target));
    });
    nm::ParamSet q;
    q.add("y", random_tensor({2, 3, 3, 3, 3}, rng));
    q.add("k", random_tensor({3, 2, 4, 4, 4}, rng, 0.5));
    const Tensor target2 = random_tensor(nm::transposed_conv3d(q["y"], q["k"], g).shape(), rng);
    run("transposed_conv3d", q, [&](nm::Tape& t, const nm::BoundParams& b) {
      return nm::mse_loss(nm::transposed_conv3d(b["y"], b["k"], g), t.constant(target2));
    });
  }
  {
    nm::ParamSet p;
    p.add("x", random_tensor({2, 3, 2, 2, 2}, rng));
    p.add("b", random_tensor({3}, rng));
    p.add("bn", random_tensor({2, 3}, rng));
    p.add("w", random_tensor({4, 24}, rng, 0.3));
    p.add("wb", random_tensor({4}, rng));
    const Tensor target = random_tensor({2, 4}, rng);
    run("bias/reshape/dense/leaky_relu", p, [&](nm::Tape& t, const nm::BoundParams& b) {
      nm::Var h = nm::add_channel_bias(nm::add_channel_bias(b["x"], b["b"]), b["bn"]);
      h = nm::leaky_relu(nm::reshape(h, {2, 24}));
      return nm::mse_loss(nm::dense(h, b["w"], b["wb"]), t.constant(target));
    });
    run("tanh/spatial_mean/sum", p, [&](nm::Tape&, const nm::BoundParams& b) {
      return nm::sum(nm::tanh(nm::spatial_mean(b["x"])));
    });
    const Tensor target2 = random_tensor({2, 3, 2, 2, 2}, rng);
    run("l1_loss", p, [&](nm::Tape& t, const nm::BoundParams& b) {
      return nm::l1_loss(b["x"], t.constant(target2));
    });
  }
  {
    nm::ParamSet p;
    p.add("a", random_tensor({4, 5}, rng));
    p.add("p", random_tensor({4, 5}, rng));
    p.add("n", random_tensor({4, 5}, rng));
    run("triplet_loss", p, [](nm::Tape&, const nm::BoundParams& b) {
      return contrastive::triplet_loss(b["a"], b["p"], b["n"], 1.0);
    });
    run("batch_triplet_loss", p, [](nm::Tape&, const nm::BoundParams& b) {
      return contrastive::batch_triplet_loss(b["a"], b["p"], 1.0);
    });
  }
  {
    autoencoder::AutoencoderConfig c;
    c.dims = {8, 8, 8};
    c.downsample = 2;
    c.widths = {3};
    c.latent_channels = 2;
    c.seed = 4;
    const auto vs = volumes::generate_phantoms(5, 2, c.dims);
    const Tensor x = volumes::to_batch({&vs[0], &vs[1]});
    run("autoencoder", autoencoder::init_params(c),
        [&](nm::Tape& t, const nm::BoundParams& b) {
          return autoencoder::reconstruction_loss(t.constant(x), b, c);
        });
  }
  {
    diffusion::DenoiserConfig c;
    c.latent_shape = {2, 2, 2, 2};
    c.width = 6;
    c.time_features = 8;
    c.steps = 20;
    c.beta_1 = 1e-3;
    c.beta_T = 0.2;
    c.seed = 6;
    const auto s = c.schedule();
    const Tensor z0 = random_tensor({2, 2, 2, 2, 2}, rng);
    const Tensor eps = random_tensor({2, 2, 2, 2, 2}, rng);
    run("denoiser", diffusion::init_params(c), [&](nm::Tape& t, const nm::BoundParams& b) {
      return diffusion::denoising_loss(t, b, c, s, z0, {3, 17}, eps);
    });
  }
  for (bool pooled : {false, true}) {
    contrastive::EmbedderConfig c;
    c.dims = {8, 8, 8};
    c.widths = {3};
    c.trunk_channels = 2;
    c.hidden = 6;
    c.margin = 2.0;
    c.global_pool = pooled;
    c.bounded = pooled;
    c.seed = 7;
    const auto vs = volumes::generate_phantoms(8, 3, c.dims);
    const Tensor xa = volumes::to_batch({&vs[0]});
    const Tensor xp = volumes::to_batch({&vs[1]});
    const Tensor xn = volumes::to_batch({&vs[2]});
    run(pooled ? "embedder(pooled,bounded)" : "embedder", contrastive::init_params(c),
        [&](nm::Tape& t, const nm::BoundParams& b) {
          return contrastive::triplet_loss(contrastive::embed(t.constant(xa), b, c),
                                           contrastive::embed(t.constant(xp), b, c),
                                           contrastive::embed(t.constant(xn), b, c), c.margin);
        });
  }
  const double secs = seconds_since(t0);
  out.check(worst < 1e-4, std::to_string(checks) + " checks, max rel err " + fmt(worst) +
                              " (" + worst_name + ") < 1e-4");
  out.check(secs < 120.0, "runtime " + fmt(secs, 3) + " s < 120 s");
}

// ---------------------------------------------------------------------------
// 2. Diffusion correctness

// Stepwise forward iteration vs the closed-form marginal at step t.
bool stepwise_matches(const diffusion::VarianceSchedule& s, std::size_t t, std::uint64_t seed,
                      std::string& note) {
  const Tensor z0({3}, std::vector<double>{1.5, -0.7, 0.2});
  constexpr int kTrials = 10000;
  Rng rng(seed);
  std::vector<std::vector<double>> draws(3);
  for (int n = 0; n < kTrials; ++n) {
    Tensor z = z0;
    for (std::size_t k = 1; k <= t; ++k) {
      z = diffusion::forward_step(z, k, random_tensor({3}, rng), s);
    }
    for (std::size_t i = 0; i < 3; ++i) draws[i].push_back(z[i]);
  }
  const double ab = s.alpha_bar(t);
  double worst = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    double mean = 0.0;
    for (double x : draws[i]) mean += x;
    mean /= kTrials;
    double var = 0.0;
    for (double x : draws[i]) var += (x - mean) * (x - mean);
    var /= kTrials - 1;
    const double want_var = 1.0 - ab;
    const double se_mean = std::sqrt(want_var / kTrials);
    const double se_var = want_var * std::sqrt(2.0 / (kTrials - 1));
    worst = std::max({worst, std::abs(mean - std::sqrt(ab) * z0[i]) / se_mean,
                      std::abs(var - want_var) / se_var});
  }
  note = "t=" + std::to_string(t) + " " + fmt(worst, 3) + " SE";
  return worst <= 3.0;
}

void criterion_diffusion(const cli::RunConfig& config, Outcome& out) {
  const auto check_schedule = [&](const diffusion::VarianceSchedule& s, const std::string& name) {
    Rng rng(202);
    const Tensor z0 = random_tensor({64}, rng);
    const Tensor zero({64}, 0.0);
    bool exact = true;
    for (std::size_t t = 1; t <= s.steps(); ++t) {
      const Tensor zt = diffusion::q_sample(z0, t, zero, s);
      const double scale = std::sqrt(s.alpha_bar(t));
      for (std::size_t i = 0; i < z0.size(); ++i) exact = exact && zt[i] == scale * z0[i];
    }
    out.check(exact, name + ": q_sample(eps=0) == sqrt(abar_t) z0 exactly for every t");
    std::string notes;
    bool ok = true;
    for (std::size_t t : {std::size_t{1}, s.steps() / 2, s.steps()}) {
      std::string note;
      ok = stepwise_matches(s, t, derive_seed(303, t), note) && ok;
      notes += (notes.empty() ? "" : ", ") + note;
    }
    out.check(ok, name + ": stepwise vs closed form within 3 SE (" + notes + ")");
  };
  const auto def = diffusion::make_schedule();
  check_schedule(def, "default T=1000");
  out.check(def.alpha_bar(def.steps()) < 5e-5,
            "default abar_T = " + fmt(def.alpha_bar(def.steps())) + " < 5e-5");
  const auto run = config.denoiser_config(0).schedule();
  check_schedule(run, "run T=" + std::to_string(run.steps()));
}

// ---------------------------------------------------------------------------
// Planted scenario shared by criteria 3-6.

struct Planted {
  std::vector<volumes::Volume> train;
  std::vector<cli::PlantedCopy> copies;
  audit::AuditReport report;
  cli::NccResult ncc;
  contrastive::EmbedderConfig embedder;
  nm::ParamSet params;
  double val_accuracy = 0.0;
  double seconds = 0.0;
};

Planted run_planted(cli::Pipeline& p) {
  Planted s;
  const auto t0 = Clock::now();
  p.phantom();
  s.copies = p.plant();
  p.train_embedder();
  s.report = p.audit("planted");
  s.seconds = seconds_since(t0);
  s.ncc = p.ncc_baseline("planted");
  const auto manifest = volumes::load_manifest(p.corpus_manifest());
  s.train = volumes::load_split(manifest, p.corpus_manifest(), volumes::Split::kTrain);
  const auto ckpt = nm::load_checkpoint(p.embedder_checkpoint());
  std::tie(s.embedder, s.params) = contrastive::from_checkpoint(ckpt);
  const auto& acc = ckpt.extra.at("val_accuracy");
  s.val_accuracy = ckpt.epoch > 0 ? acc.at(ckpt.epoch - 1).get<double>() : 0.0;
  return s;
}

// 3. Embedder invariance
void criterion_invariance(const Planted& s, Outcome& out) {
  const auto base = contrastive::embed_all(s.params, s.embedder, s.train);
  contrastive::EmbeddingTable pool;
  for (std::size_t i = 0; i < base.size(); ++i) {
    pool.ids.push_back(s.train[i].id);
    pool.rows.push_back(base[i]);
  }
  const auto orientations = volumes::enumerate_orientations(s.embedder.dims);
  std::size_t hits = 0, total = 0;
  for (std::size_t i = 0; i < s.train.size(); ++i) {
    std::vector<volumes::Volume> views;
    for (const auto& o : orientations) views.push_back(volumes::apply_orientation(s.train[i], o));
    for (const auto& e : contrastive::embed_all(s.params, s.embedder, views)) {
      hits += audit::nearest(e, pool).id == s.train[i].id ? 1 : 0;
      ++total;
    }
  }
  const double rate = static_cast<double>(hits) / static_cast<double>(total);
  out.check(rate >= 0.95, "augmented copy's nearest training embedding is its source for " +
                              std::to_string(hits) + "/" + std::to_string(total) + " = " +
                              fmt(rate) + " >= 0.95 of (volume, orientation) pairs");
  out.check(s.val_accuracy >= 0.95,
            "val triplet accuracy " + fmt(s.val_accuracy) + " >= 0.95");
}

const audit::CandidateRecord* record_of(const audit::AuditReport& r, const std::string& id) {
  for (const auto& rec : r.records) {
    if (rec.train_id == id) return &rec;
  }
  return nullptr;
}

// 4. Planted-copy audit
void criterion_planted(const Planted& s, Outcome& out) {
  std::set<std::string> sources;
  std::size_t caught = 0, nearest = 0;
  for (const auto& c : s.copies) {
    sources.insert(c.source_id);
    const auto* rec = record_of(s.report, c.source_id);
    if (rec == nullptr) continue;
    nearest += rec->synth_id == c.synth_id ? 1 : 0;
    caught += rec->is_copy ? 1 : 0;
  }
  std::size_t unplanted = 0, false_copies = 0;
  for (const auto& rec : s.report.records) {
    if (sources.count(rec.train_id) > 0) continue;
    ++unplanted;
    false_copies += rec.is_copy ? 1 : 0;
  }
  const double recall = static_cast<double>(caught) / static_cast<double>(s.copies.size());
  const double false_rate = static_cast<double>(false_copies) / static_cast<double>(unplanted);
  out.check(s.copies.size() == 10 && unplanted == 54,
            std::to_string(s.copies.size()) + " planted, " + std::to_string(unplanted) +
                " unplanted");
  out.check(recall >= 0.9, "recall " + std::to_string(caught) + "/" +
                               std::to_string(s.copies.size()) + " = " + fmt(recall) +
                               " >= 0.9 (tau " + fmt(s.report.tau) + ")");
  out.check(false_rate <= 0.1, "false-copy rate " + std::to_string(false_copies) + "/" +
                                   std::to_string(unplanted) + " = " + fmt(false_rate) +
                                   " <= 0.1");
  out.check(nearest == s.copies.size(), "planted copy is its source's nearest synthetic for " +
                                            std::to_string(nearest) + "/" +
                                            std::to_string(s.copies.size()));
  out.check(s.seconds < 1800.0, "end-to-end " + fmt(s.seconds, 4) + " s < 1800 s");
}

// 5. Baseline contrast
void criterion_baseline(const Planted& s, Outcome& out) {
  std::map<std::string, const audit::NccMatch*> best;
  for (const auto& m : s.ncc.matches) best[m.train_id] = &m;
  std::size_t exact_hits = 0, exact = 0, oriented = 0, ncc_missed = 0, emb_caught = 0;
  for (const auto& c : s.copies) {
    const auto it = best.find(c.source_id);
    const bool ncc_hit = it != best.end() && it->second->synth_id == c.synth_id &&
                         it->second->ncc >= s.ncc.threshold;
    const auto* rec = record_of(s.report, c.source_id);
    const bool emb_hit = rec != nullptr && rec->synth_id == c.synth_id && rec->is_copy;
    if (c.kind == "exact") {
      ++exact;
      exact_hits += ncc_hit ? 1 : 0;
    } else {
      ++oriented;
      ncc_missed += ncc_hit ? 0 : 1;
      emb_caught += emb_hit ? 1 : 0;
    }
  }
  out.check(exact == 3 && exact_hits == 3,
            "NCC >= " + fmt(s.ncc.threshold) + " detects " + std::to_string(exact_hits) + "/" +
                std::to_string(exact) + " exact copies");
  out.check(oriented == 7 && ncc_missed >= 6, "NCC misses " + std::to_string(ncc_missed) + "/" +
                                                  std::to_string(oriented) +
                                                  " flipped/rotated copies (need >= 6)");
  out.check(emb_caught >= 6, "embedding audit catches " + std::to_string(emb_caught) + "/" +
                                 std::to_string(oriented) + " of them (need >= 6)");
}

// 6. Lowest-decile histogram mass
void criterion_histogram(const Planted& s, Outcome& out) {
  double top = 0.0;
  for (const auto& r : s.report.records) top = std::max({top, r.msd, r.val_msd});
  const double edge = top / 10.0;
  std::size_t cand = 0, base = 0;
  for (const auto& r : s.report.records) {
    cand += r.msd <= edge ? 1 : 0;
    base += r.val_msd <= edge ? 1 : 0;
  }
  out.check(cand > base, "lowest decile [0, " + fmt(edge) + "]: candidate mass " +
                             std::to_string(cand) + " > baseline mass " + std::to_string(base));
}

// ---------------------------------------------------------------------------
// 7. Augmentation experiment

void criterion_experiment(cli::Pipeline& p, Outcome& out) {
  const auto t0 = Clock::now();
  const auto r = p.experiment();
  std::size_t holds = 0;
  std::string rows;
  for (const auto& row : r.rows) {
    holds += row.copy_rate_aug <= row.copy_rate_noaug ? 1 : 0;
    rows += (rows.empty() ? "" : ", ") + std::string("run ") + std::to_string(row.run) +
            " aug " + fmt(row.copy_rate_aug, 3) + " vs noaug " + fmt(row.copy_rate_noaug, 3);
  }
  const std::size_t need = (2 * r.rows.size() + 2) / 3;
  out.check(r.rows.size() == 3 && holds >= need,
            "aug <= noaug in " + std::to_string(holds) + "/" + std::to_string(r.rows.size()) +
                " pairs (" + rows + ")");
  const auto j = read_json(p.config().paths.reports / "experiment.json");
  const auto& shared = j.at("shared");
  out.check(shared.contains("corpus") && shared.contains("detector"),
            "corpus " + shared.value("corpus", std::string("?")) + " and detector " +
                shared.value("detector", std::string("?")) + " shared by both arms");
  out.detail << " [" << fmt(seconds_since(t0), 4) << " s]";
}

// ---------------------------------------------------------------------------
// 8. Infrastructure exactness

bool same_bytes(const fs::path& a, const fs::path& b) { return read_bytes(a) == read_bytes(b); }

void criterion_infrastructure(const cli::Pipeline& main, const cli::RunConfig& small_config,
                              const fs::path& workspace, Outcome& out) {
  // VOL1: every corpus file decodes and re-encodes to identical bytes, and
  // special float values survive in memory.
  const auto manifest = volumes::load_manifest(main.corpus_manifest());
  std::size_t files = 0, exact = 0;
  for (const auto& e : manifest.entries) {
    const auto bytes = read_bytes(main.corpus_manifest().parent_path() / e.path);
    exact += volumes::encode_vol1(volumes::decode_vol1(bytes)) == bytes ? 1 : 0;
    ++files;
  }
  volumes::Volume special = volumes::generate_phantom(9, 0, {8, 8, 8});
  special.voxels[0] = -0.0f;
  special.voxels[1] = std::numeric_limits<float>::denorm_min();
  special.voxels[2] = std::nextafter(1.0f, 0.0f);
  const auto back = volumes::decode_vol1(volumes::encode_vol1(special));
  const bool special_ok =
      std::memcmp(back.voxels.data(), special.voxels.data(), special.voxels.size() * 4) == 0;
  out.check(exact == files && special_ok,
            "VOL1 round-trip bit-exact on " + std::to_string(exact) + "/" +
                std::to_string(files) + " corpus files and special values");

  // Checkpoint: file -> decode -> encode is byte-identical, parameters equal.
  bool ckpt_ok = true;
  for (const fs::path& path : {main.embedder_checkpoint()}) {
    const auto bytes = read_bytes(path);
    const auto ck = nm::decode_checkpoint(bytes);
    const auto again = nm::decode_checkpoint(nm::encode_checkpoint(ck));
    ckpt_ok = ckpt_ok && nm::encode_checkpoint(ck) == bytes;
    for (const auto& [name, t] : ck.params.entries()) {
      ckpt_ok = ckpt_ok && again.params[name].values() == t.values();
    }
  }
  out.check(ckpt_ok, "checkpoint round-trip bit-exact");

  // Full pipeline twice from scratch with one config: reports byte-identical.
  bool reports_ok = true;
  std::string compared;
  std::vector<fs::path> roots;
  for (const char* name : {"rerun_a", "rerun_b"}) {
    const fs::path root = workspace / name;
    fs::remove_all(root);
    cli::RunConfig c = small_config;
    c.paths = cli::Paths::under(root);
    cli::Pipeline p(c);
    p.phantom();
    p.plant();
    p.train_embedder();
    p.audit("planted");
    const cli::Arm arm{false, 0};
    p.train_autoencoder(false);
    p.train_denoiser(arm);
    p.generate(arm);
    p.audit(arm.name());
    roots.push_back(root);
  }
  for (const std::string pool : {"planted", "noaug-run0"}) {
    for (const char* file : {"audit.json", "audit.csv", "synth.emb"}) {
      const fs::path rel = fs::path("reports") / pool / file;
      const bool same = same_bytes(roots[0] / rel, roots[1] / rel);
      reports_ok = reports_ok && same;
      if (!same) compared += " " + rel.string() + " differs";
    }
  }
  out.check(reports_ok, "two from-scratch runs (planted + generated pools) give byte-identical "
                        "audit.json, audit.csv and synth.emb" + compared);

  // Nearest neighbours of the main run under random pool permutations.
  const fs::path dir = main.report_dir("planted");
  const auto queries = contrastive::load_table(dir / "train.emb");
  const auto pool = contrastive::load_table(dir / "synth.emb");
  const auto want = audit::nearest_all(queries, pool);
  Rng rng(808);
  bool invariant = true;
  for (int trial = 0; trial < 5; ++trial) {
    contrastive::EmbeddingTable shuffled = pool;
    for (std::size_t i = shuffled.count(); i > 1; --i) {
      const std::size_t j = rng.index(i);
      std::swap(shuffled.ids[i - 1], shuffled.ids[j]);
      std::swap(shuffled.rows[i - 1], shuffled.rows[j]);
    }
    const auto got = audit::nearest_all(queries, shuffled);
    for (std::size_t i = 0; i < got.size(); ++i) {
      invariant = invariant && got[i].id == want[i].id && got[i].msd == want[i].msd;
    }
  }
  out.check(invariant, "nearest neighbours invariant under 5 pool permutations");
}

cli::RunConfig small_rerun_config() {
  cli::RunConfig c;
  c.train_count = 16;
  c.val_count = 32;
  c.embedder.epochs = 20;
  c.autoencoder.epochs = 3;
  c.diffusion.epochs = 5;
  c.diffusion.steps = 20;
  c.diffusion.beta_1 = 1e-3;
  c.diffusion.beta_T = 0.2;
  return c;
}

void print(int n, const std::string& name, const Outcome& o) {
  std::cout << "criterion " << n << " " << (o.pass ? "PASS" : "FAIL") << " [" << name
            << "]: " << o.detail.str() << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  if (argc == 4 && std::string(argv[2]) == "--only") only = std::atoi(argv[3]);
  if (!(argc == 2 || (argc == 4 && only >= 1 && only <= 8))) {
    std::cerr << "usage: memaudit_acceptance <workspace> [--only N]\n";
    return 2;
  }
  const fs::path workspace = argv[1];
  if (only == 0) fs::remove_all(workspace);
  fs::create_directories(workspace);

  cli::RunConfig config;
  config.paths = cli::Paths::under(workspace / "run");
  std::ofstream log_file(workspace / "pipeline.log", std::ios::app);
  cli::Pipeline pipeline(config, false, &log_file);

  bool all = true;
  const auto guarded = [&](int n, const std::string& name, const std::function<void(Outcome&)>& f) {
    if (only != 0 && n != only) return;
    Outcome o;
    try {
      f(o);
    } catch (const std::exception& e) {
      o.check(false, std::string("exception: ") + e.what());
    }
    print(n, name, o);
    all = all && o.pass;
  };

  guarded(1, "gradient fidelity", criterion_gradients);
  guarded(2, "diffusion correctness", [&](Outcome& o) { criterion_diffusion(config, o); });

  Planted planted;
  std::string planted_error;
  try {
    if (only == 0 || (only >= 3 && only <= 6)) planted = run_planted(pipeline);
  } catch (const std::exception& e) {
    planted_error = e.what();
  }
  const auto with_planted = [&](const std::function<void(const Planted&, Outcome&)>& f) {
    return [&, f](Outcome& o) {
      if (!planted_error.empty()) {
        o.check(false, "planted scenario failed: " + planted_error);
        return;
      }
      f(planted, o);
    };
  };
  guarded(3, "embedder invariance", with_planted(criterion_invariance));
  guarded(4, "planted-copy audit", with_planted(criterion_planted));
  guarded(5, "baseline contrast", with_planted(criterion_baseline));
  guarded(6, "lowest-decile mass", with_planted(criterion_histogram));
  guarded(7, "augmentation experiment", [&](Outcome& o) { criterion_experiment(pipeline, o); });
  guarded(8, "infrastructure exactness", [&](Outcome& o) {
    criterion_infrastructure(pipeline, small_rerun_config(), workspace, o);
  });

  std::cout << (all ? "ALL CRITERIA PASS" : "SOME CRITERIA FAIL") << std::endl;
  return all ? 0 : 1;
}
