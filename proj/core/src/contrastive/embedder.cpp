// Copyright 2026 The memaudit Authors
// SPDX-License-Identifier: Apache-2.0

#include "memaudit/contrastive/embedder.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <limits>
#include <numbers>
#include <tuple>

#include "memaudit/errors.hpp"
#include "memaudit/io.hpp"
#include "memaudit/numerics/init.hpp"
#include "memaudit/numerics/optimizer.hpp"
#include "memaudit/numerics/training.hpp"

namespace memaudit::contrastive {

namespace nm = numerics;
using nm::BoundParams;
using nm::ParamSet;
using nm::Shape;
using nm::Tensor;
using nm::Var;

namespace {

constexpr nm::ConvGeometry kDown{2, 1};
constexpr nm::ConvGeometry kSame{1, 1};
constexpr std::size_t kDownKernel = 4;
constexpr std::size_t kSameKernel = 3;
constexpr unsigned char kTableMagic[4] = {'M', 'A', 'E', 'T'};
constexpr std::uint32_t kTableVersion = 1;
constexpr std::uint64_t kValTripletStream = 0x7A1;

Var conv_block(const Var& x, const BoundParams& p, const std::string& name,
               nm::ConvGeometry g) {
  return nm::add_channel_bias(nm::conv3d(x, p[name + ".w"], g), p[name + ".b"]);
}

// Row r of an [N,d] tensor or the whole of a [d] tensor.
struct Rows {
  std::size_t count;
  std::size_t dim;
};

Rows rows_of(const Shape& s, const char* op) {
  if (s.size() == 1) return {1, s[0]};
  if (s.size() == 2) return {s[0], s[1]};
  throw ShapeError(std::string(op) + ": embeddings must be [d] or [N,d], got " +
                   nm::shape_to_string(s));
}

double euclid(const double* a, const double* b, std::size_t d) {
  double s = 0.0;
  for (std::size_t i = 0; i < d; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

void check_dims(const volumes::Volume& v, const EmbedderConfig& c, const char* op) {
  if (!(v.dims == c.dims)) {
    throw ShapeError(std::string(op) + ": volume " + v.id + " has dims " + v.dims.to_string() +
                     ", embedder expects " + c.dims.to_string());
  }
}

Tensor batch_of(const std::vector<const volumes::Volume*>& vs) { return volumes::to_batch(vs); }

double batch_variance(const Tensor& e) {
  const std::size_t n = e.shape()[0], d = e.shape()[1];
  if (n < 2) return std::numeric_limits<double>::infinity();
  double total = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += e[i * d + j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) var += (e[i * d + j] - mean) * (e[i * d + j] - mean);
    total += var / static_cast<double>(n);
  }
  return total / static_cast<double>(d);
}

}  // namespace

void EmbedderConfig::validate() const {
  if (widths.empty()) throw ConfigError("embedder: need at least one downsampling width");
  const std::size_t factor = std::size_t{1} << widths.size();
  for (std::size_t axis : dims.as_array()) {
    if (axis % factor != 0) {
      throw ConfigError("embedder: dims " + dims.to_string() + " not divisible by " +
                        std::to_string(factor));
    }
  }
  if (std::count(widths.begin(), widths.end(), 0u) > 0 || trunk_channels == 0 || hidden == 0) {
    throw ConfigError("embedder: channel counts must be positive");
  }
  if (!(margin >= 0.0)) throw ConfigError("embedder: margin must be >= 0");
  if (!(learning_rate > 0.0)) throw ConfigError("embedder: learning_rate must be > 0");
  if (batch_size == 0) throw ConfigError("embedder: batch_size must be positive");
  if (negatives == Negatives::kBatch && batch_size < 2) {
    throw ConfigError("embedder: batch negatives need batch_size >= 2");
  }
}

std::size_t EmbedderConfig::trunk_size() const {
  if (global_pool) return trunk_channels;
  const std::size_t factor = std::size_t{1} << widths.size();
  return trunk_channels * (dims.d / factor) * (dims.h / factor) * (dims.w / factor);
}

void to_json(nlohmann::json& j, const EmbedderConfig& c) {
  j = {{"dims", c.dims.as_array()},
       {"widths", c.widths},
       {"trunk_channels", c.trunk_channels},
       {"global_pool", c.global_pool},
       {"hidden", c.hidden},
       {"bounded", c.bounded},
       {"embedding_dim", kEmbeddingDim},
       {"margin", c.margin},
       {"negatives", c.negatives == Negatives::kBatch ? "batch" : "single"},
       {"augment_anchor", c.augment_anchor},
       {"learning_rate", c.learning_rate},
       {"cosine_decay", c.cosine_decay},
       {"epochs", c.epochs},
       {"batch_size", c.batch_size},
       {"seed", c.seed},
       {"variance_floor", c.variance_floor}};
}

void from_json(const nlohmann::json& j, EmbedderConfig& c) {
  const EmbedderConfig d;
  if (j.contains("dims")) {
    const auto a = j.at("dims").get<std::array<std::size_t, 3>>();
    c.dims = {a[0], a[1], a[2]};
  } else {
    c.dims = d.dims;
  }
  if (j.value("embedding_dim", kEmbeddingDim) != kEmbeddingDim) {
    throw ConfigError("embedder: embedding_dim is fixed at 32");
  }
  c.widths = j.value("widths", d.widths);
  c.trunk_channels = j.value("trunk_channels", d.trunk_channels);
  c.global_pool = j.value("global_pool", d.global_pool);
  c.hidden = j.value("hidden", d.hidden);
  c.bounded = j.value("bounded", d.bounded);
  c.margin = j.value("margin", d.margin);
  const std::string negatives = j.value("negatives", std::string("single"));
  if (negatives != "single" && negatives != "batch") {
    throw ConfigError("embedder: negatives must be \"single\" or \"batch\", got \"" + negatives +
                      "\"");
  }
  c.negatives = negatives == "batch" ? Negatives::kBatch : Negatives::kSingle;
  c.augment_anchor = j.value("augment_anchor", d.augment_anchor);
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.cosine_decay = j.value("cosine_decay", d.cosine_decay);
  c.epochs = j.value("epochs", d.epochs);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.seed = j.value("seed", d.seed);
  c.variance_floor = j.value("variance_floor", d.variance_floor);
}

ParamSet init_params(const EmbedderConfig& c) {
  c.validate();
  Rng rng(derive_seed(c.seed, 0xE3B));
  const double relu_gain = std::sqrt(2.0);
  ParamSet p;
  const auto add = [&](const std::string& name, Shape w_shape, double gain) {
    const std::size_t out = w_shape[0];
    const std::size_t fan_in = nm::fan_in_of(w_shape);
    p.add(name + ".w", nm::scaled_uniform(w_shape, fan_in, rng, gain));
    p.add(name + ".b", Tensor({out}, 0.0));
  };
  std::size_t ch = 1;
  for (std::size_t i = 0; i < c.widths.size(); ++i) {
    add("conv" + std::to_string(i), {c.widths[i], ch, kDownKernel, kDownKernel, kDownKernel},
        relu_gain);
    ch = c.widths[i];
  }
  add("trunk", {c.trunk_channels, ch, kSameKernel, kSameKernel, kSameKernel}, relu_gain);
  add("fc0", {c.hidden, c.trunk_size()}, relu_gain);
  add("fc1", {kEmbeddingDim, c.hidden}, 1.0);
  return p;
}

Var embed(const Var& x, const BoundParams& p, const EmbedderConfig& c) {
  const Shape& s = x.shape();
  if (s.size() != 5 || s[1] != 1 || s[2] != c.dims.d || s[3] != c.dims.h || s[4] != c.dims.w) {
    throw ShapeError("embed: expected [N,1," + c.dims.to_string() + "], got " +
                     nm::shape_to_string(s));
  }
  Var h = x;
  for (std::size_t i = 0; i < c.widths.size(); ++i) {
    h = nm::leaky_relu(conv_block(h, p, "conv" + std::to_string(i), kDown));
  }
  h = nm::leaky_relu(conv_block(h, p, "trunk", kSame));
  h = c.global_pool ? nm::spatial_mean(h) : nm::reshape(h, {s[0], c.trunk_size()});
  h = nm::leaky_relu(nm::dense(h, p["fc0.w"], p["fc0.b"]));
  h = nm::dense(h, p["fc1.w"], p["fc1.b"]);
  return c.bounded ? nm::tanh(h) : h;
}

std::vector<double> embed(const ParamSet& params, const EmbedderConfig& c,
                          const volumes::Volume& v) {
  check_dims(v, c, "embed");
  nm::Tape tape;
  BoundParams p(tape, params, false);
  return embed(tape.constant(batch_of({&v})), p, c).value().values();
}

std::vector<std::vector<double>> embed_all(const ParamSet& params, const EmbedderConfig& c,
                                           const std::vector<volumes::Volume>& vs) {
  std::vector<std::vector<double>> out;
  out.reserve(vs.size());
  const std::size_t chunk = std::max<std::size_t>(c.batch_size, 16);
  for (std::size_t start = 0; start < vs.size(); start += chunk) {
    const std::size_t end = std::min(vs.size(), start + chunk);
    std::vector<const volumes::Volume*> items;
    for (std::size_t i = start; i < end; ++i) {
      check_dims(vs[i], c, "embed");
      items.push_back(&vs[i]);
    }
    nm::Tape tape;
    BoundParams p(tape, params, false);
    const Tensor e = embed(tape.constant(batch_of(items)), p, c).value();
    for (std::size_t i = 0; i < items.size(); ++i) {
      const auto first = e.values().begin() + static_cast<std::ptrdiff_t>(i * kEmbeddingDim);
      out.emplace_back(first, first + static_cast<std::ptrdiff_t>(kEmbeddingDim));
    }
  }
  return out;
}

Var triplet_loss(const Var& anchor, const Var& positive, const Var& negative, double margin) {
  if (!(margin >= 0.0)) throw ConfigError("triplet_loss: margin must be >= 0");
  if (anchor.shape() != positive.shape() || anchor.shape() != negative.shape()) {
    throw ShapeError("triplet_loss: embedding shapes differ: " +
                     nm::shape_to_string(anchor.shape()) + ", " +
                     nm::shape_to_string(positive.shape()) + ", " +
                     nm::shape_to_string(negative.shape()));
  }
  const Rows r = rows_of(anchor.shape(), "triplet_loss");
  const double* a = anchor.value().data().data();
  const double* pp = positive.value().data().data();
  const double* n = negative.value().data().data();
  double total = 0.0;
  for (std::size_t i = 0; i < r.count; ++i) {
    const std::size_t o = i * r.dim;
    total += std::max(0.0, euclid(a + o, pp + o, r.dim) - euclid(a + o, n + o, r.dim) + margin);
  }
  const std::size_t ai = anchor.id(), pi = positive.id(), ni = negative.id();
  return anchor.tape().record(
      Tensor::scalar(total / static_cast<double>(r.count)), {ai, pi, ni},
      [ai, pi, ni, r, margin](nm::Tape& t, std::size_t self) {
        const double g = t.output_grad(self)[0] / static_cast<double>(r.count);
        const double* a = t.value(ai).data().data();
        const double* p = t.value(pi).data().data();
        const double* n = t.value(ni).data().data();
        const bool ga = t.requires_grad(ai), gp = t.requires_grad(pi), gn = t.requires_grad(ni);
        for (std::size_t i = 0; i < r.count; ++i) {
          const std::size_t o = i * r.dim;
          const double dp = euclid(a + o, p + o, r.dim);
          const double dn = euclid(a + o, n + o, r.dim);
          if (dp - dn + margin <= 0.0) continue;
          // d|u|/du = u/|u|, taken as 0 at u = 0.
          const double sp = dp > 0.0 ? g / dp : 0.0;
          const double sn = dn > 0.0 ? g / dn : 0.0;
          for (std::size_t k = 0; k < r.dim; ++k) {
            const double up = sp * (a[o + k] - p[o + k]);
            const double un = sn * (a[o + k] - n[o + k]);
            if (ga) t.grad_buffer(ai)[o + k] += up - un;
            if (gp) t.grad_buffer(pi)[o + k] -= up;
            if (gn) t.grad_buffer(ni)[o + k] += un;
          }
        }
      });
}

Var batch_triplet_loss(const Var& anchor, const Var& positive, double margin) {
  if (!(margin >= 0.0)) throw ConfigError("batch_triplet_loss: margin must be >= 0");
  if (anchor.shape() != positive.shape()) {
    throw ShapeError("batch_triplet_loss: embedding shapes differ: " +
                     nm::shape_to_string(anchor.shape()) + ", " +
                     nm::shape_to_string(positive.shape()));
  }
  const Rows r = rows_of(anchor.shape(), "batch_triplet_loss");
  if (r.count < 2 || anchor.shape().size() != 2) {
    throw ShapeError("batch_triplet_loss: need [N,d] with N >= 2, got " +
                     nm::shape_to_string(anchor.shape()));
  }
  const double pairs = static_cast<double>(r.count * (r.count - 1));
  const double* a = anchor.value().data().data();
  const double* pp = positive.value().data().data();
  double total = 0.0;
  for (std::size_t i = 0; i < r.count; ++i) {
    const double dp = euclid(a + i * r.dim, pp + i * r.dim, r.dim);
    for (std::size_t j = 0; j < r.count; ++j) {
      if (j == i) continue;
      total += std::max(0.0, dp - euclid(a + i * r.dim, a + j * r.dim, r.dim) + margin);
    }
  }
  const std::size_t ai = anchor.id(), pi = positive.id();
  return anchor.tape().record(
      Tensor::scalar(total / pairs), {ai, pi},
      [ai, pi, r, margin, pairs](nm::Tape& t, std::size_t self) {
        const double g = t.output_grad(self)[0] / pairs;
        const double* a = t.value(ai).data().data();
        const double* p = t.value(pi).data().data();
        const bool ga = t.requires_grad(ai), gp = t.requires_grad(pi);
        for (std::size_t i = 0; i < r.count; ++i) {
          const std::size_t oi = i * r.dim;
          const double dp = euclid(a + oi, p + oi, r.dim);
          for (std::size_t j = 0; j < r.count; ++j) {
            if (j == i) continue;
            const std::size_t oj = j * r.dim;
            const double dn = euclid(a + oi, a + oj, r.dim);
            if (dp - dn + margin <= 0.0) continue;
            const double sp = dp > 0.0 ? g / dp : 0.0;
            const double sn = dn > 0.0 ? g / dn : 0.0;
            for (std::size_t k = 0; k < r.dim; ++k) {
              const double up = sp * (a[oi + k] - p[oi + k]);
              const double un = sn * (a[oi + k] - a[oj + k]);
              if (ga) {
                t.grad_buffer(ai)[oi + k] += up - un;
                t.grad_buffer(ai)[oj + k] += un;
              }
              if (gp) t.grad_buffer(pi)[oi + k] -= up;
            }
          }
        }
      });
}

double triplet_loss(const std::vector<double>& anchor, const std::vector<double>& positive,
                    const std::vector<double>& negative, double margin) {
  if (!(margin >= 0.0)) throw ConfigError("triplet_loss: margin must be >= 0");
  if (anchor.size() != positive.size() || anchor.size() != negative.size() || anchor.empty()) {
    throw ShapeError("triplet_loss: embedding dimensions differ");
  }
  const std::size_t d = anchor.size();
  return std::max(0.0, euclid(anchor.data(), positive.data(), d) -
                           euclid(anchor.data(), negative.data(), d) + margin);
}

std::vector<Triplet> sample_triplets(const std::vector<volumes::Volume>& corpus, Rng& rng) {
  if (corpus.size() < 2) throw ConfigError("sample_triplets: need at least 2 volumes");
  std::vector<Triplet> out;
  out.reserve(corpus.size());
  for (std::size_t a : nm::shuffled_indices(corpus.size(), rng)) {
    auto [positive, orientation] = volumes::random_augment(corpus[a], rng);
    std::size_t neg = rng.index(corpus.size() - 1);
    if (neg >= a) ++neg;
    out.push_back({a, neg, orientation, std::move(positive)});
  }
  return out;
}

std::vector<AnchorView> sample_views(const std::vector<volumes::Volume>& corpus,
                                     bool augment_anchor, Rng& rng) {
  if (corpus.size() < 2) throw ConfigError("sample_views: need at least 2 volumes");
  std::vector<AnchorView> out;
  out.reserve(corpus.size());
  for (std::size_t a : nm::shuffled_indices(corpus.size(), rng)) {
    AnchorView view;
    view.index = a;
    if (augment_anchor) {
      std::tie(view.anchor, view.anchor_orientation) = volumes::random_augment(corpus[a], rng);
    } else {
      view.anchor = corpus[a];
    }
    std::tie(view.positive, view.orientation) = volumes::random_augment(corpus[a], rng);
    out.push_back(std::move(view));
  }
  return out;
}

namespace {

struct TripletEval {
  double accuracy;
  double loss;
  // Mean d+ / d-, reported alongside accuracy.
  double ratio;
};

TripletEval evaluate(const ParamSet& params, const EmbedderConfig& c,
                     const std::vector<volumes::Volume>& corpus,
                     const std::vector<Triplet>& triplets) {
  if (triplets.empty()) throw ConfigError("triplet evaluation: no triplets");
  const auto base = embed_all(params, c, corpus);
  std::vector<volumes::Volume> positives;
  positives.reserve(triplets.size());
  for (const auto& t : triplets) positives.push_back(t.positive);
  const auto pos = embed_all(params, c, positives);
  std::size_t correct = 0;
  double loss = 0.0, ratio = 0.0;
  for (std::size_t i = 0; i < triplets.size(); ++i) {
    const auto& a = base[triplets[i].anchor];
    const auto& n = base[triplets[i].negative];
    const double dp = euclid(a.data(), pos[i].data(), kEmbeddingDim);
    const double dn = euclid(a.data(), n.data(), kEmbeddingDim);
    if (dp < dn) ++correct;
    loss += std::max(0.0, dp - dn + c.margin);
    ratio += dn > 0.0 ? dp / dn : 1.0;
  }
  const double n = static_cast<double>(triplets.size());
  return {static_cast<double>(correct) / n, loss / n, ratio / n};
}

}  // namespace

double triplet_accuracy(const ParamSet& params, const EmbedderConfig& c,
                        const std::vector<volumes::Volume>& corpus,
                        const std::vector<Triplet>& triplets) {
  return evaluate(params, c, corpus, triplets).accuracy;
}

TrainResult train(const EmbedderConfig& c, const std::vector<volumes::Volume>& data,
                  const std::vector<volumes::Volume>& val) {
  c.validate();
  if (data.size() < 2) throw ConfigError("train_embedder: need at least 2 training volumes");
  if (val.size() < 2) throw ConfigError("train_embedder: need at least 2 validation volumes");
  for (const auto& v : data) check_dims(v, c, "train_embedder");
  for (const auto& v : val) check_dims(v, c, "train_embedder");

  Rng val_rng(derive_seed(c.seed, kValTripletStream));
  const auto val_triplets = sample_triplets(val, val_rng);

  TrainResult result{init_params(c), {}, {}, {}, {}, 0};
  ParamSet params = result.params;
  TripletEval best = evaluate(params, c, val, val_triplets);
  nm::Adam adam(params, {.learning_rate = c.learning_rate});
  Rng rng(derive_seed(c.seed, 0xE3B01));

  for (std::size_t epoch = 0; epoch < c.epochs; ++epoch) {
    const ParamSet last_good = params;
    const auto diverged = [&](const std::string& why) {
      nm::Checkpoint ck = to_checkpoint(c, result);
      ck.params = last_good;
      ck.epoch = epoch;
      return nm::TrainingDiverged(
          "embedder training aborted at epoch " + std::to_string(epoch + 1) + ": " + why, ck);
    };
    if (c.cosine_decay) {
      const double progress = static_cast<double>(epoch) / static_cast<double>(c.epochs);
      adam.set_learning_rate(c.learning_rate * 0.5 * (1.0 + std::cos(std::numbers::pi * progress)));
    }
    // Anchor views double as negatives in batch mode; single mode draws one
    // negative index per anchor.
    std::vector<AnchorView> views;
    std::vector<std::size_t> negatives;
    if (c.negatives == Negatives::kBatch || c.augment_anchor) {
      views = sample_views(data, c.augment_anchor, rng);
      if (c.negatives == Negatives::kSingle) {
        for (const auto& v : views) {
          std::size_t neg = rng.index(data.size() - 1);
          negatives.push_back(neg >= v.index ? neg + 1 : neg);
        }
      }
    } else {
      for (auto& t : sample_triplets(data, rng)) {
        views.push_back({t.anchor, {}, data[t.anchor], t.orientation, std::move(t.positive)});
        negatives.push_back(t.negative);
      }
    }
    double total = 0.0;
    std::size_t counted = 0;
    for (std::size_t start = 0; start < views.size(); start += c.batch_size) {
      const std::size_t end = std::min(views.size(), start + c.batch_size);
      // A lone trailing anchor has no in-batch negative.
      if (c.negatives == Negatives::kBatch && end - start < 2) continue;
      std::vector<const volumes::Volume*> as, ps, ns;
      for (std::size_t i = start; i < end; ++i) {
        as.push_back(&views[i].anchor);
        ps.push_back(&views[i].positive);
        if (c.negatives == Negatives::kSingle) ns.push_back(&data[negatives[i]]);
      }
      const Tensor xa = batch_of(as), xp = batch_of(ps);
      const Tensor xn = ns.empty() ? Tensor() : batch_of(ns);
      double variance = 0.0;
      const auto loss_fn = [&](nm::Tape& tape, const BoundParams& p) {
        const Var ea = embed(tape.constant(xa), p, c);
        variance = batch_variance(ea.value());
        const Var ep = embed(tape.constant(xp), p, c);
        if (c.negatives == Negatives::kBatch) return batch_triplet_loss(ea, ep, c.margin);
        return triplet_loss(ea, ep, embed(tape.constant(xn), p, c), c.margin);
      };
      try {
        total += nm::train_step(loss_fn, params, adam) * static_cast<double>(end - start);
        counted += end - start;
      } catch (const NumericalError& e) {
        throw diverged(e.what());
      }
      if (variance < c.variance_floor) {
        throw diverged("embedding variance " + std::to_string(variance) +
                       " fell below the floor (collapsed embeddings)");
      }
    }
    result.loss_curve.push_back(total / static_cast<double>(counted));
    const TripletEval ev = evaluate(params, c, val, val_triplets);
    result.val_accuracy.push_back(ev.accuracy);
    result.val_loss.push_back(ev.loss);
    result.val_ratio.push_back(ev.ratio);
    if (ev.accuracy >= best.accuracy) {
      best = ev;
      result.params = params;
      result.best_epoch = epoch + 1;
    }
  }
  return result;
}

nm::Checkpoint to_checkpoint(const EmbedderConfig& c, const TrainResult& r) {
  nm::Checkpoint ckpt;
  ckpt.kind = kCheckpointKind;
  ckpt.config = c;
  ckpt.epoch = r.best_epoch;
  ckpt.loss = r.best_epoch > 0 ? r.loss_curve[r.best_epoch - 1] : 0.0;
  ckpt.extra["loss_curve"] = r.loss_curve;
  ckpt.extra["val_accuracy"] = r.val_accuracy;
  ckpt.extra["val_loss"] = r.val_loss;
  ckpt.extra["val_ratio"] = r.val_ratio;
  ckpt.params = r.params;
  return ckpt;
}

std::pair<EmbedderConfig, ParamSet> from_checkpoint(const nm::Checkpoint& ckpt) {
  if (ckpt.kind != kCheckpointKind) {
    throw ConfigError("expected an embedder checkpoint, found " + ckpt.kind);
  }
  EmbedderConfig c = ckpt.config.get<EmbedderConfig>();
  c.validate();
  if (init_params(c).shape_report() != ckpt.params.shape_report()) {
    throw FormatError(FormatError::Kind::kMalformed,
                      "embedder checkpoint parameters do not match its config");
  }
  return {c, ckpt.params};
}

void EmbeddingTable::validate() const {
  if (dim == 0) throw ConfigError("embedding table: dim must be positive");
  if (ids.size() != rows.size()) throw ConfigError("embedding table: ids and rows differ");
  for (const auto& r : rows) {
    if (r.size() != dim) throw ShapeError("embedding table: row length differs from dim");
    for (double x : r) {
      if (!std::isfinite(x)) throw NumericalError("embedding table: non-finite component");
    }
  }
}

EmbeddingTable make_table(const ParamSet& params, const EmbedderConfig& c,
                          const std::vector<volumes::Volume>& vs, std::string checkpoint_id) {
  EmbeddingTable t;
  t.checkpoint_id = std::move(checkpoint_id);
  t.rows = embed_all(params, c, vs);
  for (auto& r : t.rows) {
    for (double& x : r) x = static_cast<float>(x);
  }
  for (const auto& v : vs) t.ids.push_back(v.id);
  t.validate();
  return t;
}

std::vector<unsigned char> encode_table(const EmbeddingTable& t) {
  t.validate();
  const nlohmann::json header = {
      {"checkpoint_id", t.checkpoint_id}, {"dim", t.dim}, {"count", t.count()}, {"ids", t.ids}};
  const std::string text = header.dump();
  std::vector<unsigned char> out(std::begin(kTableMagic), std::end(kTableMagic));
  put_u32(out, kTableVersion);
  put_u64(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& r : t.rows) {
    for (double x : r) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(x)));
  }
  return out;
}

EmbeddingTable decode_table(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kTableMagic, 4) != 0) {
    throw FormatError(FormatError::Kind::kBadMagic, "embedding table: bad magic");
  }
  if (bytes.size() < 16) {
    throw FormatError(FormatError::Kind::kTruncated, "embedding table: truncated preamble");
  }
  if (get_u32(&bytes[4]) != kTableVersion) {
    throw FormatError(FormatError::Kind::kMalformed, "embedding table: unsupported version");
  }
  const std::uint64_t len = get_u64(&bytes[8]);
  if (len > bytes.size() - 16) {
    throw FormatError(FormatError::Kind::kTruncated, "embedding table: truncated header");
  }
  EmbeddingTable t;
  std::size_t pos = 16 + len;
  try {
    const auto h = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + pos);
    t.checkpoint_id = h.at("checkpoint_id").get<std::string>();
    t.dim = h.at("dim").get<std::size_t>();
    t.ids = h.at("ids").get<std::vector<std::string>>();
    if (h.at("count").get<std::size_t>() != t.ids.size()) {
      throw FormatError(FormatError::Kind::kMalformed, "embedding table: count mismatch");
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(FormatError::Kind::kMalformed,
                      std::string("embedding table header: ") + e.what());
  }
  if (bytes.size() - pos != 4 * t.dim * t.ids.size()) {
    throw FormatError(FormatError::Kind::kTruncated, "embedding table: payload size mismatch");
  }
  t.rows.assign(t.ids.size(), std::vector<double>(t.dim));
  for (auto& r : t.rows) {
    for (double& x : r) {
      x = std::bit_cast<float>(get_u32(&bytes[pos]));
      pos += 4;
    }
  }
  return t;
}

void save_table(const EmbeddingTable& t, const std::filesystem::path& path) {
  write_bytes_atomic(path, encode_table(t));
}

EmbeddingTable load_table(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw MissingDependencyError("embedding table not found: " + path.string());
  }
  return decode_table(read_bytes(path));
}

}  // namespace memaudit::contrastive
