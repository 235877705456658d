// Copyright 2026 The memaudit Authors
// SPDX-License-Identifier: Apache-2.0

#include "memaudit/diffusion/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "memaudit/errors.hpp"
#include "memaudit/numerics/init.hpp"
#include "memaudit/numerics/optimizer.hpp"
#include "memaudit/numerics/training.hpp"

namespace memaudit::diffusion {

namespace nm = numerics;
using nm::BoundParams;
using nm::ParamSet;
using nm::Shape;
using nm::Tensor;
using nm::Var;

namespace {

constexpr nm::ConvGeometry kSame{1, 1};
constexpr std::size_t kKernel = 3;

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": noise shape " + nm::shape_to_string(b.shape()) +
                     " differs from latent shape " + nm::shape_to_string(a.shape()));
  }
}

// a * x + b * y elementwise.
Tensor axpby(double a, const Tensor& x, double b, const Tensor& y) {
  Tensor out(x.shape(), 0.0);
  auto o = out.data();
  const auto xs = x.data();
  const auto ys = y.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a * xs[i] + b * ys[i];
  return out;
}

Tensor normal_like(const Shape& shape, Rng& rng) {
  Tensor t(shape, 0.0);
  for (double& x : t.data()) x = rng.normal();
  return t;
}

Shape batched(const Shape& one, std::size_t n) {
  Shape s = one;
  s.insert(s.begin(), n);
  return s;
}

// Copies `items` into one [N, ...] tensor.
Tensor stack(const std::vector<const Tensor*>& items) {
  const Shape& one = items.front()->shape();
  Tensor out(batched(one, items.size()), 0.0);
  auto o = out.data();
  const std::size_t per = nm::shape_size(one);
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i]->shape() != one) throw ShapeError("stack: latents differ in shape");
    std::copy(items[i]->data().begin(), items[i]->data().end(),
              o.begin() + static_cast<std::ptrdiff_t>(i * per));
  }
  return out;
}

Tensor slice(const Tensor& batch, std::size_t i) {
  Shape one(batch.shape().begin() + 1, batch.shape().end());
  const std::size_t per = nm::shape_size(one);
  const auto first = batch.values().begin() + static_cast<std::ptrdiff_t>(i * per);
  return Tensor(one, std::vector<double>(first, first + static_cast<std::ptrdiff_t>(per)));
}

Var conv_block(const Var& x, const BoundParams& p, const std::string& name) {
  return nm::add_channel_bias(nm::conv3d(x, p[name + ".w"], kSame), p[name + ".b"]);
}

}  // namespace

VarianceSchedule::VarianceSchedule(std::vector<double> betas) : beta_(std::move(betas)) {
  if (beta_.size() < 2) throw ConfigError("schedule: need at least 2 steps");
  double prod = 1.0;
  for (double b : beta_) {
    if (!(b > 0.0 && b < 1.0)) throw ConfigError("schedule: every beta must lie in (0, 1)");
    alpha_.push_back(1.0 - b);
    prod *= 1.0 - b;
    alpha_bar_.push_back(prod);
  }
}

std::size_t VarianceSchedule::check(std::size_t t) const {
  if (t < 1 || t > beta_.size()) {
    throw ConfigError("step t=" + std::to_string(t) + " outside [1, " +
                      std::to_string(beta_.size()) + "]");
  }
  return t - 1;
}

VarianceSchedule make_schedule(std::size_t T, double beta_1, double beta_T) {
  if (T < 2) throw ConfigError("make_schedule: T must be at least 2");
  if (!(beta_1 > 0.0 && beta_1 <= beta_T && beta_T < 1.0)) {
    throw ConfigError("make_schedule: need 0 < beta_1 <= beta_T < 1");
  }
  std::vector<double> betas(T);
  for (std::size_t i = 0; i < T; ++i) {
    betas[i] = beta_1 + (beta_T - beta_1) * static_cast<double>(i) / static_cast<double>(T - 1);
  }
  return VarianceSchedule(std::move(betas));
}

Tensor forward_step(const Tensor& z_prev, std::size_t t, const Tensor& eps,
                    const VarianceSchedule& s) {
  check_same_shape(z_prev, eps, "forward_step");
  const double b = s.beta(t);
  return axpby(std::sqrt(1.0 - b), z_prev, std::sqrt(b), eps);
}

Tensor q_sample(const Tensor& z0, std::size_t t, const Tensor& eps, const VarianceSchedule& s) {
  check_same_shape(z0, eps, "q_sample");
  const double ab = s.alpha_bar(t);
  return axpby(std::sqrt(ab), z0, std::sqrt(1.0 - ab), eps);
}

Tensor posterior_mean(const Tensor& z_t, std::size_t t, const Tensor& eps_hat,
                      const VarianceSchedule& s) {
  check_same_shape(z_t, eps_hat, "posterior_mean");
  const double inv = 1.0 / std::sqrt(s.alpha(t));
  return axpby(inv, z_t, -inv * s.beta(t) / std::sqrt(1.0 - s.alpha_bar(t)), eps_hat);
}

LatentStats LatentStats::compute(const std::vector<Tensor>& latents) {
  if (latents.empty()) throw ConfigError("latent stats: no latents");
  const Shape& shape = latents.front().shape();
  if (shape.size() < 2) throw ShapeError("latent stats: latents must be [C, ...]");
  const std::size_t channels = shape[0];
  const std::size_t per = nm::shape_size(shape) / channels;
  LatentStats st{std::vector<double>(channels, 0.0), std::vector<double>(channels, 0.0)};
  const double n = static_cast<double>(latents.size() * per);
  for (const auto& z : latents) {
    if (z.shape() != shape) throw ShapeError("latent stats: latents differ in shape");
    for (std::size_t c = 0; c < channels; ++c) {
      for (std::size_t i = 0; i < per; ++i) st.mean[c] += z[c * per + i];
    }
  }
  for (double& m : st.mean) m /= n;
  for (const auto& z : latents) {
    for (std::size_t c = 0; c < channels; ++c) {
      for (std::size_t i = 0; i < per; ++i) {
        const double d = z[c * per + i] - st.mean[c];
        st.std[c] += d * d;
      }
    }
  }
  for (std::size_t c = 0; c < channels; ++c) {
    st.std[c] = std::sqrt(st.std[c] / n);
    if (!(st.std[c] > 0.0) || !std::isfinite(st.std[c])) {
      throw NumericalError("latent stats: channel " + std::to_string(c) +
                           " has zero or non-finite spread");
    }
  }
  return st;
}

Tensor LatentStats::standardize(const Tensor& z) const {
  Tensor out = z;
  const std::size_t per = z.size() / mean.size();
  if (z.shape().empty() || z.shape()[0] != mean.size()) {
    throw ShapeError("standardize: channel count mismatch");
  }
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) {
    const std::size_t c = i / per;
    o[i] = (o[i] - mean[c]) / std[c];
  }
  return out;
}

Tensor LatentStats::destandardize(const Tensor& z) const {
  Tensor out = z;
  const std::size_t per = z.size() / mean.size();
  if (z.shape().empty() || z.shape()[0] != mean.size()) {
    throw ShapeError("destandardize: channel count mismatch");
  }
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) {
    const std::size_t c = i / per;
    o[i] = o[i] * std[c] + mean[c];
  }
  return out;
}

void to_json(nlohmann::json& j, const LatentStats& s) {
  j = {{"mean", s.mean}, {"std", s.std}};
}

void from_json(const nlohmann::json& j, LatentStats& s) {
  s.mean = j.at("mean").get<std::vector<double>>();
  s.std = j.at("std").get<std::vector<double>>();
  if (s.mean.size() != s.std.size() || s.mean.empty()) {
    throw ConfigError("latent stats: mean and std must be non-empty and equal length");
  }
}

void DenoiserConfig::validate() const {
  if (latent_shape.size() != 4 || nm::shape_size(latent_shape) == 0) {
    throw ConfigError("denoiser: latent_shape must be [C,d,h,w] with positive extents");
  }
  if (width == 0) throw ConfigError("denoiser: width must be positive");
  if (time_features == 0 || time_features % 2 != 0) {
    throw ConfigError("denoiser: time_features must be a positive even number");
  }
  if (!(learning_rate > 0.0)) throw ConfigError("denoiser: learning_rate must be > 0");
  if (batch_size == 0) throw ConfigError("denoiser: batch_size must be positive");
  make_schedule(steps, beta_1, beta_T);
}

void to_json(nlohmann::json& j, const DenoiserConfig& c) {
  j = {{"latent_shape", c.latent_shape},
       {"width", c.width},
       {"time_features", c.time_features},
       {"steps", c.steps},
       {"beta_1", c.beta_1},
       {"beta_T", c.beta_T},
       {"schedule", "linear"},
       {"learning_rate", c.learning_rate},
       {"epochs", c.epochs},
       {"batch_size", c.batch_size},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, DenoiserConfig& c) {
  const DenoiserConfig d;
  if (j.value("schedule", std::string("linear")) != "linear") {
    throw ConfigError("denoiser: only the linear schedule is supported");
  }
  c.latent_shape = j.value("latent_shape", d.latent_shape);
  c.width = j.value("width", d.width);
  c.time_features = j.value("time_features", d.time_features);
  c.steps = j.value("steps", d.steps);
  c.beta_1 = j.value("beta_1", d.beta_1);
  c.beta_T = j.value("beta_T", d.beta_T);
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.epochs = j.value("epochs", d.epochs);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.seed = j.value("seed", d.seed);
}

ParamSet init_params(const DenoiserConfig& c) {
  c.validate();
  Rng rng(derive_seed(c.seed, 0xD1F));
  const std::size_t ch = c.latent_shape[0];
  const std::size_t k3 = kKernel * kKernel * kKernel;
  const double relu_gain = std::sqrt(2.0);
  ParamSet p;
  const auto add_conv = [&](const std::string& name, std::size_t out, std::size_t in,
                            double gain) {
    p.add(name + ".w", nm::scaled_uniform({out, in, kKernel, kKernel, kKernel}, in * k3, rng,
                                          gain));
    p.add(name + ".b", Tensor({out}, 0.0));
  };
  const auto add_dense = [&](const std::string& name, std::size_t out, std::size_t in,
                             double gain) {
    p.add(name + ".w", nm::scaled_uniform({out, in}, in, rng, gain));
    p.add(name + ".b", Tensor({out}, 0.0));
  };
  add_conv("conv0", c.width, ch, relu_gain);
  add_dense("time0", c.width, c.time_features, 1.0);
  add_conv("conv1", c.width, c.width, relu_gain);
  add_dense("time1", c.width, c.time_features, 1.0);
  // Small output layer so the untrained prediction stays near zero.
  add_conv("conv_out", ch, c.width, 0.05);
  return p;
}

Tensor time_features(const std::vector<std::size_t>& t, std::size_t count) {
  if (count == 0 || count % 2 != 0) throw ConfigError("time_features: count must be even");
  Tensor out({t.size(), count}, 0.0);
  const std::size_t half = count / 2;
  for (std::size_t n = 0; n < t.size(); ++n) {
    for (std::size_t k = 0; k < half; ++k) {
      const double freq =
          std::pow(10000.0, -static_cast<double>(k) / static_cast<double>(half));
      const double arg = static_cast<double>(t[n]) * freq;
      out[n * count + k] = std::sin(arg);
      out[n * count + half + k] = std::cos(arg);
    }
  }
  return out;
}

Var predict_noise(const Var& z_t, const std::vector<std::size_t>& t, const BoundParams& p,
                  const DenoiserConfig& c) {
  const Shape& s = z_t.shape();
  if (s.size() != 5 || !std::equal(c.latent_shape.begin(), c.latent_shape.end(), s.begin() + 1)) {
    throw ShapeError("predict_noise: expected [N," + nm::shape_to_string(c.latent_shape) +
                     "], got " + nm::shape_to_string(s));
  }
  if (t.size() != s[0]) throw ShapeError("predict_noise: need one step per sample");
  const Var tf = z_t.tape().constant(time_features(t, c.time_features));
  Var h = conv_block(z_t, p, "conv0");
  h = nm::leaky_relu(nm::add_channel_bias(h, nm::dense(tf, p["time0.w"], p["time0.b"])));
  h = conv_block(h, p, "conv1");
  h = nm::leaky_relu(nm::add_channel_bias(h, nm::dense(tf, p["time1.w"], p["time1.b"])));
  return conv_block(h, p, "conv_out");
}

Var denoising_loss(nm::Tape& tape, const BoundParams& p, const DenoiserConfig& c,
                   const VarianceSchedule& s, const Tensor& z0,
                   const std::vector<std::size_t>& t, const Tensor& eps) {
  if (z0.shape() != eps.shape() || z0.shape().empty() || z0.shape()[0] != t.size()) {
    throw ShapeError("denoising_loss: z0, eps and t disagree in batch shape");
  }
  Tensor z_t(z0.shape(), 0.0);
  const std::size_t per = z0.size() / t.size();
  auto zt = z_t.data();
  for (std::size_t n = 0; n < t.size(); ++n) {
    const double a = std::sqrt(s.alpha_bar(t[n]));
    const double b = std::sqrt(1.0 - s.alpha_bar(t[n]));
    for (std::size_t i = n * per; i < (n + 1) * per; ++i) zt[i] = a * z0[i] + b * eps[i];
  }
  const Var pred = predict_noise(tape.constant(std::move(z_t)), t, p, c);
  return nm::mse_loss(tape.constant(eps), pred);
}

TrainResult train(const DenoiserConfig& c, const std::vector<std::vector<Tensor>>& variants) {
  c.validate();
  if (variants.size() < 2) throw ConfigError("train_denoiser: need at least 2 training latents");
  for (const auto& v : variants) {
    if (v.empty()) throw ConfigError("train_denoiser: sample without latents");
    for (const auto& z : v) {
      if (z.shape() != c.latent_shape) {
        throw ShapeError("train_denoiser: latent shape " + nm::shape_to_string(z.shape()) +
                         " differs from config " + nm::shape_to_string(c.latent_shape));
      }
    }
  }
  const VarianceSchedule sched = c.schedule();
  TrainResult result{init_params(c), {}};
  nm::Adam adam(result.params, {.learning_rate = c.learning_rate});
  Rng rng(derive_seed(c.seed, 0xD1F01));

  for (std::size_t epoch = 0; epoch < c.epochs; ++epoch) {
    const ParamSet last_good = result.params;
    const auto order = nm::shuffled_indices(variants.size(), rng);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += c.batch_size) {
      const std::size_t end = std::min(order.size(), start + c.batch_size);
      std::vector<const Tensor*> picks;
      std::vector<std::size_t> t;
      for (std::size_t i = start; i < end; ++i) {
        const auto& v = variants[order[i]];
        picks.push_back(&v[v.size() == 1 ? 0 : rng.index(v.size())]);
        t.push_back(1 + rng.index(sched.steps()));
      }
      const Tensor z0 = stack(picks);
      const Tensor eps = normal_like(z0.shape(), rng);
      const auto loss_fn = [&](nm::Tape& tape, const BoundParams& p) {
        return denoising_loss(tape, p, c, sched, z0, t, eps);
      };
      try {
        total += nm::train_step(loss_fn, result.params, adam) * static_cast<double>(end - start);
      } catch (const NumericalError& e) {
        throw nm::TrainingDiverged(
            "denoiser training diverged at epoch " + std::to_string(epoch + 1) + ": " + e.what(),
            [&] {
              nm::Checkpoint ck;
              ck.kind = kCheckpointKind;
              ck.config = c;
              ck.epoch = epoch;
              ck.params = last_good;
              return ck;
            }());
      }
    }
    result.loss_curve.push_back(total / static_cast<double>(variants.size()));
  }
  return result;
}

TrainResult train(const DenoiserConfig& c, const std::vector<Tensor>& latents) {
  std::vector<std::vector<Tensor>> variants;
  variants.reserve(latents.size());
  for (const auto& z : latents) variants.push_back({z});
  return train(c, variants);
}

double evaluate_loss(const ParamSet& params, const DenoiserConfig& c,
                     const std::vector<Tensor>& latents, std::uint64_t seed) {
  if (latents.empty()) throw ConfigError("evaluate_loss: no latents");
  const VarianceSchedule sched = c.schedule();
  Rng rng(seed);
  std::vector<const Tensor*> items;
  std::vector<std::size_t> t;
  for (const auto& z : latents) {
    items.push_back(&z);
    t.push_back(1 + rng.index(sched.steps()));
  }
  const Tensor z0 = stack(items);
  const Tensor eps = normal_like(z0.shape(), rng);
  nm::Tape tape;
  BoundParams p(tape, params, false);
  return denoising_loss(tape, p, c, sched, z0, t, eps).value().item();
}

Tensor p_sample_step(const ParamSet& params, const DenoiserConfig& c, const Tensor& z_t,
                     std::size_t t, const VarianceSchedule& s, Rng& rng) {
  if (z_t.shape() != c.latent_shape) {
    throw ShapeError("p_sample_step: expected " + nm::shape_to_string(c.latent_shape) +
                     ", got " + nm::shape_to_string(z_t.shape()));
  }
  s.beta(t);
  nm::Tape tape;
  BoundParams p(tape, params, false);
  const Tensor eps_hat =
      slice(predict_noise(tape.constant(z_t.reshaped(batched(c.latent_shape, 1))), {t}, p, c)
                .value(),
            0);
  Tensor mean = posterior_mean(z_t, t, eps_hat, s);
  if (t > 1) mean = axpby(1.0, mean, std::sqrt(s.beta(t)), normal_like(mean.shape(), rng));
  return mean;
}

std::vector<Tensor> generate(const ParamSet& params, const DenoiserConfig& c,
                             const LatentStats& stats, std::size_t count, std::uint64_t seed) {
  if (count == 0) throw ConfigError("generate: count must be at least 1");
  const VarianceSchedule sched = c.schedule();
  std::vector<Tensor> out;
  out.reserve(count);
  for (std::size_t start = 0; start < count; start += c.batch_size) {
    const std::size_t n = std::min(count, start + c.batch_size) - start;
    std::vector<Rng> rngs;
    std::vector<Tensor> z;
    for (std::size_t i = 0; i < n; ++i) {
      rngs.emplace_back(derive_seed(seed, start + i));
      z.push_back(normal_like(c.latent_shape, rngs.back()));
    }
    for (std::size_t t = sched.steps(); t >= 1; --t) {
      std::vector<const Tensor*> items;
      for (const auto& zi : z) items.push_back(&zi);
      nm::Tape tape;
      BoundParams p(tape, params, false);
      const Tensor eps_hat =
          predict_noise(tape.constant(stack(items)), std::vector<std::size_t>(n, t), p, c)
              .value();
      for (std::size_t i = 0; i < n; ++i) {
        z[i] = posterior_mean(z[i], t, slice(eps_hat, i), sched);
        if (t > 1) {
          z[i] = axpby(1.0, z[i], std::sqrt(sched.beta(t)), normal_like(z[i].shape(), rngs[i]));
        }
      }
    }
    for (auto& zi : z) out.push_back(stats.destandardize(zi));
  }
  return out;
}

nm::Checkpoint to_checkpoint(const DenoiserConfig& c, const LatentStats& stats,
                             const TrainResult& r) {
  nm::Checkpoint ckpt;
  ckpt.kind = kCheckpointKind;
  ckpt.config = c;
  ckpt.epoch = r.loss_curve.size();
  ckpt.loss = r.loss_curve.empty() ? 0.0 : r.loss_curve.back();
  ckpt.extra["latent_stats"] = stats;
  ckpt.extra["schedule"] = {{"kind", "linear"},
                            {"steps", c.steps},
                            {"beta_1", c.beta_1},
                            {"beta_T", c.beta_T}};
  ckpt.extra["loss_curve"] = r.loss_curve;
  ckpt.params = r.params;
  return ckpt;
}

LoadedDenoiser from_checkpoint(const nm::Checkpoint& ckpt) {
  if (ckpt.kind != kCheckpointKind) {
    throw ConfigError("expected a denoiser checkpoint, found " + ckpt.kind);
  }
  LoadedDenoiser out{ckpt.config.get<DenoiserConfig>(), {}, ckpt.params};
  out.config.validate();
  try {
    out.stats = ckpt.extra.at("latent_stats").get<LatentStats>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(FormatError::Kind::kMalformed,
                      std::string("denoiser checkpoint: latent stats: ") + e.what());
  }
  if (out.stats.mean.size() != out.config.latent_shape[0]) {
    throw FormatError(FormatError::Kind::kMalformed,
                      "denoiser checkpoint: latent stats do not match channel count");
  }
  if (init_params(out.config).shape_report() != ckpt.params.shape_report()) {
    throw FormatError(FormatError::Kind::kMalformed,
                      "denoiser checkpoint parameters do not match its config");
  }
  return out;
}

}  // namespace memaudit::diffusion
