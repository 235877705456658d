// Copyright 2026 The memaudit Authors
// SPDX-License-Identifier: Apache-2.0

// Denoising diffusion over autoencoder latents with an epsilon-predicting
// network and ancestral sampling (reverse variance beta_t).

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include <nlohmann/json.hpp>

#include "memaudit/numerics/autodiff.hpp"
#include "memaudit/numerics/checkpoint.hpp"
#include "memaudit/numerics/params.hpp"
#include "memaudit/rng.hpp"

namespace memaudit::diffusion {

inline constexpr const char* kCheckpointKind = "denoiser";

/// Steps are 1-based: beta(1) .. beta(T).
class VarianceSchedule {
 public:
  VarianceSchedule(std::vector<double> betas);

  std::size_t steps() const { return beta_.size(); }
  double beta(std::size_t t) const { return beta_.at(check(t)); }
  double alpha(std::size_t t) const { return alpha_.at(check(t)); }
  double alpha_bar(std::size_t t) const { return alpha_bar_.at(check(t)); }
  const std::vector<double>& betas() const { return beta_; }
  const std::vector<double>& alpha_bars() const { return alpha_bar_; }

 private:
  std::size_t check(std::size_t t) const;

  std::vector<double> beta_;
  std::vector<double> alpha_;
  std::vector<double> alpha_bar_;
};

/// Linear beta from beta_1 to beta_T. Requires T >= 2 and 0 < beta_1 <= beta_T < 1.
VarianceSchedule make_schedule(std::size_t T = 1000, double beta_1 = 1e-4,
                               double beta_T = 0.02);

/// sqrt(1 - beta_t) * z_prev + sqrt(beta_t) * eps.
numerics::Tensor forward_step(const numerics::Tensor& z_prev, std::size_t t,
                              const numerics::Tensor& eps, const VarianceSchedule& s);
/// sqrt(alpha_bar_t) * z0 + sqrt(1 - alpha_bar_t) * eps.
numerics::Tensor q_sample(const numerics::Tensor& z0, std::size_t t,
                          const numerics::Tensor& eps, const VarianceSchedule& s);
/// Reverse-step mean given a noise estimate.
numerics::Tensor posterior_mean(const numerics::Tensor& z_t, std::size_t t,
                                const numerics::Tensor& eps_hat, const VarianceSchedule& s);

/// Per-channel statistics of latents shaped [C, ...].
struct LatentStats {
  std::vector<double> mean;
  std::vector<double> std;

  static LatentStats compute(const std::vector<numerics::Tensor>& latents);
  numerics::Tensor standardize(const numerics::Tensor& z) const;
  numerics::Tensor destandardize(const numerics::Tensor& z) const;
};

void to_json(nlohmann::json& j, const LatentStats& s);
void from_json(const nlohmann::json& j, LatentStats& s);

struct DenoiserConfig {
  /// [C, d, h, w].
  numerics::Shape latent_shape{8, 4, 4, 4};
  std::size_t width = 64;
  std::size_t time_features = 32;
  std::size_t steps = 1000;
  double beta_1 = 1e-4;
  double beta_T = 0.02;
  double learning_rate = 1e-3;
  std::size_t epochs = 300;
  std::size_t batch_size = 10;
  std::uint64_t seed = 0;

  void validate() const;
  VarianceSchedule schedule() const { return make_schedule(steps, beta_1, beta_T); }
};

void to_json(nlohmann::json& j, const DenoiserConfig& c);
void from_json(const nlohmann::json& j, DenoiserConfig& c);

numerics::ParamSet init_params(const DenoiserConfig& config);

/// Sinusoidal features of each step, [N, time_features].
numerics::Tensor time_features(const std::vector<std::size_t>& t, std::size_t count);

/// z_t: [N, C, d, h, w] -> predicted noise of the same shape.
numerics::Var predict_noise(const numerics::Var& z_t, const std::vector<std::size_t>& t,
                            const numerics::BoundParams& p, const DenoiserConfig& config);
/// Mean squared error between eps and the prediction from q_sample(z0, t, eps).
numerics::Var denoising_loss(numerics::Tape& tape, const numerics::BoundParams& p,
                             const DenoiserConfig& config, const VarianceSchedule& s,
                             const numerics::Tensor& z0, const std::vector<std::size_t>& t,
                             const numerics::Tensor& eps);

struct TrainResult {
  numerics::ParamSet params;
  std::vector<double> loss_curve;
};

/// `variants[i]` holds the standardized latents of training sample i under
/// every orientation in use (one entry without augmentation). Each epoch
/// visits every sample once through a randomly chosen variant.
TrainResult train(const DenoiserConfig& config,
                  const std::vector<std::vector<numerics::Tensor>>& variants);
TrainResult train(const DenoiserConfig& config, const std::vector<numerics::Tensor>& latents);

/// Mean loss over the given batch of latents with fixed draws.
double evaluate_loss(const numerics::ParamSet& params, const DenoiserConfig& config,
                     const std::vector<numerics::Tensor>& latents, std::uint64_t seed);

/// One ancestral step z_t -> z_{t-1}; no noise is added at t = 1.
numerics::Tensor p_sample_step(const numerics::ParamSet& params, const DenoiserConfig& config,
                               const numerics::Tensor& z_t, std::size_t t,
                               const VarianceSchedule& s, Rng& rng);

/// `count` de-standardized latents. Sample i uses its own stream derived from
/// (seed, i), so results do not depend on batching.
std::vector<numerics::Tensor> generate(const numerics::ParamSet& params,
                                       const DenoiserConfig& config, const LatentStats& stats,
                                       std::size_t count, std::uint64_t seed);

numerics::Checkpoint to_checkpoint(const DenoiserConfig& config, const LatentStats& stats,
                                   const TrainResult& result);

struct LoadedDenoiser {
  DenoiserConfig config;
  LatentStats stats;
  numerics::ParamSet params;
};
LoadedDenoiser from_checkpoint(const numerics::Checkpoint& ckpt);

}  // namespace memaudit::diffusion
