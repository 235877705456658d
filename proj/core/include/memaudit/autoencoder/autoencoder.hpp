// Copyright 2026 The memaudit Authors
// SPDX-License-Identifier: Apache-2.0

// Convolutional autoencoder mapping volumes to a compact latent grid.
//
// Encoder: log2(factor) blocks of stride-2 conv (k4, p1) + leaky_relu, then a
// k3 conv to the latent channels. Decoder: k3 conv + leaky_relu, mirrored
// stride-2 transposed convs + leaky_relu, a k3 conv to one channel and tanh.

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include <nlohmann/json.hpp>

#include "memaudit/numerics/autodiff.hpp"
#include "memaudit/numerics/checkpoint.hpp"
#include "memaudit/numerics/params.hpp"
#include "memaudit/volumes/volume.hpp"

namespace memaudit::autoencoder {

inline constexpr const char* kCheckpointKind = "autoencoder";

struct AutoencoderConfig {
  volumes::Dims dims{16, 16, 16};
  std::size_t downsample = 4;
  std::size_t latent_channels = 8;
  /// One width per downsampling block; size must equal log2(downsample).
  std::vector<std::size_t> widths{16, 32};
  double learning_rate = 1e-3;
  std::size_t epochs = 40;
  std::size_t batch_size = 8;
  std::uint64_t seed = 0;
  /// Train on a random orientation of each sample per draw.
  bool augment = false;

  void validate() const;
  volumes::Dims latent_dims() const;
  /// [latent_channels, d, h, w].
  numerics::Shape latent_shape() const;
};

void to_json(nlohmann::json& j, const AutoencoderConfig& c);
void from_json(const nlohmann::json& j, AutoencoderConfig& c);

/// Seeded from config.seed.
numerics::ParamSet init_params(const AutoencoderConfig& config);

/// x: [N,1,D,H,W] -> [N,latent_channels,d,h,w].
numerics::Var encode(const numerics::Var& x, const numerics::BoundParams& p,
                     const AutoencoderConfig& config);
/// z: [N,latent_channels,d,h,w] -> [N,1,D,H,W] in (-1, 1).
numerics::Var decode(const numerics::Var& z, const numerics::BoundParams& p,
                     const AutoencoderConfig& config);
/// Mean L1 between a batch and its reconstruction.
numerics::Var reconstruction_loss(const numerics::Var& x, const numerics::BoundParams& p,
                                  const AutoencoderConfig& config);

/// Latent of one volume, shaped latent_shape().
numerics::Tensor encode(const numerics::ParamSet& params, const AutoencoderConfig& config,
                        const volumes::Volume& v);
/// Latents of many volumes, processed in chunks of config.batch_size.
std::vector<numerics::Tensor> encode_all(const numerics::ParamSet& params,
                                         const AutoencoderConfig& config,
                                         const std::vector<volumes::Volume>& vs);
/// Volume decoded from a latent shaped latent_shape().
volumes::Volume decode(const numerics::ParamSet& params, const AutoencoderConfig& config,
                       const numerics::Tensor& z, std::string id = "");

double reconstruction_l1(const numerics::ParamSet& params, const AutoencoderConfig& config,
                         const std::vector<volumes::Volume>& vs);

struct TrainResult {
  numerics::ParamSet params;
  /// Mean training loss per epoch.
  std::vector<double> loss_curve;
};

/// Throws numerics::TrainingDiverged on a non-finite loss.
TrainResult train(const AutoencoderConfig& config, const std::vector<volumes::Volume>& train);

numerics::Checkpoint to_checkpoint(const AutoencoderConfig& config, const TrainResult& result);
/// Config and parameters from a checkpoint of this kind.
std::pair<AutoencoderConfig, numerics::ParamSet> from_checkpoint(const numerics::Checkpoint& c);

}  // namespace memaudit::autoencoder
