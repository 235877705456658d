// Copyright 2026 The memaudit Authors
// SPDX-License-Identifier: Apache-2.0

#include "memaudit/autoencoder/autoencoder.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <string>

#include "memaudit/errors.hpp"
#include "memaudit/numerics/init.hpp"
#include "memaudit/numerics/optimizer.hpp"
#include "memaudit/numerics/training.hpp"
#include "memaudit/rng.hpp"
#include "memaudit/volumes/orientation.hpp"

namespace memaudit::autoencoder {

namespace nm = numerics;
using nm::BoundParams;
using nm::ConvGeometry;
using nm::ParamSet;
using nm::Shape;
using nm::Tensor;
using nm::Var;

namespace {

constexpr ConvGeometry kDown{2, 1};
constexpr ConvGeometry kSame{1, 1};
constexpr std::size_t kDownKernel = 4;
constexpr std::size_t kSameKernel = 3;

std::string block(const char* prefix, std::size_t i) { return prefix + std::to_string(i); }

Var conv_block(const Var& x, const BoundParams& p, const std::string& name,
               ConvGeometry geom) {
  return nm::add_channel_bias(nm::conv3d(x, p[name + ".w"], geom), p[name + ".b"]);
}

Var up_block(const Var& x, const BoundParams& p, const std::string& name) {
  return nm::add_channel_bias(nm::transposed_conv3d(x, p[name + ".w"], kDown),
                              p[name + ".b"]);
}

void check_input(const Shape& s, const AutoencoderConfig& c, const char* what) {
  const auto& d = c.dims;
  if (s.size() != 5 || s[1] != 1 || s[2] != d.d || s[3] != d.h || s[4] != d.w) {
    throw ShapeError(std::string(what) + ": expected [N,1," + d.to_string() + "], got " +
                     nm::shape_to_string(s));
  }
}

}  // namespace

void AutoencoderConfig::validate() const {
  if (downsample == 0 || !std::has_single_bit(downsample)) {
    throw ConfigError("autoencoder: downsample must be a power of two");
  }
  const std::size_t stages = static_cast<std::size_t>(std::countr_zero(downsample));
  if (widths.size() != stages) {
    throw ConfigError("autoencoder: need " + std::to_string(stages) +
                      " widths for downsample " + std::to_string(downsample));
  }
  for (std::size_t axis : dims.as_array()) {
    if (axis == 0 || axis % downsample != 0) {
      throw ConfigError("autoencoder: dims " + dims.to_string() +
                        " not divisible by downsample " + std::to_string(downsample));
    }
  }
  if (latent_channels == 0 || std::count(widths.begin(), widths.end(), 0u) > 0) {
    throw ConfigError("autoencoder: channel counts must be positive");
  }
  if (!(learning_rate > 0.0)) throw ConfigError("autoencoder: learning_rate must be > 0");
  if (batch_size == 0) throw ConfigError("autoencoder: batch_size must be positive");
}

volumes::Dims AutoencoderConfig::latent_dims() const {
  return {dims.d / downsample, dims.h / downsample, dims.w / downsample};
}

Shape AutoencoderConfig::latent_shape() const {
  const auto l = latent_dims();
  return {latent_channels, l.d, l.h, l.w};
}

void to_json(nlohmann::json& j, const AutoencoderConfig& c) {
  j = {{"dims", c.dims.as_array()},
       {"downsample", c.downsample},
       {"latent_channels", c.latent_channels},
       {"widths", c.widths},
       {"learning_rate", c.learning_rate},
       {"epochs", c.epochs},
       {"batch_size", c.batch_size},
       {"seed", c.seed},
       {"augment", c.augment}};
}

void from_json(const nlohmann::json& j, AutoencoderConfig& c) {
  AutoencoderConfig d;
  if (j.contains("dims")) {
    const auto a = j.at("dims").get<std::array<std::size_t, 3>>();
    c.dims = {a[0], a[1], a[2]};
  } else {
    c.dims = d.dims;
  }
  c.downsample = j.value("downsample", d.downsample);
  c.latent_channels = j.value("latent_channels", d.latent_channels);
  c.widths = j.value("widths", d.widths);
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.epochs = j.value("epochs", d.epochs);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.seed = j.value("seed", d.seed);
  c.augment = j.value("augment", d.augment);
}

ParamSet init_params(const AutoencoderConfig& c) {
  c.validate();
  Rng rng(derive_seed(c.seed, 0xAE));
  ParamSet p;
  const auto add_conv = [&](const std::string& name, std::size_t out, std::size_t in,
                            std::size_t k, std::size_t fan_in, double gain) {
    p.add(name + ".w", nm::scaled_uniform({out, in, k, k, k}, fan_in, rng, gain));
    p.add(name + ".b", Tensor({out}, 0.0));
  };
  const std::size_t k3 = kSameKernel * kSameKernel * kSameKernel;
  const std::size_t k4 = kDownKernel * kDownKernel * kDownKernel;
  const double relu_gain = std::sqrt(2.0);

  std::size_t ch = 1;
  for (std::size_t i = 0; i < c.widths.size(); ++i) {
    add_conv(block("enc", i), c.widths[i], ch, kDownKernel, ch * k4, relu_gain);
    ch = c.widths[i];
  }
  add_conv("enc_out", c.latent_channels, ch, kSameKernel, ch * k3, 1.0);

  add_conv("dec_in", ch, c.latent_channels, kSameKernel, c.latent_channels * k3, relu_gain);
  for (std::size_t i = c.widths.size(); i-- > 0;) {
    // Transposed kernel [C_in_of_block, C_out_of_block, k, k, k]; each output
    // voxel sees k^3 / 8 taps per input channel.
    const std::size_t out = i > 0 ? c.widths[i - 1] : c.widths[0];
    p.add(block("dec", i) + ".w",
          nm::scaled_uniform({ch, out, kDownKernel, kDownKernel, kDownKernel}, ch * k4 / 8,
                             rng, relu_gain));
    p.add(block("dec", i) + ".b", Tensor({out}, 0.0));
    ch = out;
  }
  add_conv("dec_out", 1, ch, kSameKernel, ch * k3, 1.0);
  return p;
}

Var encode(const Var& x, const BoundParams& p, const AutoencoderConfig& c) {
  check_input(x.shape(), c, "encode");
  Var h = x;
  for (std::size_t i = 0; i < c.widths.size(); ++i) {
    h = nm::leaky_relu(conv_block(h, p, block("enc", i), kDown));
  }
  return conv_block(h, p, "enc_out", kSame);
}

Var decode(const Var& z, const BoundParams& p, const AutoencoderConfig& c) {
  const Shape& s = z.shape();
  const Shape want = c.latent_shape();
  if (s.size() != 5 || !std::equal(want.begin(), want.end(), s.begin() + 1)) {
    throw ShapeError("decode: expected [N," + nm::shape_to_string(want) + "], got " +
                     nm::shape_to_string(s));
  }
  Var h = nm::leaky_relu(conv_block(z, p, "dec_in", kSame));
  for (std::size_t i = c.widths.size(); i-- > 0;) {
    h = nm::leaky_relu(up_block(h, p, block("dec", i)));
  }
  return nm::tanh(conv_block(h, p, "dec_out", kSame));
}

Var reconstruction_loss(const Var& x, const BoundParams& p, const AutoencoderConfig& c) {
  return nm::l1_loss(x, decode(encode(x, p, c), p, c));
}

Tensor encode(const ParamSet& params, const AutoencoderConfig& c, const volumes::Volume& v) {
  if (!(v.dims == c.dims)) {
    throw ShapeError("encode: volume " + v.id + " has dims " + v.dims.to_string() +
                     ", model expects " + c.dims.to_string());
  }
  nm::Tape tape;
  BoundParams p(tape, params, false);
  const Var x = tape.constant(volumes::to_batch({&v}));
  return encode(x, p, c).value().reshaped(c.latent_shape());
}

std::vector<Tensor> encode_all(const ParamSet& params, const AutoencoderConfig& c,
                               const std::vector<volumes::Volume>& vs) {
  std::vector<Tensor> out;
  out.reserve(vs.size());
  const Shape one = c.latent_shape();
  const std::size_t per = nm::shape_size(one);
  for (std::size_t start = 0; start < vs.size(); start += c.batch_size) {
    const std::size_t end = std::min(vs.size(), start + c.batch_size);
    std::vector<const volumes::Volume*> chunk;
    for (std::size_t i = start; i < end; ++i) {
      if (!(vs[i].dims == c.dims)) {
        throw ShapeError("encode: volume " + vs[i].id + " has dims " +
                         vs[i].dims.to_string() + ", model expects " + c.dims.to_string());
      }
      chunk.push_back(&vs[i]);
    }
    nm::Tape tape;
    BoundParams p(tape, params, false);
    const Tensor z = encode(tape.constant(volumes::to_batch(chunk)), p, c).value();
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      const auto first = z.values().begin() + static_cast<std::ptrdiff_t>(i * per);
      out.emplace_back(one, std::vector<double>(first, first + static_cast<std::ptrdiff_t>(per)));
    }
  }
  return out;
}

volumes::Volume decode(const ParamSet& params, const AutoencoderConfig& c, const Tensor& z,
                       std::string id) {
  Shape batched = c.latent_shape();
  if (z.shape() != batched) {
    throw ShapeError("decode: expected latent " + nm::shape_to_string(batched) + ", got " +
                     nm::shape_to_string(z.shape()));
  }
  batched.insert(batched.begin(), 1);
  nm::Tape tape;
  BoundParams p(tape, params, false);
  const Tensor x = decode(tape.constant(z.reshaped(batched)), p, c).value();
  return volumes::from_tensor(std::move(id), x.reshaped({1, c.dims.d, c.dims.h, c.dims.w}));
}

double reconstruction_l1(const ParamSet& params, const AutoencoderConfig& c,
                         const std::vector<volumes::Volume>& vs) {
  if (vs.empty()) throw ConfigError("reconstruction_l1: no volumes");
  const auto latents = encode_all(params, c, vs);
  double total = 0.0;
  for (std::size_t i = 0; i < vs.size(); ++i) {
    const volumes::Volume r = decode(params, c, latents[i]);
    double s = 0.0;
    for (std::size_t j = 0; j < r.voxels.size(); ++j) {
      s += std::abs(static_cast<double>(r.voxels[j]) - static_cast<double>(vs[i].voxels[j]));
    }
    total += s / static_cast<double>(r.voxels.size());
  }
  return total / static_cast<double>(vs.size());
}

TrainResult train(const AutoencoderConfig& c, const std::vector<volumes::Volume>& data) {
  c.validate();
  if (data.empty()) throw ConfigError("train_autoencoder: no training volumes");
  for (const auto& v : data) {
    if (!(v.dims == c.dims)) {
      throw ShapeError("train_autoencoder: volume " + v.id + " has dims " +
                       v.dims.to_string() + ", config expects " + c.dims.to_string());
    }
  }
  TrainResult result{init_params(c), {}};
  nm::Adam adam(result.params, {.learning_rate = c.learning_rate});
  Rng rng(derive_seed(c.seed, 0xAE01));

  for (std::size_t epoch = 0; epoch < c.epochs; ++epoch) {
    const ParamSet last_good = result.params;
    const auto order = nm::shuffled_indices(data.size(), rng);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += c.batch_size) {
      const std::size_t end = std::min(order.size(), start + c.batch_size);
      std::vector<volumes::Volume> augmented;
      std::vector<const volumes::Volume*> batch;
      augmented.reserve(end - start);
      for (std::size_t i = start; i < end; ++i) {
        if (c.augment) {
          augmented.push_back(volumes::random_augment(data[order[i]], rng).first);
          batch.push_back(&augmented.back());
        } else {
          batch.push_back(&data[order[i]]);
        }
      }
      const Tensor x = volumes::to_batch(batch);
      const auto loss_fn = [&](nm::Tape& tape, const BoundParams& p) {
        return reconstruction_loss(tape.constant(x), p, c);
      };
      try {
        total += nm::train_step(loss_fn, result.params, adam) *
                 static_cast<double>(end - start);
      } catch (const NumericalError& e) {
        TrainResult partial{last_good, result.loss_curve};
        throw nm::TrainingDiverged(
            "autoencoder training diverged at epoch " + std::to_string(epoch + 1) + ": " +
                e.what(),
            to_checkpoint(c, partial));
      }
    }
    result.loss_curve.push_back(total / static_cast<double>(data.size()));
  }
  return result;
}

nm::Checkpoint to_checkpoint(const AutoencoderConfig& c, const TrainResult& r) {
  nm::Checkpoint ckpt;
  ckpt.kind = kCheckpointKind;
  ckpt.config = c;
  ckpt.epoch = r.loss_curve.size();
  ckpt.loss = r.loss_curve.empty() ? 0.0 : r.loss_curve.back();
  ckpt.extra["loss_curve"] = r.loss_curve;
  ckpt.params = r.params;
  return ckpt;
}

std::pair<AutoencoderConfig, ParamSet> from_checkpoint(const nm::Checkpoint& ckpt) {
  if (ckpt.kind != kCheckpointKind) {
    throw ConfigError("expected an autoencoder checkpoint, found " + ckpt.kind);
  }
  AutoencoderConfig c = ckpt.config.get<AutoencoderConfig>();
  c.validate();
  const ParamSet reference = init_params(c);
  if (reference.shape_report() != ckpt.params.shape_report()) {
    throw FormatError(FormatError::Kind::kMalformed,
                      "autoencoder checkpoint parameters do not match its config");
  }
  return {c, ckpt.params};
}

}  // namespace memaudit::autoencoder
