// Copyright 2026 The memaudit Authors
// SPDX-License-Identifier: Apache-2.0

#include "memaudit/autoencoder/autoencoder.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "memaudit/errors.hpp"
#include "memaudit/numerics/grad_check.hpp"
#include "memaudit/rng.hpp"
#include "memaudit/volumes/phantom.hpp"

namespace memaudit::autoencoder {
namespace {

namespace nm = numerics;

AutoencoderConfig tiny() {
  AutoencoderConfig c;
  c.dims = {8, 8, 8};
  c.downsample = 2;
  c.widths = {3};
  c.latent_channels = 2;
  c.batch_size = 2;
  c.epochs = 3;
  c.seed = 5;
  return c;
}

TEST(AutoencoderConfig, Validation) {
  AutoencoderConfig c;
  EXPECT_NO_THROW(c.validate());
  c.downsample = 3;
  EXPECT_THROW(c.validate(), ConfigError);
  c = AutoencoderConfig{};
  c.widths = {16};
  EXPECT_THROW(c.validate(), ConfigError);
  c = AutoencoderConfig{};
  c.dims = {16, 16, 18};
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(AutoencoderConfig, JsonRoundTrip) {
  AutoencoderConfig c = tiny();
  c.augment = true;
  const nlohmann::json j = c;
  const auto back = j.get<AutoencoderConfig>();
  EXPECT_EQ(nlohmann::json(back), j);
}

TEST(Autoencoder, LatentShapeForDefaultGeometry) {
  AutoencoderConfig c;
  const auto params = init_params(c);
  const auto v = volumes::generate_phantom(1, 0, {16, 16, 16});
  const nm::Tensor z = encode(params, c, v);
  EXPECT_EQ(z.shape(), (nm::Shape{8, 4, 4, 4}));
}

TEST(Autoencoder, EncodeIsDeterministic) {
  const auto c = tiny();
  const auto params = init_params(c);
  const auto v = volumes::generate_phantom(2, 0, c.dims);
  EXPECT_EQ(encode(params, c, v).values(), encode(params, c, v).values());
  const auto batch = encode_all(params, c, {v, v, v});
  EXPECT_EQ(batch[2].values(), encode(params, c, v).values());
}

TEST(Autoencoder, DimsMismatchRejected) {
  const auto c = tiny();
  const auto params = init_params(c);
  const auto v = volumes::generate_phantom(2, 0, {16, 16, 16});
  EXPECT_THROW(encode(params, c, v), ShapeError);
  EXPECT_THROW(decode(params, c, nm::Tensor({2, 3, 3, 3}, 0.0)), ShapeError);
}

TEST(Autoencoder, DecodeRangeAndShape) {
  const auto c = tiny();
  const auto params = init_params(c);
  Rng rng(3);
  for (int trial = 0; trial < 5; ++trial) {
    nm::Tensor z(c.latent_shape(), 0.0);
    for (double& x : z.data()) x = 5.0 * rng.normal();
    const auto v = decode(params, c, z);
    for (float x : v.voxels) {
      EXPECT_GE(x, -1.0f);
      EXPECT_LE(x, 1.0f);
    }
  }
  const auto x = volumes::generate_phantom(4, 0, c.dims);
  EXPECT_EQ(decode(params, c, encode(params, c, x)).dims, x.dims);
}

TEST(Autoencoder, LossIsBatchMeanOfPerSampleL1) {
  const auto c = tiny();
  const auto params = init_params(c);
  const auto vs = volumes::generate_phantoms(6, 3, c.dims);
  nm::Tape tape;
  nm::BoundParams p(tape, params, false);
  const double batch_loss =
      reconstruction_loss(tape.constant(volumes::to_batch({&vs[0], &vs[1], &vs[2]})), p, c)
          .value()
          .item();
  double per_sample = 0.0;
  for (const auto& v : vs) {
    nm::Tape t2;
    nm::BoundParams p2(t2, params, false);
    const nm::Var x = t2.constant(volumes::to_batch({&v}));
    const nm::Tensor xh = decode(encode(x, p2, c), p2, c).value();
    double s = 0.0;
    for (std::size_t i = 0; i < xh.size(); ++i) s += std::abs(xh[i] - x.value()[i]);
    per_sample += s / static_cast<double>(xh.size());
  }
  EXPECT_NEAR(batch_loss, per_sample / 3.0, 1e-14);
}

TEST(Autoencoder, FullLossPassesGradCheck) {
  const auto c = tiny();
  const auto params = init_params(c);
  const auto vs = volumes::generate_phantoms(7, 2, c.dims);
  const nm::Tensor x = volumes::to_batch({&vs[0], &vs[1]});
  const nm::LossFn fn = [&](nm::Tape& tape, const nm::BoundParams& p) {
    return reconstruction_loss(tape.constant(x), p, c);
  };
  const auto report = nm::grad_check(fn, params);
  EXPECT_TRUE(report.passed(1e-4)) << report.max_rel_error << " at " << report.worst_param;
}

TEST(Autoencoder, ShapeReportStable) {
  EXPECT_EQ(init_params(AutoencoderConfig{}).shape_report(),
            init_params(AutoencoderConfig{}).shape_report());
}

TEST(AutoencoderTraining, SeededRunsAreIdentical) {
  const auto c = tiny();
  const auto vs = volumes::generate_phantoms(8, 5, c.dims);
  const auto a = train(c, vs);
  const auto b = train(c, vs);
  EXPECT_EQ(a.loss_curve, b.loss_curve);
  ASSERT_EQ(a.loss_curve.size(), c.epochs);
}

TEST(AutoencoderTraining, AugmentedRunsAreSeeded) {
  auto c = tiny();
  c.augment = true;
  const auto vs = volumes::generate_phantoms(8, 5, c.dims);
  EXPECT_EQ(train(c, vs).loss_curve, train(c, vs).loss_curve);
}

TEST(AutoencoderTraining, SingleVolumeIsMemorized) {
  AutoencoderConfig c;
  c.batch_size = 1;
  c.epochs = 300;
  c.learning_rate = 2e-3;
  const std::vector<volumes::Volume> one{volumes::generate_phantom(9, 0, c.dims)};
  const auto r = train(c, one);
  EXPECT_LT(reconstruction_l1(r.params, c, one), 0.05);
}

TEST(AutoencoderTraining, NonFiniteLossAbortsWithLastGoodParams) {
  const auto c = tiny();
  auto vs = volumes::generate_phantoms(8, 3, c.dims);
  vs[1].voxels[10] = std::numeric_limits<float>::quiet_NaN();
  try {
    train(c, vs);
    FAIL() << "expected divergence";
  } catch (const nm::TrainingDiverged& e) {
    EXPECT_NE(std::string(e.what()).find("epoch 1"), std::string::npos);
    const auto& last = e.last_good();
    EXPECT_EQ(last.kind, kCheckpointKind);
    const auto init = init_params(c);
    for (std::size_t i = 0; i < init.size(); ++i) {
      EXPECT_EQ(last.params.entries()[i].value.values(), init.entries()[i].value.values());
    }
  }
}

TEST(AutoencoderTraining, EmptyCorpusRejected) {
  EXPECT_THROW(train(tiny(), {}), ConfigError);
}

TEST(AutoencoderCheckpoint, RoundTripIsBitExact) {
  const auto c = tiny();
  const auto r = train(c, volumes::generate_phantoms(8, 3, c.dims));
  const auto bytes = nm::encode_checkpoint(to_checkpoint(c, r));
  const auto loaded = nm::decode_checkpoint(bytes);
  EXPECT_EQ(nm::encode_checkpoint(loaded), bytes);
  const auto [c2, p2] = from_checkpoint(loaded);
  EXPECT_EQ(nlohmann::json(c2), nlohmann::json(c));
  for (std::size_t i = 0; i < p2.size(); ++i) {
    const auto& want = r.params.entries()[i].value;
    const auto& got = p2.entries()[i].value;
    ASSERT_EQ(got.shape(), want.shape());
    for (std::size_t k = 0; k < got.size(); ++k) {
      ASSERT_EQ(got[k], static_cast<double>(static_cast<float>(want[k])));
    }
  }
  EXPECT_EQ(loaded.epoch, c.epochs);
}

TEST(AutoencoderCheckpoint, WrongKindOrShapesRejected) {
  const auto c = tiny();
  nm::Checkpoint ck = to_checkpoint(c, {init_params(c), {}});
  ck.kind = "embedder";
  EXPECT_THROW(from_checkpoint(ck), ConfigError);
  ck = to_checkpoint(c, {init_params(AutoencoderConfig{}), {}});
  EXPECT_THROW(from_checkpoint(ck), FormatError);
}

}  // namespace
}  // namespace memaudit::autoencoder
