// Copyright 2026 The memaudit Authors
// SPDX-License-Identifier: Apache-2.0

#include "memaudit/volumes/phantom.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

#include "memaudit/errors.hpp"
#include "memaudit/rng.hpp"

namespace memaudit::volumes {
namespace {

constexpr std::size_t kMinExtent = 8;

struct Shape {
  bool ellipsoid;
  double center[3];
  double radius[3];
  double intensity;
};

std::string make_id(const std::string& prefix, std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04zu", index);
  return prefix + buf;
}

}  // namespace

Volume generate_phantom(std::uint64_t seed, std::size_t index, const Dims& dims,
                        const PhantomConfig& config) {
  if (dims.d < kMinExtent || dims.h < kMinExtent || dims.w < kMinExtent) {
    throw ConfigError("phantom dims must be at least 8 per axis, got " +
                      dims.to_string());
  }
  if (config.min_shapes < 1 || config.max_shapes < config.min_shapes) {
    throw ConfigError("phantom shape count range is empty");
  }
  Rng rng(derive_seed(seed, index));

  double gradient[3];
  for (double& g : gradient) g = config.background_amplitude * rng.normal();

  struct Wave {
    double freq[3];
    double phase;
    double amplitude;
  };
  std::vector<Wave> waves(config.texture_components);
  for (auto& wave : waves) {
    for (double& f : wave.freq) f = static_cast<double>(rng.index(5)) - 2.0;
    wave.phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    wave.amplitude = config.texture_amplitude * rng.uniform(0.5, 1.0);
  }

  const std::size_t n_shapes =
      config.min_shapes + rng.index(config.max_shapes - config.min_shapes + 1);
  std::vector<Shape> shapes(n_shapes);
  for (auto& s : shapes) {
    s.ellipsoid = rng.uniform() < 0.5;
    for (int a = 0; a < 3; ++a) {
      s.center[a] = rng.uniform(0.2, 0.8);
      s.radius[a] = rng.uniform(config.radius_min, config.radius_max);
    }
    const double magnitude = rng.uniform(config.intensity_min, config.intensity_max);
    s.intensity = rng.uniform() < 0.5 ? -magnitude : magnitude;
  }

  Volume v{make_id(config.id_prefix, index), dims,
           std::vector<float>(dims.voxel_count())};
  const std::size_t ext[3] = {dims.d, dims.h, dims.w};
  std::size_t k = 0;
  for (std::size_t i = 0; i < dims.d; ++i) {
    for (std::size_t j = 0; j < dims.h; ++j) {
      for (std::size_t l = 0; l < dims.w; ++l) {
        const std::size_t idx[3] = {i, j, l};
        double u[3];
        for (int a = 0; a < 3; ++a) {
          u[a] = (static_cast<double>(idx[a]) + 0.5) / static_cast<double>(ext[a]);
        }
        double value = 0.0;
        for (int a = 0; a < 3; ++a) value += gradient[a] * (u[a] - 0.5);
        for (const auto& wave : waves) {
          const double arg = 2.0 * std::numbers::pi *
                                 (wave.freq[0] * u[0] + wave.freq[1] * u[1] +
                                  wave.freq[2] * u[2]) +
                             wave.phase;
          value += wave.amplitude * std::cos(arg);
        }
        for (const auto& s : shapes) {
          bool inside;
          if (s.ellipsoid) {
            double r2 = 0.0;
            for (int a = 0; a < 3; ++a) {
              const double q = (u[a] - s.center[a]) / s.radius[a];
              r2 += q * q;
            }
            inside = r2 <= 1.0;
          } else {
            inside = true;
            for (int a = 0; a < 3; ++a) {
              inside = inside && std::abs(u[a] - s.center[a]) <= s.radius[a];
            }
          }
          if (inside) value += s.intensity;
        }
        v.voxels[k++] = static_cast<float>(value);
      }
    }
  }
  return normalize(v);
}

std::vector<Volume> generate_phantoms(std::uint64_t seed, std::size_t count,
                                      const Dims& dims, const PhantomConfig& config,
                                      std::size_t first) {
  if (count < 1) throw ConfigError("phantom count must be at least 1");
  std::vector<Volume> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back(generate_phantom(seed, first + i, dims, config));
  }
  return out;
}

}  // namespace memaudit::volumes
