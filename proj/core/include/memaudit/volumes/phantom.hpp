// Copyright 2026 The memaudit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "memaudit/volumes/volume.hpp"

namespace memaudit::volumes {

struct PhantomConfig {
  std::size_t min_shapes = 1;
  std::size_t max_shapes = 4;
  /// Std-dev of the linear background gradient coefficients.
  double background_amplitude = 0.6;
  /// Amplitude of each low-frequency cosine texture component.
  double texture_amplitude = 0.25;
  std::size_t texture_components = 3;
  /// Shape semi-axes as a fraction of the axis extent.
  double radius_min = 0.12;
  double radius_max = 0.35;
  /// Absolute shape intensity range; the sign is random.
  double intensity_min = 0.8;
  double intensity_max = 2.0;
  /// Id is prefix + zero-padded index.
  std::string id_prefix = "phantom_";
};

/// Volume `index` of the family seeded by `seed`. Each index draws from its
/// own RNG stream, so phantoms are independent of generation order.
Volume generate_phantom(std::uint64_t seed, std::size_t index, const Dims& dims,
                        const PhantomConfig& config = {});

/// Phantoms with indices [first, first + count).
std::vector<Volume> generate_phantoms(std::uint64_t seed, std::size_t count,
                                      const Dims& dims,
                                      const PhantomConfig& config = {},
                                      std::size_t first = 0);

}  // namespace memaudit::volumes
