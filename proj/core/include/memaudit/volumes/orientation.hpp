// Copyright 2026 The memaudit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "memaudit/rng.hpp"
#include "memaudit/volumes/volume.hpp"

namespace memaudit::volumes {

/// Axis-aligned symmetry of a voxel grid: output axis a reads input axis
/// perm[a], mirrored when flip[a] is set.
///
///   out(i0, i1, i2) = in(j)  with  j[perm[a]] = flip[a] ? n_a - 1 - i_a : i_a
///
/// For cubic grids the 48 such maps form the full octahedral group
/// (rotations and reflections).
struct Orientation {
  std::array<int, 3> perm{0, 1, 2};
  std::array<bool, 3> flip{false, false, false};

  static Orientation identity() { return {}; }

  /// Orientation equal to applying *this first, then `next`.
  Orientation then(const Orientation& next) const;
  Orientation inverse() const;

  bool is_identity() const { return *this == identity(); }
  /// +1 for proper rotations, -1 for reflections.
  int determinant() const;
  /// True when the permutation keeps every axis extent.
  bool valid_for(const Dims& dims) const;
  /// Compact label such as "p021-f100".
  std::string label() const;

  friend bool operator==(const Orientation&, const Orientation&) = default;
};

/// Output dims of the orientation applied to `dims`.
Dims oriented_dims(const Dims& dims, const Orientation& o);

/// Throws ConfigError if the orientation mixes axes of unequal extent.
Volume apply_orientation(const Volume& v, const Orientation& o);

/// Every orientation valid for dims, identity first, in a fixed order.
std::vector<Orientation> enumerate_orientations(const Dims& dims);

/// Uniformly chosen valid orientation applied to v.
std::pair<Volume, Orientation> random_augment(const Volume& v, Rng& rng);

}  // namespace memaudit::volumes
