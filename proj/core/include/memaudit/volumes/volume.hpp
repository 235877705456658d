// Copyright 2026 The memaudit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "memaudit/numerics/tensor.hpp"

namespace memaudit::volumes {

/// Extents along (d, h, w).
struct Dims {
  std::size_t d = 0, h = 0, w = 0;

  std::size_t voxel_count() const { return d * h * w; }
  std::array<std::size_t, 3> as_array() const { return {d, h, w}; }
  bool cubic() const { return d == h && h == w; }
  std::string to_string() const;
  friend bool operator==(const Dims&, const Dims&) = default;

  /// Parses "D,H,W".
  static Dims parse(const std::string& text);
};

/// A 3D scalar field, voxel index ((d*H + h)*W + w).
struct Volume {
  std::string id;
  Dims dims;
  std::vector<float> voxels;

  std::size_t index(std::size_t d, std::size_t h, std::size_t w) const {
    return (d * dims.h + h) * dims.w + w;
  }
  float at(std::size_t d, std::size_t h, std::size_t w) const {
    return voxels[index(d, h, w)];
  }
  /// Throws ShapeError if the voxel count disagrees with dims.
  void validate() const;
};

/// Affine map of [min, max] onto [-1, 1]; constant volumes become all zeros.
Volume normalize(const Volume& v);

/// [1, D, H, W] tensor of the voxels.
numerics::Tensor to_tensor(const Volume& v);
/// Stacks volumes of equal dims into [N, 1, D, H, W].
numerics::Tensor to_batch(const std::vector<const Volume*>& volumes);
/// Inverse of to_tensor for a [1,D,H,W] or [D,H,W] tensor.
Volume from_tensor(std::string id, const numerics::Tensor& t);

void save_volume(const Volume& v, const std::filesystem::path& path);
Volume load_volume(const std::filesystem::path& path);

/// Encodes/decodes the VOL1 byte layout (id is not stored).
std::vector<unsigned char> encode_vol1(const Volume& v);
Volume decode_vol1(const std::vector<unsigned char>& bytes);

}  // namespace memaudit::volumes
