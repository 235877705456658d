// Copyright 2026 The memaudit Authors
// SPDX-License-Identifier: Apache-2.0

#include "memaudit/volumes/orientation.hpp"

#include <algorithm>

#include "memaudit/errors.hpp"

namespace memaudit::volumes {

Orientation Orientation::then(const Orientation& next) const {
  Orientation out;
  for (int a = 0; a < 3; ++a) {
    out.perm[a] = perm[next.perm[a]];
    out.flip[a] = flip[next.perm[a]] != next.flip[a];
  }
  return out;
}

Orientation Orientation::inverse() const {
  Orientation out;
  for (int a = 0; a < 3; ++a) {
    out.perm[perm[a]] = a;
    out.flip[perm[a]] = flip[a];
  }
  return out;
}

int Orientation::determinant() const {
  int inversions = 0;
  for (int i = 0; i < 3; ++i) {
    for (int j = i + 1; j < 3; ++j) inversions += perm[i] > perm[j];
  }
  int sign = inversions % 2 ? -1 : 1;
  for (bool f : flip) sign = f ? -sign : sign;
  return sign;
}

bool Orientation::valid_for(const Dims& dims) const {
  const auto ext = dims.as_array();
  std::array<int, 3> sorted = perm;
  std::sort(sorted.begin(), sorted.end());
  if (sorted != std::array<int, 3>{0, 1, 2}) return false;
  for (int a = 0; a < 3; ++a) {
    if (ext[perm[a]] != ext[a]) return false;
  }
  return true;
}

std::string Orientation::label() const {
  std::string s = "p";
  for (int p : perm) s += static_cast<char>('0' + p);
  s += "-f";
  for (bool f : flip) s += f ? '1' : '0';
  return s;
}

Dims oriented_dims(const Dims& dims, const Orientation& o) {
  const auto ext = dims.as_array();
  return {ext[o.perm[0]], ext[o.perm[1]], ext[o.perm[2]]};
}

Volume apply_orientation(const Volume& v, const Orientation& o) {
  v.validate();
  if (!o.valid_for(v.dims)) {
    throw ConfigError("orientation " + o.label() + " is invalid for dims " +
                      v.dims.to_string());
  }
  const Dims od = oriented_dims(v.dims, o);
  const auto out_ext = od.as_array();
  // Input stride of each output axis, with the starting offset for flips.
  const std::array<std::size_t, 3> in_stride{v.dims.h * v.dims.w, v.dims.w, 1};
  std::array<long, 3> step{};
  long base = 0;
  for (int a = 0; a < 3; ++a) {
    const long s = static_cast<long>(in_stride[o.perm[a]]);
    if (o.flip[a]) {
      base += s * static_cast<long>(out_ext[a] - 1);
      step[a] = -s;
    } else {
      step[a] = s;
    }
  }
  Volume out{v.id, od, std::vector<float>(v.voxels.size())};
  std::size_t k = 0;
  for (std::size_t i = 0; i < od.d; ++i) {
    const long bi = base + step[0] * static_cast<long>(i);
    for (std::size_t j = 0; j < od.h; ++j) {
      const long bj = bi + step[1] * static_cast<long>(j);
      for (std::size_t l = 0; l < od.w; ++l) {
        out.voxels[k++] = v.voxels[static_cast<std::size_t>(bj + step[2] * static_cast<long>(l))];
      }
    }
  }
  return out;
}

std::vector<Orientation> enumerate_orientations(const Dims& dims) {
  std::vector<Orientation> out;
  std::array<int, 3> perm{0, 1, 2};
  do {
    for (int mask = 0; mask < 8; ++mask) {
      Orientation o;
      o.perm = perm;
      for (int a = 0; a < 3; ++a) o.flip[a] = (mask >> (2 - a)) & 1;
      if (o.valid_for(dims)) out.push_back(o);
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return out;
}

std::pair<Volume, Orientation> random_augment(const Volume& v, Rng& rng) {
  const auto all = enumerate_orientations(v.dims);
  const Orientation o = all[rng.index(all.size())];
  return {apply_orientation(v, o), o};
}

}  // namespace memaudit::volumes
