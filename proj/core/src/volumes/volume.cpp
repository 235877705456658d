// Copyright 2026 The memaudit Authors
// SPDX-License-Identifier: Apache-2.0

#include "memaudit/volumes/volume.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "memaudit/errors.hpp"
#include "memaudit/io.hpp"

namespace memaudit::volumes {
namespace {

constexpr unsigned char kMagic[4] = {'V', 'O', 'L', '1'};
constexpr std::size_t kHeaderBytes = 20;
constexpr unsigned char kDtypeFloat32 = 0;

}  // namespace

std::string Dims::to_string() const {
  return std::to_string(d) + "," + std::to_string(h) + "," + std::to_string(w);
}

Dims Dims::parse(const std::string& text) {
  std::istringstream in(text);
  std::size_t v[3];
  char c1 = 0, c2 = 0;
  if (!(in >> v[0] >> c1 >> v[1] >> c2 >> v[2]) || c1 != ',' || c2 != ',' ||
      v[0] == 0 || v[1] == 0 || v[2] == 0) {
    throw ConfigError("dims must be three positive integers D,H,W, got '" + text + "'");
  }
  return {v[0], v[1], v[2]};
}

void Volume::validate() const {
  if (dims.voxel_count() == 0) {
    throw ShapeError("volume " + id + ": dims must be positive");
  }
  if (voxels.size() != dims.voxel_count()) {
    throw ShapeError("volume " + id + ": " + std::to_string(voxels.size()) +
                     " voxels for dims " + dims.to_string());
  }
}

Volume normalize(const Volume& v) {
  v.validate();
  Volume out = v;
  const auto [lo_it, hi_it] = std::minmax_element(v.voxels.begin(), v.voxels.end());
  const double lo = *lo_it, hi = *hi_it;
  if (!(hi > lo)) {
    std::fill(out.voxels.begin(), out.voxels.end(), 0.0f);
    return out;
  }
  const double span = hi - lo;
  for (std::size_t i = 0; i < v.voxels.size(); ++i) {
    out.voxels[i] = static_cast<float>((v.voxels[i] - lo) / span * 2.0 - 1.0);
  }
  return out;
}

numerics::Tensor to_tensor(const Volume& v) {
  v.validate();
  return numerics::Tensor({1, v.dims.d, v.dims.h, v.dims.w},
                          std::vector<double>(v.voxels.begin(), v.voxels.end()));
}

numerics::Tensor to_batch(const std::vector<const Volume*>& volumes) {
  if (volumes.empty()) throw ShapeError("to_batch: no volumes");
  const Dims dims = volumes.front()->dims;
  numerics::Tensor out({volumes.size(), 1, dims.d, dims.h, dims.w});
  const std::size_t n = dims.voxel_count();
  for (std::size_t b = 0; b < volumes.size(); ++b) {
    const Volume& v = *volumes[b];
    v.validate();
    if (v.dims != dims) {
      throw ShapeError("to_batch: volume " + v.id + " has dims " + v.dims.to_string() +
                       ", expected " + dims.to_string());
    }
    std::copy(v.voxels.begin(), v.voxels.end(), out.data().begin() + b * n);
  }
  return out;
}

Volume from_tensor(std::string id, const numerics::Tensor& t) {
  const auto& s = t.shape();
  Dims dims;
  if (s.size() == 4 && s[0] == 1) {
    dims = {s[1], s[2], s[3]};
  } else if (s.size() == 3) {
    dims = {s[0], s[1], s[2]};
  } else {
    throw ShapeError("from_tensor: expected [1,D,H,W], got " +
                     numerics::shape_to_string(s));
  }
  Volume v{std::move(id), dims, {}};
  v.voxels.reserve(t.size());
  for (double x : t.data()) v.voxels.push_back(static_cast<float>(x));
  return v;
}

std::vector<unsigned char> encode_vol1(const Volume& v) {
  v.validate();
  std::vector<unsigned char> out;
  out.reserve(kHeaderBytes + 4 * v.voxels.size());
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  put_u32(out, static_cast<std::uint32_t>(v.dims.d));
  put_u32(out, static_cast<std::uint32_t>(v.dims.h));
  put_u32(out, static_cast<std::uint32_t>(v.dims.w));
  out.push_back(kDtypeFloat32);
  out.insert(out.end(), 3, 0);
  for (float f : v.voxels) put_u32(out, std::bit_cast<std::uint32_t>(f));
  return out;
}

Volume decode_vol1(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError(FormatError::Kind::kBadMagic, "VOL1: bad magic");
  }
  if (bytes.size() < kHeaderBytes) {
    throw FormatError(FormatError::Kind::kTruncated, "VOL1: truncated header");
  }
  const Dims dims{get_u32(&bytes[4]), get_u32(&bytes[8]), get_u32(&bytes[12])};
  if (bytes[16] != kDtypeFloat32) {
    throw FormatError(FormatError::Kind::kUnknownDtype,
                      "VOL1: unknown dtype code " + std::to_string(bytes[16]));
  }
  if (dims.voxel_count() == 0) {
    throw FormatError(FormatError::Kind::kMalformed, "VOL1: zero extent");
  }
  const std::size_t expected = kHeaderBytes + 4 * dims.voxel_count();
  if (bytes.size() < expected) {
    throw FormatError(FormatError::Kind::kTruncated,
                      "VOL1: header declares " + dims.to_string() + " but payload holds " +
                          std::to_string((bytes.size() - kHeaderBytes) / 4) + " values");
  }
  Volume v{"", dims, std::vector<float>(dims.voxel_count())};
  for (std::size_t i = 0; i < v.voxels.size(); ++i) {
    v.voxels[i] = std::bit_cast<float>(get_u32(&bytes[kHeaderBytes + 4 * i]));
  }
  return v;
}

void save_volume(const Volume& v, const std::filesystem::path& path) {
  const auto bytes = encode_vol1(v);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw FormatError(FormatError::Kind::kIo, "cannot write " + path.string());
  }
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError(FormatError::Kind::kIo, "write failed: " + path.string());
}

Volume load_volume(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw MissingDependencyError("cannot open volume file " + path.string());
  }
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  Volume v = decode_vol1(bytes);
  v.id = path.stem().string();
  return v;
}

}  // namespace memaudit::volumes
