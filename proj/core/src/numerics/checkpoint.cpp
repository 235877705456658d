// Copyright 2026 The memaudit Authors
// SPDX-License-Identifier: Apache-2.0

#include "memaudit/numerics/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "memaudit/errors.hpp"
#include "memaudit/io.hpp"

namespace memaudit::numerics {
namespace {

constexpr unsigned char kMagic[4] = {'M', 'A', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;
constexpr std::size_t kPreamble = 16;

}  // namespace

std::vector<unsigned char> encode_checkpoint(const Checkpoint& ckpt) {
  nlohmann::json header;
  header["kind"] = ckpt.kind;
  header["config"] = ckpt.config;
  header["epoch"] = ckpt.epoch;
  header["loss"] = ckpt.loss;
  header["extra"] = ckpt.extra;
  header["params"] = nlohmann::json::array();
  for (const auto& p : ckpt.params.entries()) {
    header["params"].push_back({{"name", p.name}, {"shape", p.value.shape()}});
  }
  const std::string text = header.dump();

  std::vector<unsigned char> out(std::begin(kMagic), std::end(kMagic));
  put_u32(out, kVersion);
  put_u64(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  out.reserve(out.size() + 4 * ckpt.params.scalar_count());
  for (const auto& p : ckpt.params.entries()) {
    for (double x : p.value.data()) {
      put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(x)));
    }
  }
  return out;
}

Checkpoint decode_checkpoint(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError(FormatError::Kind::kBadMagic, "checkpoint: bad magic");
  }
  if (bytes.size() < kPreamble) {
    throw FormatError(FormatError::Kind::kTruncated, "checkpoint: truncated preamble");
  }
  if (get_u32(&bytes[4]) != kVersion) {
    throw FormatError(FormatError::Kind::kMalformed, "checkpoint: unsupported version");
  }
  const std::uint64_t header_len = get_u64(&bytes[8]);
  if (header_len > bytes.size() - kPreamble) {
    throw FormatError(FormatError::Kind::kTruncated, "checkpoint: truncated header");
  }
  Checkpoint ckpt;
  std::size_t pos = kPreamble + header_len;
  try {
    const auto header = nlohmann::json::parse(bytes.begin() + kPreamble, bytes.begin() + pos);
    ckpt.kind = header.at("kind").get<std::string>();
    ckpt.config = header.at("config");
    ckpt.epoch = header.at("epoch").get<std::size_t>();
    ckpt.loss = header.at("loss").is_null() ? 0.0 : header.at("loss").get<double>();
    ckpt.extra = header.at("extra");
    for (const auto& p : header.at("params")) {
      const auto shape = p.at("shape").get<Shape>();
      const std::size_t n = shape_size(shape);
      if (n == 0) throw FormatError(FormatError::Kind::kMalformed, "checkpoint: empty shape");
      if (4 * n > bytes.size() - pos) {
        throw FormatError(FormatError::Kind::kTruncated, "checkpoint: truncated payload");
      }
      std::vector<double> values(n);
      for (std::size_t i = 0; i < n; ++i, pos += 4) {
        values[i] = std::bit_cast<float>(get_u32(&bytes[pos]));
      }
      ckpt.params.add(p.at("name").get<std::string>(), Tensor(shape, std::move(values)));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(FormatError::Kind::kMalformed, std::string("checkpoint header: ") + e.what());
  }
  if (pos != bytes.size()) {
    throw FormatError(FormatError::Kind::kMalformed, "checkpoint: trailing bytes");
  }
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  write_bytes_atomic(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw MissingDependencyError("checkpoint not found: " + path.string());
  }
  return decode_checkpoint(read_bytes(path));
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const std::string& kind) {
  Checkpoint ckpt = load_checkpoint(path);
  if (ckpt.kind != kind) {
    throw ConfigError(path.string() + ": expected a " + kind + " checkpoint, found " +
                      ckpt.kind);
  }
  return ckpt;
}

std::string checkpoint_id(const std::vector<unsigned char>& bytes) {
  return to_hex(fnv1a64(bytes));
}

}  // namespace memaudit::numerics
