// Copyright 2026 The memaudit Authors
// SPDX-License-Identifier: Apache-2.0

// Small file helpers shared by the serializers.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace memaudit {

std::vector<unsigned char> read_bytes(const std::filesystem::path& path);
std::string read_text(const std::filesystem::path& path);
nlohmann::json read_json(const std::filesystem::path& path);

/// Writes to a sibling temp file, then renames over `path`.
void write_bytes_atomic(const std::filesystem::path& path,
                        const std::vector<unsigned char>& bytes);
void write_text_atomic(const std::filesystem::path& path, std::string_view text);

/// 64-bit FNV-1a, used for content and config fingerprints.
std::uint64_t fnv1a64(std::string_view bytes);
std::uint64_t fnv1a64(const std::vector<unsigned char>& bytes);
std::string to_hex(std::uint64_t value);

/// Little-endian byte packing.
void put_u32(std::vector<unsigned char>& out, std::uint32_t v);
void put_u64(std::vector<unsigned char>& out, std::uint64_t v);
std::uint32_t get_u32(const unsigned char* p);
std::uint64_t get_u64(const unsigned char* p);

}  // namespace memaudit
