// Copyright 2026 The memaudit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "memaudit/volumes/volume.hpp"

namespace memaudit::volumes {

enum class Split { kTrain, kVal, kSynth };

std::string to_string(Split split);
Split parse_split(const std::string& text);

struct ManifestEntry {
  std::string id;
  /// Relative to the manifest's directory.
  std::string path;
  Split split = Split::kTrain;
};

/// Index of volume files. Serialized as
/// {"seed", "created", "notes", "entries": [{"id", "path", "split"}]}.
struct DatasetManifest {
  std::uint64_t seed = 0;
  std::string created;
  std::string notes;
  std::vector<ManifestEntry> entries;

  /// Ids unique, splits disjoint by construction. Throws ConfigError.
  void validate() const;
  std::vector<ManifestEntry> entries_of(Split split) const;
  std::size_t count(Split split) const { return entries_of(split).size(); }
};

void save_manifest(const DatasetManifest& m, const std::filesystem::path& path);
/// Also checks that every entry's file exists (MissingDependencyError).
DatasetManifest load_manifest(const std::filesystem::path& path);

/// Loads the volumes of one split in manifest order; ids come from the
/// manifest.
std::vector<Volume> load_split(const DatasetManifest& m,
                               const std::filesystem::path& manifest_path,
                               Split split);

/// Writes each volume as <root>/<subdir>/<id>.vol and returns entries with
/// paths relative to root.
std::vector<ManifestEntry> write_volumes(const std::vector<Volume>& volumes,
                                         const std::filesystem::path& root,
                                         const std::string& subdir, Split split);

}  // namespace memaudit::volumes
