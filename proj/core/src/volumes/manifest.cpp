// Copyright 2026 The memaudit Authors
// SPDX-License-Identifier: Apache-2.0

#include "memaudit/volumes/manifest.hpp"

#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "memaudit/errors.hpp"
#include "memaudit/io.hpp"

namespace memaudit::volumes {

using nlohmann::json;

std::string to_string(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kSynth: return "synth";
  }
  return "?";
}

Split parse_split(const std::string& text) {
  if (text == "train") return Split::kTrain;
  if (text == "val") return Split::kVal;
  if (text == "synth") return Split::kSynth;
  throw ConfigError("unknown split '" + text + "'");
}

void DatasetManifest::validate() const {
  std::set<std::string> ids;
  for (const auto& e : entries) {
    if (e.id.empty()) throw ConfigError("manifest entry with empty id");
    if (!ids.insert(e.id).second) {
      throw ConfigError("manifest: duplicate id '" + e.id + "'");
    }
  }
}

std::vector<ManifestEntry> DatasetManifest::entries_of(Split split) const {
  std::vector<ManifestEntry> out;
  for (const auto& e : entries) {
    if (e.split == split) out.push_back(e);
  }
  return out;
}

void save_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
  m.validate();
  json j;
  j["seed"] = m.seed;
  j["created"] = m.created;
  j["notes"] = m.notes;
  j["entries"] = json::array();
  for (const auto& e : m.entries) {
    j["entries"].push_back({{"id", e.id}, {"path", e.path}, {"split", to_string(e.split)}});
  }
  write_text_atomic(path, j.dump(2) + "\n");
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  const json j = read_json(path);
  DatasetManifest m;
  try {
    m.seed = j.at("seed").get<std::uint64_t>();
    m.created = j.value("created", "");
    m.notes = j.value("notes", "");
    for (const auto& e : j.at("entries")) {
      m.entries.push_back({e.at("id").get<std::string>(), e.at("path").get<std::string>(),
                           parse_split(e.at("split").get<std::string>())});
    }
  } catch (const json::exception& ex) {
    throw ConfigError("manifest " + path.string() + ": " + ex.what());
  }
  m.validate();
  const auto dir = path.parent_path();
  for (const auto& e : m.entries) {
    if (!std::filesystem::exists(dir / e.path)) {
      throw MissingDependencyError("manifest " + path.string() + " references missing file " +
                                   (dir / e.path).string());
    }
  }
  return m;
}

std::vector<Volume> load_split(const DatasetManifest& m,
                               const std::filesystem::path& manifest_path, Split split) {
  std::vector<Volume> out;
  const auto dir = manifest_path.parent_path();
  for (const auto& e : m.entries_of(split)) {
    Volume v = load_volume(dir / e.path);
    v.id = e.id;
    out.push_back(std::move(v));
  }
  return out;
}

std::vector<ManifestEntry> write_volumes(const std::vector<Volume>& volumes,
                                         const std::filesystem::path& root,
                                         const std::string& subdir, Split split) {
  std::filesystem::create_directories(root / subdir);
  std::vector<ManifestEntry> entries;
  for (const auto& v : volumes) {
    const std::string rel = (std::filesystem::path(subdir) / (v.id + ".vol")).generic_string();
    save_volume(v, root / rel);
    entries.push_back({v.id, rel, split});
  }
  return entries;
}

}  // namespace memaudit::volumes
