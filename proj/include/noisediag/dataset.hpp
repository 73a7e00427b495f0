#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "noisediag/error.hpp"
#include "noisediag/npy.hpp"
#include "noisediag/tensor.hpp"

namespace noisediag {

/// One (prompt, seed) draw: the Gaussian latent z and its golden counterpart z_g.
struct SampleRecord {
  std::string prompt_id;
  std::string seed_id;
  LatentTensor z;
  LatentTensor z_g;

  SampleRecord() = default;
  SampleRecord(std::string prompt, std::string seed, LatentTensor z_in, LatentTensor zg_in)
      : prompt_id(std::move(prompt)), seed_id(std::move(seed)), z(std::move(z_in)), z_g(std::move(zg_in)) {
    require_same_shape(z, z_g, "record " + prompt_id + "/" + seed_id + ": z vs z_g");
  }
};

/// All seed records of one prompt, ordered by seed_id.
struct PromptGroup {
  std::string prompt_id;
  std::vector<SampleRecord> records;

  std::size_t n_seeds() const noexcept { return records.size(); }
};

struct ManifestEntry {
  std::string prompt_id;
  std::string seed_id;
  std::filesystem::path path_z;   // resolved against the manifest directory
  std::filesystem::path path_zg;
};

struct DatasetManifest {
  std::optional<Shape> declared_shape;
  std::vector<ManifestEntry> entries;
  std::filesystem::path base_dir;
};

/// Entries of one prompt, before any tensor is read.
struct ManifestGroup {
  std::string prompt_id;
  std::vector<ManifestEntry> entries;
};

inline DatasetManifest parse_manifest(const nlohmann::json& doc, const std::filesystem::path& base_dir,
                                      bool check_paths = true) {
  DatasetManifest manifest;
  manifest.base_dir = base_dir;
  try {
    if (!doc.is_object()) throw manifest_error("manifest must be a JSON object");
    if (doc.contains("declared_shape") && !doc["declared_shape"].is_null()) {
      const auto& ds = doc["declared_shape"];
      if (!ds.is_array() || ds.size() != 4) throw manifest_error("declared_shape must be [C, T, H, W] or null");
      Shape s{ds[0].get<std::size_t>(), ds[1].get<std::size_t>(), ds[2].get<std::size_t>(),
              ds[3].get<std::size_t>()};
      if (s.size() == 0) throw shape_error("declared_shape has a zero axis");
      manifest.declared_shape = s;
    }
    if (!doc.contains("entries") || !doc["entries"].is_array())
      throw manifest_error("manifest must contain an 'entries' array");
    std::set<std::pair<std::string, std::string>> seen;
    for (const auto& e : doc["entries"]) {
      ManifestEntry entry{e.at("prompt_id").get<std::string>(), e.at("seed_id").get<std::string>(),
                          base_dir / e.at("path_z").get<std::string>(),
                          base_dir / e.at("path_zg").get<std::string>()};
      if (!seen.emplace(entry.prompt_id, entry.seed_id).second)
        throw manifest_error("duplicate manifest entry (" + entry.prompt_id + ", " + entry.seed_id + ")");
      manifest.entries.push_back(std::move(entry));
    }
  } catch (const nlohmann::json::exception& e) {
    throw manifest_error(std::string("invalid manifest: ") + e.what());
  }

  if (check_paths) {
    std::string missing;
    for (const auto& e : manifest.entries) {
      for (const auto* p : {&e.path_z, &e.path_zg}) {
        if (!std::filesystem::exists(*p)) missing += "\n  (" + e.prompt_id + ", " + e.seed_id + "): " + p->string();
      }
    }
    if (!missing.empty()) throw manifest_error("manifest references missing files:" + missing);
  }
  return manifest;
}

inline DatasetManifest load_manifest(const std::filesystem::path& path) {
  const std::string text = read_file_bytes(path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw manifest_error(path.string() + ": " + e.what());
  }
  return parse_manifest(doc, path.parent_path());
}

/// Groups manifest entries by prompt. Prompts sort lexicographically, and
/// seeds within a prompt sort by seed_id.
inline std::vector<ManifestGroup> group_entries(const DatasetManifest& manifest) {
  std::map<std::string, std::vector<ManifestEntry>> by_prompt;
  for (const auto& e : manifest.entries) by_prompt[e.prompt_id].push_back(e);
  std::vector<ManifestGroup> groups;
  groups.reserve(by_prompt.size());
  for (auto& [prompt, entries] : by_prompt) {
    std::sort(entries.begin(), entries.end(),
              [](const ManifestEntry& a, const ManifestEntry& b) { return a.seed_id < b.seed_id; });
    groups.push_back({prompt, std::move(entries)});
  }
  return groups;
}

/// Lists (prompt, seed) pairs absent from a prompt although some other prompt
/// has that seed. Empty when the dataset is a complete grid.
inline std::vector<std::pair<std::string, std::string>> missing_pairs(const std::vector<ManifestGroup>& groups) {
  std::set<std::string> all_seeds;
  for (const auto& g : groups)
    for (const auto& e : g.entries) all_seeds.insert(e.seed_id);
  std::vector<std::pair<std::string, std::string>> missing;
  for (const auto& g : groups) {
    std::set<std::string> have;
    for (const auto& e : g.entries) have.insert(e.seed_id);
    for (const auto& s : all_seeds)
      if (!have.count(s)) missing.emplace_back(g.prompt_id, s);
  }
  return missing;
}

/// Reads the tensors of one group and checks they share a single shape (and
/// the declared shape, if any).
inline PromptGroup load_group(const ManifestGroup& group, const std::optional<Shape>& declared = std::nullopt) {
  PromptGroup out{group.prompt_id, {}};
  out.records.reserve(group.entries.size());
  for (const auto& e : group.entries) {
    out.records.emplace_back(e.prompt_id, e.seed_id, load_tensor(e.path_z), load_tensor(e.path_zg));
    const Shape& s = out.records.back().z.shape();
    if (declared && s != *declared)
      throw shape_error("record (" + e.prompt_id + ", " + e.seed_id + ") has shape " + s.to_string() +
                        ", manifest declares " + declared->to_string());
    if (s != out.records.front().z.shape())
      throw shape_error("prompt " + group.prompt_id + " mixes shapes " +
                        out.records.front().z.shape().to_string() + " and " + s.to_string());
  }
  return out;
}

/// Eagerly loads every group. Memory grows with the dataset; the CLI uses
/// group_entries + load_group to stream one prompt at a time instead.
inline std::vector<PromptGroup> group_by_prompt(const DatasetManifest& manifest) {
  std::vector<PromptGroup> groups;
  for (const auto& g : group_entries(manifest)) groups.push_back(load_group(g, manifest.declared_shape));
  return groups;
}

inline nlohmann::ordered_json manifest_to_json(const DatasetManifest& manifest) {
  nlohmann::ordered_json doc;
  if (manifest.declared_shape) {
    const auto d = manifest.declared_shape->dims();
    doc["declared_shape"] = {d[0], d[1], d[2], d[3]};
  } else {
    doc["declared_shape"] = nullptr;
  }
  doc["entries"] = nlohmann::ordered_json::array();
  for (const auto& e : manifest.entries) {
    doc["entries"].push_back({{"prompt_id", e.prompt_id},
                              {"seed_id", e.seed_id},
                              {"path_z", e.path_z.lexically_relative(manifest.base_dir).generic_string()},
                              {"path_zg", e.path_zg.lexically_relative(manifest.base_dir).generic_string()}});
  }
  return doc;
}

} // namespace noisediag
