#pragma once

// Run directories and their manifests.

#include <chrono>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

namespace fei {

inline constexpr std::string_view kSpecVersion = "1.0";

/// SHA-1 of "blob <size>\0" + content, as git hashes file contents.
std::string git_blob_hash(std::string_view content);
std::string git_blob_hash_file(const std::filesystem::path& path);

/// Compact UTC stamp for directory names, e.g. 20261019T153000Z.
std::string utc_stamp(std::chrono::system_clock::time_point t);
/// ISO-8601 UTC with milliseconds.
std::string iso_utc(std::chrono::system_clock::time_point t);

/// Creates `<root>/<command>-<utc-stamp>-<hash[0:8]>`, adding a numeric suffix
/// when that name is taken.
std::filesystem::path create_run_directory(const std::filesystem::path& root, std::string_view command,
                                           std::string_view config_hash);

struct RunManifest {
  std::string command;
  nlohmann::json config;  // resolved, with every default materialized
  std::uint64_t seed = 0;
  std::chrono::system_clock::time_point started;
  std::chrono::system_clock::time_point finished;
  std::map<std::string, std::string> artifacts;  // role -> path
  nlohmann::json extra = nlohmann::json::object();
  std::string status = "ok";

  /// Hash of the canonical (sorted-key, compact) config JSON.
  std::string config_hash() const;
  nlohmann::json to_json() const;
};

/// Writes manifest.json into `dir`; refuses to replace an existing manifest.
std::filesystem::path write_manifest(const RunManifest& m, const std::filesystem::path& dir);

}  // namespace fei
