#pragma once

// Run configuration (sectioned key-value text) and per-directory run
// manifests recording the resolved config, input hashes and tool version.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "utxoshard/common.hpp"

namespace utxoshard {

std::string tool_version();

// Keys are "section.name"; values are kept as text and converted on read.
class RunConfig {
 public:
  static RunConfig parse(std::string_view text);
  static RunConfig load(const std::filesystem::path& path);
  // The configuration shipped with the tool (every default spelled out).
  static RunConfig defaults();

  bool contains(const std::string& key) const { return values_.count(key) > 0; }
  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
  // Applies every key from `other`, overriding existing values.
  void merge(const RunConfig& other);

  std::string get_string(const std::string& key, const std::string& fallback = "") const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback = 0) const;
  std::uint64_t get_uint(const std::string& key, std::uint64_t fallback = 0) const;
  double get_double(const std::string& key, double fallback = 0.0) const;
  bool get_bool(const std::string& key, bool fallback = false) const;
  std::vector<std::size_t> get_size_list(const std::string& key, std::vector<std::size_t> fallback = {}) const;

  // Sectioned text with keys sorted, so equal configs print identically.
  std::string to_ini() const;
  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

std::vector<std::size_t> parse_size_list(std::string_view text);

std::string file_sha256(const std::filesystem::path& path);

struct ArtifactRef {
  std::string role;
  std::string path;
  std::string sha256;
};

struct RunManifest {
  std::string command;
  std::string tool_version = utxoshard::tool_version();
  std::vector<ArtifactRef> inputs;
  std::vector<ArtifactRef> outputs;
  // Cross-artifact identifiers such as the vocabulary or model hash.
  std::map<std::string, std::string> hashes;

  void add_input(const std::string& role, const std::filesystem::path& path);
  void add_output(const std::string& role, const std::filesystem::path& path);
  std::string to_json() const;
};

// Writes `<dir>/<command>.config.ini` and `<dir>/<command>.manifest.json`.
void write_run_record(const std::filesystem::path& dir, const RunManifest& manifest, const RunConfig& resolved);

}  // namespace utxoshard
