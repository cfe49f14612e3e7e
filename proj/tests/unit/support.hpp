#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "utxoshard/txcodec.hpp"

namespace testsupport {

inline std::string fixture(const std::string& name) { return std::string(UTXOSHARD_FIXTURE_DIR) + "/" + name; }

inline std::vector<std::string> fixture_lines(const std::string& name) {
  std::ifstream in(fixture(name));
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);)
    if (!line.empty()) lines.push_back(line);
  return lines;
}

inline nlohmann::json fixture_json(const std::string& name) {
  std::ifstream in(fixture(name));
  return nlohmann::json::parse(in);
}

inline std::vector<utxoshard::RawTransaction> fixture_corpus() {
  std::vector<utxoshard::RawTransaction> txs;
  for (const auto& line : fixture_lines("corpus.hex")) txs.push_back(utxoshard::decode_transaction_hex(line));
  return txs;
}

// Fresh scratch directory under the build tree.
inline std::string scratch_dir(const std::string& name) {
  std::string dir = std::string(UTXOSHARD_SCRATCH_DIR) + "/" + name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testsupport
