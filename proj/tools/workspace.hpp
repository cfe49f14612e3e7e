#pragma once

// File layout of a pipeline output directory and the small metadata files
// that tie artifacts together.

#include <filesystem>
#include <string>
#include <unordered_set>
#include <vector>

#include "utxoshard/features.hpp"
#include "utxoshard/router_sim.hpp"
#include "utxoshard/tx_stream.hpp"

namespace utxoshard::cli {

namespace fs = std::filesystem;

struct Workspace {
  fs::path dir;

  fs::path stream(TxFormat format) const { return dir / (std::string("stream") + tx_format_extension(format)); }
  // First existing stream file, trying bin, hex, jsonl in turn.
  fs::path find_stream() const;
  fs::path labels() const { return dir / "labels.jsonl"; }
  fs::path spends() const { return dir / "spends.jsonl"; }
  fs::path vocab() const { return dir / "vocab.json"; }
  fs::path scaler() const { return dir / "scaler.json"; }
  fs::path features() const { return dir / "features.bin"; }
  fs::path outpoints() const { return dir / "outpoints.bin"; }
  fs::path features_meta() const { return dir / "features.meta.json"; }
  fs::path model() const { return dir / "model.bin"; }
  fs::path checkpoint() const { return dir / "checkpoint.bin"; }
  fs::path train_log() const { return dir / "train_log.jsonl"; }
  fs::path held_out() const { return dir / "heldout_children.txt"; }
  fs::path shard_model(std::size_t n) const { return dir / "shards" / ("n" + std::to_string(n) + ".bin"); }
  fs::path report(const std::string& policy, std::size_t n) const {
    return dir / "reports" / (policy + "_n" + std::to_string(n) + ".json");
  }
  fs::path eval_report(std::size_t n) const { return dir / "eval" / ("learned_n" + std::to_string(n) + ".json"); }
};

struct FeatureMeta {
  std::size_t dimension = 0;
  std::size_t rows = 0;
  std::string vocab_hash;
  std::string scaler_hash;
  std::string dataset_id;

  std::string to_json() const;
  static FeatureMeta from_json(std::string_view text);
};

std::string read_text(const fs::path& path);

Bytes encode_outpoints(const std::vector<TxOutpoint>& outpoints);
std::vector<TxOutpoint> decode_outpoints(ByteView bytes);

void write_hash_list(const fs::path& path, const std::unordered_set<Hash32, Hash32Hasher>& hashes);
std::unordered_set<Hash32, Hash32Hasher> read_hash_list(const fs::path& path);

// Throws HashMismatch naming both values when they differ.
void require_same_hash(const std::string& what, const std::string& expected, const std::string& actual);

// Fixed-width summary table, one row per report.
std::string summary_table(const std::vector<SimReport>& reports);

}  // namespace utxoshard::cli
