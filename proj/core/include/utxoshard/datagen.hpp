#pragma once

// Seeded synthetic transaction-graph generator. Communities differ only in
// attributes visible to the feature extractor (script templates, amount
// ranges, input/output arity), so the learned router has something real to
// find and the random baselines do not.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "utxoshard/common.hpp"
#include "utxoshard/txcodec.hpp"

namespace utxoshard {

enum class ScriptTemplate : std::uint8_t { P2PKH = 0, P2PK = 1, Locktime = 2, Custom = 3 };
const char* script_template_name(ScriptTemplate t);

struct CommunityProfile {
  // Weights for P2PKH, P2PK, locktime and custom-opcode locking scripts.
  std::array<double, 4> template_mix{0.25, 0.25, 0.25, 0.25};
  // Opcodes used by this community's custom scripts.
  std::vector<std::uint8_t> custom_opcodes;
  double amount_log10_center = 6.0;
  double amount_log10_sigma = 0.3;
  // Weight of i+1 inputs / outputs at index i.
  std::vector<double> input_count_weights{1.0};
  std::vector<double> output_count_weights{0.0, 1.0};
};

// Deterministic default profiles for n communities.
std::vector<CommunityProfile> default_profiles(std::size_t n_communities);

struct GenConfig {
  std::size_t n_communities = 10;
  std::size_t txs_per_community = 5000;
  double p_intra = 0.95;
  std::uint64_t seed = 1;
  // Root (coinbase) transactions minted per community up front.
  std::size_t roots_per_community = 20;
  std::size_t outputs_per_root = 5;
  // Correlation between a child's output log-amount and its parent's.
  double amount_memory = 0.6;
  // Empty means default_profiles(n_communities).
  std::vector<CommunityProfile> profiles;

  // Throws BadConfig on out-of-range values or when two communities have
  // indistinguishable profiles.
  void validate() const;
  std::vector<CommunityProfile> resolved_profiles() const;
};

// One consumed outpoint as recorded by the generator itself.
struct SpendRecord {
  TxOutpoint parent;
  Hash32 child;
};

struct RootEvent {
  std::size_t community = 0;
  std::size_t position = 0;   // index in the stream
  bool exhausted = false;     // minted because a pool ran dry
};

struct GeneratedStream {
  std::vector<RawTransaction> txs;   // ledger order, roots included
  std::vector<std::uint32_t> labels; // community of txs[i]
  std::vector<SpendRecord> spends;
  std::vector<RootEvent> roots;

  std::size_t exhausted_count() const;
  // Sidecar: one {"txid":..., "community":...} object per line.
  std::string labels_jsonl() const;
};

GeneratedStream generate(const GenConfig& config);

}  // namespace utxoshard
