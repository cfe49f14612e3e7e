#pragma once

// Replays a ledger-ordered transaction stream against an N-shard fleet of
// UTXO stores under an allocation policy, and measures how often a child
// transaction lands on (or near) the shard holding each parent UTXO.

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "utxoshard/embedder.hpp"
#include "utxoshard/features.hpp"
#include "utxoshard/shardspace.hpp"
#include "utxoshard/trainer.hpp"
#include "utxoshard/txcodec.hpp"

namespace utxoshard {

struct StoredUtxo {
  std::uint64_t amount = 0;
  std::uint64_t script_hash = 0;  // first 8 bytes of SHA-256 of the locking script
};

struct ShardState {
  ShardId id = 0;
  std::unordered_map<TxOutpoint, StoredUtxo, TxOutpointHasher> utxos;
  std::uint64_t received = 0;
  std::uint64_t local_hits = 0;
  std::uint64_t remote_served = 0;
};

// Where a transaction goes and where its outputs are stored.
struct Routing {
  // Storage shard for each output.
  std::vector<ShardId> placement;
  // Probe orderings used to look for parents; each is a permutation of all
  // shards and its first element is a shard the transaction is sent to.
  std::vector<std::vector<ShardId>> probes;

  std::vector<ShardId> routed() const;
};

enum class PolicyKind { Learned, RandOne, RandMany, HashTxid };
const char* policy_kind_name(PolicyKind kind);
PolicyKind parse_policy_kind(std::string_view name);

struct LearnedRouting {
  std::shared_ptr<const ShardModel> shards;
  std::shared_ptr<const EmbeddingModel> encoder;
  std::shared_ptr<const OpCodeVocabulary> vocab;
  std::shared_ptr<const FeatureScaler> scaler;  // may be null (raw features)
};

// Pure given its configuration: random policies derive every draw from
// (seed, txid), so replays are reproducible regardless of call order.
//
//   learned    each output stored on its nearest centroid; the transaction
//              is sent to the union of those shards and probes each
//              output's centroid ordering
//   rand-one   one random shard per transaction for routing and storage
//   rand-many  one random storage shard per output; the transaction itself
//              is validated on one random shard
//   hash       shard = txid mod n, probing proceeds cyclically
class AllocationPolicy {
 public:
  static AllocationPolicy learned(LearnedRouting routing);
  static AllocationPolicy rand_one(std::size_t n_shards, std::uint64_t seed);
  static AllocationPolicy rand_many(std::size_t n_shards, std::uint64_t seed);
  static AllocationPolicy hash_txid(std::size_t n_shards);

  PolicyKind kind() const { return kind_; }
  std::string name() const { return policy_kind_name(kind_); }
  std::size_t shard_count() const { return n_; }
  Routing route(const RawTransaction& tx) const;

 private:
  PolicyKind kind_ = PolicyKind::HashTxid;
  std::size_t n_ = 1;
  std::uint64_t seed_ = 0;
  LearnedRouting learned_;
};

struct Histogram {
  double start = 0.0;
  double width = 1.0;
  std::vector<std::uint64_t> counts;

  void add(double value);
  std::uint64_t total() const;
  std::string to_csv() const;
};

struct SummaryStats {
  double mean = 0.0;
  double median = 0.0;
  std::size_t count = 0;
};

struct AnchorHistogram {
  std::size_t pair_index = 0;
  Histogram cosine;
  SummaryStats stats;
};

struct Diagnostics {
  Histogram positive_cosine;
  Histogram positive_euclidean;
  SummaryStats positive_cosine_stats;
  SummaryStats positive_euclidean_stats;
  // One random non-positive partner per pair.
  SummaryStats nonpositive_cosine_stats;
  std::vector<AnchorHistogram> anchors;
  std::size_t zero_vectors = 0;
};

struct SimReport {
  std::string policy;
  std::size_t n_shards = 0;
  std::size_t k_max = 0;
  std::uint64_t transactions = 0;
  std::uint64_t measured_transactions = 0;
  std::uint64_t measured_inputs = 0;
  std::uint64_t orphan_inputs = 0;
  std::uint64_t coinbase_inputs = 0;
  // Number of measured inputs whose parent was found after probing d extra
  // shards (index d).
  std::vector<std::uint64_t> hit_depth;
  // accuracy_at_k[K] for K = 0..k_max.
  std::vector<double> accuracy_at_k;
  double messages_per_tx = 0.0;
  std::map<std::uint64_t, std::uint64_t> messages_histogram;
  std::vector<std::uint64_t> shard_load;
  double load_max_over_mean = 0.0;
  std::uint64_t utxos_created = 0;
  std::uint64_t utxos_spent = 0;
  std::uint64_t utxos_stored = 0;
  std::optional<Diagnostics> diagnostics;

  double accuracy(std::size_t k) const;
  std::string to_json() const;
  static SimReport from_json(std::string_view text);
};

struct SimOptions {
  std::size_t k_max = 9;
  // When set, only these transactions' inputs count toward the metrics;
  // every transaction still updates the stores.
  const std::unordered_set<Hash32, Hash32Hasher>* measure = nullptr;
};

// Throws PolicyMismatch when the policy was built for a different shard
// count.
SimReport simulate(const std::vector<RawTransaction>& txs, const AllocationPolicy& policy, std::size_t n_shards,
                   const SimOptions& options = {});

struct AccuracyRow {
  std::string policy;
  std::size_t n_shards = 0;
  std::size_t k = 0;
  double accuracy = 0.0;
};

std::vector<AccuracyRow> accuracy_curve(const std::vector<SimReport>& reports);
std::string accuracy_curve_csv(const std::vector<AccuracyRow>& rows);

// Cosine and Euclidean distributions over held-out positive pairs, plus
// non-positive cosine distributions for `sample_anchors` seeded anchors.
// Throws EmptyPairSet.
Diagnostics embedding_diagnostics(const std::vector<TrainingPair>& pairs, const Matrix& features,
                                  const EmbeddingModel& model, std::size_t sample_anchors = 6,
                                  std::uint64_t seed = 7);

}  // namespace utxoshard
