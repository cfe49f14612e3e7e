#pragma once

// Contrastive training of the embedding model on parent/child spending
// pairs: pair extraction, dataset split, online negative mining and the
// margin triplet loss optimized with Adam.

#include <functional>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "utxoshard/embedder.hpp"
#include "utxoshard/features.hpp"
#include "utxoshard/txcodec.hpp"

namespace utxoshard {

// A spent parent outpoint linked to the outputs of the child that spends it.
struct SpendingPair {
  TxOutpoint parent;
  Hash32 child_txid;
  std::vector<std::uint32_t> child_vouts;

  bool operator==(const SpendingPair&) const = default;
};

struct PairOptions {
  // Child outpoints kept per pair; larger children are subsampled.
  std::size_t max_children = 8;
  std::uint64_t seed = 0;
};

struct PairSet {
  std::vector<SpendingPair> pairs;
  // Spent outpoint -> spending transaction.
  std::unordered_map<TxOutpoint, Hash32, TxOutpointHasher> spent_by;
  std::size_t orphan_inputs = 0;
  std::size_t coinbase_inputs = 0;
};

// Indexes every txid first, so children may precede their parents in the
// stream. Parent lookup happens here and nowhere at inference time.
PairSet build_pairs(const std::vector<RawTransaction>& txs, PairOptions options = {});

struct DatasetSplit {
  std::vector<SpendingPair> train;
  std::vector<SpendingPair> test;
};

// Splits by child transaction so all pairs of one child land on one side.
DatasetSplit split_dataset(const std::vector<SpendingPair>& pairs, double fraction, std::uint64_t seed);

// Pair resolved to rows of a FeatureTable.
struct TrainingPair {
  std::size_t parent_row = 0;
  std::vector<std::size_t> child_rows;
};

// Pairs whose outpoints are missing from the table are dropped.
std::vector<TrainingPair> bind_pairs(const std::vector<SpendingPair>& pairs, const FeatureTable& table);

// ---------------------------------------------------------------------------

double triplet_loss(std::span<const double> anchor, std::span<const double> positive,
                    std::span<const double> negative, double margin);

enum class NegativeClass { Easy, SemiHard, Hard };
const char* negative_class_name(NegativeClass c);

// Hard: d_an < d_ap. SemiHard: d_ap <= d_an < d_ap + m. Easy otherwise.
NegativeClass classify_negative(double d_ap, double d_an, double margin);

enum class MiningMode { SemiHard, Hard, Curriculum };
const char* mining_mode_name(MiningMode mode);
MiningMode parse_mining_mode(std::string_view name);

// Row structure of a training batch. Each pair contributes one anchor row
// (the parent) followed by its positive rows (the child outpoints).
struct BatchLayout {
  std::vector<std::size_t> pair_of_row;
  // Identity of the outpoint behind each row; an outpoint shared by two
  // pairs is never a negative for either.
  std::vector<std::size_t> source_of_row;
  std::vector<std::size_t> anchor_rows;
  std::vector<std::vector<std::size_t>> positive_rows;

  std::size_t rows() const { return pair_of_row.size(); }
  std::size_t pairs() const { return anchor_rows.size(); }
};

BatchLayout make_batch_layout(const std::vector<TrainingPair>& pairs, std::span<const std::size_t> batch);

struct Triplet {
  std::size_t anchor = 0;
  std::size_t positive = 0;
  std::size_t negative = 0;
  double d_ap = 0.0;
  double d_an = 0.0;
  NegativeClass negative_class = NegativeClass::Easy;

  bool operator==(const Triplet&) const = default;
};

// One triplet per (anchor, positive). SemiHard mode: the closest semi-hard
// negative, else the farthest hard negative, else none. Hard mode: the
// closest candidate. Ties resolve to the lowest row index. Throws
// BatchTooSmall with fewer than two pairs. `mode` must not be Curriculum.
std::vector<Triplet> mine_batch(const Matrix& embeddings, const BatchLayout& layout, MiningMode mode,
                                double margin);

struct TripletBatchLoss {
  double loss = 0.0;
  std::size_t active = 0;
  // d(loss)/d(embedding row), same shape as the embeddings.
  Matrix grad;
};

// Mean triplet loss over `triplets` and its gradient w.r.t. the embeddings.
TripletBatchLoss triplet_batch_loss(const Matrix& embeddings, const std::vector<Triplet>& triplets, double margin);

// ---------------------------------------------------------------------------

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t step = 0;
  bool operator==(const AdamState&) const = default;
};

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, const AdamConfig& config);

struct TrainConfig {
  double margin = 1.0;
  std::size_t batch_pairs = 256;
  std::size_t epochs = 10;
  AdamConfig adam;
  MiningMode mining = MiningMode::Curriculum;
  std::size_t plateau_window = 5;
  double plateau_threshold = 0.01;
  std::uint64_t seed = 42;
  double split_fraction = 0.8;
  std::size_t max_children = 8;
  std::vector<std::size_t> hidden_layers = {256, 128};
  std::size_t embedding_dim = 32;
  bool normalize_output = false;

  void validate() const;
};

struct EpochLog {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double active_fraction = 0.0;
  std::size_t triplets = 0;
  MiningMode mode = MiningMode::SemiHard;
  // Set on the epoch after which the curriculum moved to hard negatives.
  bool switched_to_hard = false;
};

std::string epoch_log_json(const EpochLog& log);

struct TrainResult {
  EmbeddingModel model;
  AdamState optimizer;
  std::vector<EpochLog> log;
};

class DivergedError : public Error {
 public:
  DivergedError(const std::string& what, EmbeddingModel last_good)
      : Error(Errc::Diverged, what), last_good_(std::move(last_good)) {}
  const EmbeddingModel& last_good() const { return last_good_; }

 private:
  EmbeddingModel last_good_;
};

using EpochCallback = std::function<void(const EpochLog&, const EmbeddingModel&)>;

// Trains from a fresh He-uniform init (seeded by config.seed) unless
// `initial` is given. Throws EmptyPairSet before the first epoch when
// `pairs` is empty and DivergedError on a non-finite loss.
TrainResult train(const std::vector<TrainingPair>& pairs, const Matrix& features, const TrainConfig& config,
                  const EpochCallback& on_epoch = {}, const EmbeddingModel* initial = nullptr);

// Fraction of mined triplets (hardest negative per anchor-positive) that
// satisfy d(a,p) + m < d(a,n), over fixed-seed batches of `batch_pairs`.
double margin_satisfaction(const EmbeddingModel& model, const std::vector<TrainingPair>& pairs,
                           const Matrix& features, double margin, std::size_t batch_pairs, std::uint64_t seed);

// Checkpoint: model file followed by [magic "UXOS"][u64 step][m][v].
Bytes save_checkpoint(const EmbeddingModel& model, const AdamState& state);
std::pair<EmbeddingModel, AdamState> load_checkpoint(ByteView bytes);

}  // namespace utxoshard
