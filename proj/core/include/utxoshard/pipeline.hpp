#pragma once

// In-process composition of the stages: generate, featurize, pair, train,
// cluster and simulate. The CLI runs the same steps one file at a time.

#include <memory>
#include <unordered_set>
#include <vector>

#include "utxoshard/artifacts.hpp"
#include "utxoshard/datagen.hpp"
#include "utxoshard/embedder.hpp"
#include "utxoshard/features.hpp"
#include "utxoshard/router_sim.hpp"
#include "utxoshard/shardspace.hpp"
#include "utxoshard/trainer.hpp"

namespace utxoshard {

// Typed views of the [gen], [train] and [cluster] sections.
GenConfig gen_config_from(const RunConfig& cfg);
TrainConfig train_config_from(const RunConfig& cfg);
KMeansOptions kmeans_options_from(const RunConfig& cfg);

// Identifier of a transaction stream: SHA-256 over the concatenated txids.
std::string stream_id(const std::vector<RawTransaction>& txs);

struct PreparedData {
  OpCodeVocabulary vocab;
  FeatureScaler scaler;
  FeatureTable table;  // scaled features of every outpoint
  PairSet pairs;
  DatasetSplit split;
  std::vector<TrainingPair> train_pairs;
  std::vector<TrainingPair> test_pairs;
  // Children of held-out pairs: the transactions whose inputs are measured.
  std::unordered_set<Hash32, Hash32Hasher> held_out_children;
};

PreparedData prepare_data(const std::vector<RawTransaction>& txs, std::size_t vocab_size, const TrainConfig& train);

// Embeds every row of `features`.
Matrix embed_rows(const EmbeddingModel& model, const Matrix& features);

AllocationPolicy make_policy(PolicyKind kind, std::size_t n_shards, std::uint64_t seed,
                             const LearnedRouting* learned = nullptr);

}  // namespace utxoshard
