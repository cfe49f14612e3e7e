#pragma once

// Shard assignment over the embedding space: k-means centroids, nearest
// centroid assignment and nearest-first probe orderings.

#include <cstdint>
#include <string>
#include <vector>

#include "utxoshard/common.hpp"
#include "utxoshard/embedder.hpp"
#include "utxoshard/features.hpp"

namespace utxoshard {

using ShardId = std::uint32_t;

struct KMeansOptions {
  std::size_t max_iterations = 100;
  double tolerance = 1e-6;  // relative inertia change
  // Independent k-means++ restarts; the lowest final inertia wins.
  std::size_t restarts = 4;
  // Fit on at most this many points (uniform seeded subsample); 0 = all.
  std::size_t max_points = 0;
};

class ShardModel {
 public:
  ShardModel() = default;
  explicit ShardModel(Matrix centroids);

  std::size_t shard_count() const { return centroids_.rows(); }
  std::size_t dimension() const { return centroids_.cols(); }
  const Matrix& centroids() const { return centroids_; }

  // Inertia after each assignment step of the selected run.
  const std::vector<double>& inertia_history() const { return inertia_; }
  std::string model_hash;   // embedding model the centroids were fitted for
  std::string dataset_id;

  ShardId assign(std::span<const double> embedding) const;
  // All shard ids by ascending centroid distance, ties by id.
  std::vector<ShardId> probe_order(std::span<const double> embedding) const;

  bool operator==(const ShardModel&) const = default;

 private:
  friend ShardModel fit_kmeans(const Matrix&, std::size_t, std::uint64_t, const KMeansOptions&);
  friend ShardModel load_shard_model(ByteView);
  Matrix centroids_;
  std::vector<double> inertia_;
};

// k-means++ seeding, Lloyd iterations; an empty cluster is reseeded to the
// point farthest from its assigned centroid. Throws TooFewPoints when fewer
// than n distinct vectors exist.
ShardModel fit_kmeans(const Matrix& embeddings, std::size_t n, std::uint64_t seed, const KMeansOptions& options = {});

double inertia(const ShardModel& model, const Matrix& points);

struct RouteDecision {
  std::vector<ShardId> primary;                  // per outpoint
  std::vector<std::vector<ShardId>> probe;       // per outpoint, all shards
  std::vector<ShardId> shard_set;                // sorted, unique
};

RouteDecision route_transaction(const ShardModel& shards, const EmbeddingModel& encoder, const RawTransaction& tx,
                                const OpCodeVocabulary& vocab, const FeatureScaler* scaler);

// Shard model file: [magic "UXSM"][u32 version][u32 header length]
// [JSON header: n, k, model_hash, dataset_id, inertia][float64 centroids].
Bytes save_shard_model(const ShardModel& model);
ShardModel load_shard_model(ByteView bytes);

}  // namespace utxoshard
