#include "utxoshard/shardspace.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <random>
#include <set>

#include <json.hpp>

namespace utxoshard {

namespace {

constexpr std::array<std::uint8_t, 4> kShardMagic = {'U', 'X', 'S', 'M'};
constexpr std::uint32_t kShardVersion = 1;

struct Nearest {
  ShardId id = 0;
  double sq = 0.0;
};

Nearest nearest_centroid(const Matrix& centroids, std::span<const double> x) {
  Nearest best{0, std::numeric_limits<double>::infinity()};
  for (std::size_t c = 0; c < centroids.rows(); ++c) {
    const double d = squared_euclidean(centroids.row(c), x);
    if (d < best.sq) best = {static_cast<ShardId>(c), d};
  }
  return best;
}

bool has_distinct_rows(const Matrix& points, std::size_t n) {
  std::set<std::vector<double>> seen;
  for (std::size_t r = 0; r < points.rows() && seen.size() < n; ++r)
    seen.emplace(points.row(r).begin(), points.row(r).end());
  return seen.size() >= n;
}

Matrix kmeans_plus_plus(const Matrix& points, std::size_t n, std::mt19937_64& rng) {
  const std::size_t rows = points.rows();
  Matrix centroids(n, points.cols());
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::size_t first = std::min(rows - 1, static_cast<std::size_t>(unit(rng) * static_cast<double>(rows)));
  std::copy(points.row(first).begin(), points.row(first).end(), centroids.row(0).begin());

  std::vector<double> d2(rows);
  for (std::size_t r = 0; r < rows; ++r) d2[r] = squared_euclidean(points.row(r), centroids.row(0));
  for (std::size_t c = 1; c < n; ++c) {
    const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
    const double target = unit(rng) * total;
    double acc = 0.0;
    std::size_t pick = rows;
    for (std::size_t r = 0; r < rows; ++r) {
      if (d2[r] <= 0.0) continue;
      acc += d2[r];
      pick = r;
      if (acc > target) break;
    }
    std::copy(points.row(pick).begin(), points.row(pick).end(), centroids.row(c).begin());
    for (std::size_t r = 0; r < rows; ++r)
      d2[r] = std::min(d2[r], squared_euclidean(points.row(r), centroids.row(c)));
  }
  return centroids;
}

struct LloydRun {
  Matrix centroids;
  std::vector<double> inertia;
};

LloydRun lloyd(const Matrix& points, Matrix centroids, const KMeansOptions& options) {
  const std::size_t rows = points.rows();
  const std::size_t n = centroids.rows();
  const std::size_t k = points.cols();
  std::vector<Nearest> assignment(rows);
  LloydRun run;

  for (std::size_t iter = 0; iter < options.max_iterations; ++iter) {
    double total = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
      assignment[r] = nearest_centroid(centroids, points.row(r));
      total += assignment[r].sq;
    }
    if (!run.inertia.empty() && total > run.inertia.back()) {
      // Rounding pushed inertia up; the previous centroids are final.
      break;
    }
    run.centroids = centroids;
    run.inertia.push_back(total);
    if (run.inertia.size() >= 2) {
      const double prev = run.inertia[run.inertia.size() - 2];
      if (prev <= 0.0 || (prev - total) / prev < options.tolerance) break;
    }

    Matrix sums(n, k);
    std::vector<std::size_t> counts(n, 0);
    for (std::size_t r = 0; r < rows; ++r) {
      auto s = sums.row(assignment[r].id);
      auto p = points.row(r);
      for (std::size_t j = 0; j < k; ++j) s[j] += p[j];
      ++counts[assignment[r].id];
    }
    std::vector<char> taken(rows, 0);
    for (std::size_t c = 0; c < n; ++c) {
      if (counts[c] > 0) {
        for (std::size_t j = 0; j < k; ++j) centroids(c, j) = sums(c, j) / static_cast<double>(counts[c]);
        continue;
      }
      std::size_t far = rows;
      for (std::size_t r = 0; r < rows; ++r)
        if (!taken[r] && (far == rows || assignment[r].sq > assignment[far].sq)) far = r;
      taken[far] = 1;
      std::copy(points.row(far).begin(), points.row(far).end(), centroids.row(c).begin());
    }
  }
  return run;
}

}  // namespace

ShardModel::ShardModel(Matrix centroids) : centroids_(std::move(centroids)) {
  if (centroids_.rows() == 0) throw Error(Errc::BadSpec, "shard model needs at least one centroid");
}

ShardId ShardModel::assign(std::span<const double> embedding) const {
  if (embedding.size() != dimension())
    throw Error(Errc::DimensionMismatch, "embedding of dimension " + std::to_string(embedding.size()) +
                                             ", centroids have " + std::to_string(dimension()));
  return nearest_centroid(centroids_, embedding).id;
}

std::vector<ShardId> ShardModel::probe_order(std::span<const double> embedding) const {
  if (embedding.size() != dimension()) throw Error(Errc::DimensionMismatch, "probe embedding dimension");
  std::vector<double> dist(shard_count());
  for (std::size_t c = 0; c < shard_count(); ++c) dist[c] = squared_euclidean(centroids_.row(c), embedding);
  std::vector<ShardId> order(shard_count());
  std::iota(order.begin(), order.end(), ShardId{0});
  std::stable_sort(order.begin(), order.end(), [&](ShardId a, ShardId b) { return dist[a] < dist[b]; });
  return order;
}

ShardModel fit_kmeans(const Matrix& embeddings, std::size_t n, std::uint64_t seed, const KMeansOptions& options) {
  if (n == 0) throw Error(Errc::BadSpec, "shard count must be positive");
  const Matrix* points = &embeddings;
  Matrix sample;
  if (options.max_points && embeddings.rows() > options.max_points) {
    std::vector<std::size_t> idx(embeddings.rows());
    std::iota(idx.begin(), idx.end(), 0);
    std::mt19937_64 rng(seed ^ 0x73616d706c65ULL);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(options.max_points);
    std::sort(idx.begin(), idx.end());
    sample = Matrix(idx.size(), embeddings.cols());
    for (std::size_t i = 0; i < idx.size(); ++i)
      std::copy(embeddings.row(idx[i]).begin(), embeddings.row(idx[i]).end(), sample.row(i).begin());
    points = &sample;
  }
  if (points->rows() < n || !has_distinct_rows(*points, n))
    throw Error(Errc::TooFewPoints, "need at least " + std::to_string(n) + " distinct embeddings");

  ShardModel best;
  double best_inertia = std::numeric_limits<double>::infinity();
  const std::size_t restarts = std::max<std::size_t>(1, options.restarts);
  for (std::size_t r = 0; r < restarts; ++r) {
    std::mt19937_64 rng(seed + 0x9e3779b97f4a7c15ULL * r);
    auto run = lloyd(*points, kmeans_plus_plus(*points, n, rng), options);
    if (run.inertia.back() < best_inertia) {
      best_inertia = run.inertia.back();
      best.centroids_ = std::move(run.centroids);
      best.inertia_ = std::move(run.inertia);
    }
  }
  return best;
}

double inertia(const ShardModel& model, const Matrix& points) {
  double total = 0.0;
  for (std::size_t r = 0; r < points.rows(); ++r) total += nearest_centroid(model.centroids(), points.row(r)).sq;
  return total;
}

RouteDecision route_transaction(const ShardModel& shards, const EmbeddingModel& encoder, const RawTransaction& tx,
                                const OpCodeVocabulary& vocab, const FeatureScaler* scaler) {
  if (tx.outputs.empty()) throw Error(Errc::EmptyInputsOrOutputs, "cannot route a transaction without outputs");
  RouteDecision d;
  for (std::uint32_t v = 0; v < tx.outputs.size(); ++v) {
    auto fv = featurize_outpoint(tx, v, vocab, scaler);
    auto emb = encoder.forward(fv.values);
    d.probe.push_back(shards.probe_order(emb.h));
    d.primary.push_back(d.probe.back().front());
  }
  d.shard_set = d.primary;
  std::sort(d.shard_set.begin(), d.shard_set.end());
  d.shard_set.erase(std::unique(d.shard_set.begin(), d.shard_set.end()), d.shard_set.end());
  return d;
}

Bytes save_shard_model(const ShardModel& model) {
  nlohmann::ordered_json header;
  header["kind"] = "shard_model";
  header["n"] = model.shard_count();
  header["k"] = model.dimension();
  header["model_hash"] = model.model_hash;
  header["dataset_id"] = model.dataset_id;
  header["inertia"] = model.inertia_history();
  const std::string text = header.dump();
  Bytes out(kShardMagic.begin(), kShardMagic.end());
  put_u32(out, kShardVersion);
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  for (double v : model.centroids().data()) put_f64(out, v);
  return out;
}

ShardModel load_shard_model(ByteView bytes) {
  if (bytes.size() < 12 || !std::equal(kShardMagic.begin(), kShardMagic.end(), bytes.begin()))
    throw Error(Errc::UnsupportedFormat, "not a shard model file");
  if (get_u32(bytes, 4) != kShardVersion) throw Error(Errc::UnsupportedFormat, "unknown shard model version");
  const std::size_t header_len = get_u32(bytes, 8);
  if (12 + header_len > bytes.size()) throw Error(Errc::Truncated, "shard model header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 12, bytes.begin() + 12 + header_len);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::BadRecord, e.what());
  }
  const std::size_t n = header.at("n").get<std::size_t>();
  const std::size_t k = header.at("k").get<std::size_t>();
  const std::size_t body = 12 + header_len;
  if (bytes.size() != body + n * k * 8) throw Error(Errc::Truncated, "centroid blob");
  Matrix c(n, k);
  for (std::size_t i = 0; i < n * k; ++i) c.data()[i] = get_f64(bytes, body + 8 * i);
  ShardModel model(std::move(c));
  model.model_hash = header.value("model_hash", "");
  model.dataset_id = header.value("dataset_id", "");
  model.inertia_ = header.value("inertia", std::vector<double>{});
  return model;
}

}  // namespace utxoshard
