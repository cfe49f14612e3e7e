#include "utxoshard/pipeline.hpp"

namespace utxoshard {

GenConfig gen_config_from(const RunConfig& cfg) {
  GenConfig g;
  g.n_communities = cfg.get_uint("gen.communities", g.n_communities);
  g.txs_per_community = cfg.get_uint("gen.txs_per_community", g.txs_per_community);
  g.p_intra = cfg.get_double("gen.p_intra", g.p_intra);
  g.roots_per_community = cfg.get_uint("gen.roots_per_community", g.roots_per_community);
  g.outputs_per_root = cfg.get_uint("gen.outputs_per_root", g.outputs_per_root);
  g.amount_memory = cfg.get_double("gen.amount_memory", g.amount_memory);
  g.seed = cfg.get_uint("gen.seed", g.seed);
  return g;
}

TrainConfig train_config_from(const RunConfig& cfg) {
  TrainConfig t;
  t.seed = cfg.get_uint("train.seed", t.seed);
  t.margin = cfg.get_double("train.margin", t.margin);
  t.batch_pairs = cfg.get_uint("train.batch_pairs", t.batch_pairs);
  t.epochs = cfg.get_uint("train.epochs", t.epochs);
  if (cfg.contains("train.mining")) t.mining = parse_mining_mode(cfg.get_string("train.mining"));
  t.plateau_window = cfg.get_uint("train.plateau_window", t.plateau_window);
  t.plateau_threshold = cfg.get_double("train.plateau_threshold", t.plateau_threshold);
  t.adam.learning_rate = cfg.get_double("train.learning_rate", t.adam.learning_rate);
  t.split_fraction = cfg.get_double("train.split", t.split_fraction);
  t.max_children = cfg.get_uint("train.max_children", t.max_children);
  t.hidden_layers = cfg.get_size_list("train.hidden", t.hidden_layers);
  t.embedding_dim = cfg.get_uint("train.embedding", t.embedding_dim);
  t.normalize_output = cfg.get_bool("train.normalize", t.normalize_output);
  return t;
}

KMeansOptions kmeans_options_from(const RunConfig& cfg) {
  KMeansOptions k;
  k.restarts = cfg.get_uint("cluster.restarts", k.restarts);
  k.max_points = cfg.get_uint("cluster.max_points", k.max_points);
  k.max_iterations = cfg.get_uint("cluster.max_iterations", k.max_iterations);
  k.tolerance = cfg.get_double("cluster.tolerance", k.tolerance);
  return k;
}

std::string stream_id(const std::vector<RawTransaction>& txs) {
  Bytes all;
  all.reserve(txs.size() * 32);
  for (const auto& tx : txs) all.insert(all.end(), tx.txid.bytes.begin(), tx.txid.bytes.end());
  return sha256_hex(all);
}

PreparedData prepare_data(const std::vector<RawTransaction>& txs, std::size_t vocab_size, const TrainConfig& train) {
  PreparedData d;
  const std::string id = stream_id(txs);
  d.vocab = build_vocabulary(txs, vocab_size, id);
  const FeatureTable raw = FeatureTable::build(txs, d.vocab);
  d.scaler = fit_scaler(raw.matrix(), FeatureLayout{d.vocab.bag_size()}, id);
  Matrix scaled = raw.matrix();
  for (std::size_t r = 0; r < scaled.rows(); ++r) d.scaler.transform(scaled.row(r));
  d.table = FeatureTable(std::move(scaled), raw.outpoints());

  d.pairs = build_pairs(txs, PairOptions{train.max_children, train.seed});
  d.split = split_dataset(d.pairs.pairs, train.split_fraction, train.seed);
  d.train_pairs = bind_pairs(d.split.train, d.table);
  d.test_pairs = bind_pairs(d.split.test, d.table);
  for (const auto& p : d.split.test) d.held_out_children.insert(p.child_txid);
  return d;
}

Matrix embed_rows(const EmbeddingModel& model, const Matrix& features) {
  constexpr std::size_t kChunk = 4096;
  Matrix out(features.rows(), model.output_dim());
  for (std::size_t start = 0; start < features.rows(); start += kChunk) {
    const std::size_t end = std::min(features.rows(), start + kChunk);
    Matrix chunk(end - start, features.cols());
    const auto first = features.data().begin() + static_cast<std::ptrdiff_t>(start * features.cols());
    std::copy(first, first + static_cast<std::ptrdiff_t>(chunk.data().size()), chunk.data().begin());
    const Matrix e = model.forward(chunk);
    std::copy(e.data().begin(), e.data().end(),
              out.data().begin() + static_cast<std::ptrdiff_t>(start * out.cols()));
  }
  return out;
}

AllocationPolicy make_policy(PolicyKind kind, std::size_t n_shards, std::uint64_t seed, const LearnedRouting* learned) {
  switch (kind) {
    case PolicyKind::Learned:
      if (!learned) throw Error(Errc::BadConfig, "learned policy needs a trained model and shard model");
      return AllocationPolicy::learned(*learned);
    case PolicyKind::RandOne: return AllocationPolicy::rand_one(n_shards, seed);
    case PolicyKind::RandMany: return AllocationPolicy::rand_many(n_shards, seed);
    case PolicyKind::HashTxid: return AllocationPolicy::hash_txid(n_shards);
  }
  throw Error(Errc::BadConfig, "unknown policy");
}

}  // namespace utxoshard
