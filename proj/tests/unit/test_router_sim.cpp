#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "support.hpp"
#include "utxoshard/datagen.hpp"
#include "utxoshard/router_sim.hpp"

using namespace utxoshard;

namespace {

RawTransaction make_tx(const std::vector<TxOutpoint>& spends, std::size_t outputs, std::uint32_t tag) {
  RawTransaction tx;
  if (spends.empty()) {
    TxInput cb;
    cb.prev_vout = 0xffffffff;
    cb.unlocking_script = {0x04, std::uint8_t(tag), std::uint8_t(tag >> 8), std::uint8_t(tag >> 16),
                           std::uint8_t(tag >> 24)};
    tx.inputs.push_back(cb);
  }
  for (const auto& s : spends) {
    TxInput in;
    in.prev_txid = s.txid;
    in.prev_vout = s.vout;
    in.unlocking_script = {0x51};
    tx.inputs.push_back(in);
  }
  for (std::size_t v = 0; v < outputs; ++v) tx.outputs.push_back({1000 + v, {0x51}});
  tx.locktime = tag;
  tx.update_txid();
  return tx;
}

// Chain of single-input transactions, each spending output 0 of the
// previous one, starting from a coinbase.
std::vector<RawTransaction> chain(std::size_t length, std::uint32_t tag = 0) {
  std::vector<RawTransaction> txs{make_tx({}, 2, tag)};
  for (std::size_t i = 1; i < length; ++i) txs.push_back(make_tx({txs.back().outpoint(0)}, 2, tag + std::uint32_t(i)));
  return txs;
}

ShardId hash_shard(const Hash32& h, std::size_t n) {
  std::uint64_t w = 0;
  for (int i = 0; i < 8; ++i) w |= std::uint64_t(h.bytes[i]) << (8 * i);
  return static_cast<ShardId>(w % n);
}

const GeneratedStream& stream() {
  static const GeneratedStream s = [] {
    GenConfig g;
    g.n_communities = 4;
    g.txs_per_community = 1500;
    g.seed = 3;
    return generate(g);
  }();
  return s;
}

void check_conservation(const SimReport& r) {
  CHECK(std::accumulate(r.hit_depth.begin(), r.hit_depth.end(), std::uint64_t{0}) == r.measured_inputs);
  std::uint64_t hist = 0;
  for (const auto& [m, c] : r.messages_histogram) hist += c;
  CHECK(hist == r.measured_transactions);
  CHECK(r.utxos_created - r.utxos_spent == r.utxos_stored);
  for (std::size_t k = 1; k < r.accuracy_at_k.size(); ++k) CHECK(r.accuracy_at_k[k] >= r.accuracy_at_k[k - 1]);
}

}  // namespace

TEST_CASE("one shard means every parent is local") {
  const auto& s = stream();
  for (auto p : {AllocationPolicy::rand_one(1, 1), AllocationPolicy::rand_many(1, 1), AllocationPolicy::hash_txid(1)}) {
    const auto r = simulate(s.txs, p, 1, {3, nullptr});
    CHECK(r.accuracy(0) == 1.0);
    CHECK(r.messages_per_tx == 0.0);
    CHECK(r.orphan_inputs == 0);
    check_conservation(r);
  }
}

TEST_CASE("hash policy on a hand-checked chain") {
  const auto txs = chain(40);
  const std::size_t n = 3;
  const auto r = simulate(txs, AllocationPolicy::hash_txid(n), n, {2, nullptr});
  std::vector<std::uint64_t> depth(n, 0);
  for (std::size_t i = 1; i < txs.size(); ++i) {
    const auto parent = hash_shard(txs[i - 1].txid, n);
    const auto child = hash_shard(txs[i].txid, n);
    ++depth[(parent + n - child) % n];
  }
  CHECK(r.hit_depth == depth);
  CHECK(r.measured_inputs == txs.size() - 1);
  CHECK(r.coinbase_inputs == 1);
  CHECK(r.accuracy(0) == doctest::Approx(double(depth[0]) / double(txs.size() - 1)));
  CHECK(r.accuracy(2) == 1.0);
  CHECK(r.utxos_stored == txs.size() + 1);
  std::uint64_t load = 0;
  for (auto l : r.shard_load) load += l;
  CHECK(load == txs.size());
  check_conservation(r);
}

TEST_CASE("probing every shard always finds the parent") {
  const auto& s = stream();
  for (std::size_t n : {2, 7, 16}) {
    for (auto p : {AllocationPolicy::rand_one(n, 2), AllocationPolicy::rand_many(n, 2), AllocationPolicy::hash_txid(n)}) {
      const auto r = simulate(s.txs, p, n, {n - 1, nullptr});
      CHECK(r.accuracy(n - 1) == 1.0);
      check_conservation(r);
    }
  }
}

TEST_CASE("random policies sit inside the binomial interval around (K+1)/n") {
  const auto& s = stream();
  for (std::size_t n : {2, 10, 50}) {
    for (auto p : {AllocationPolicy::rand_one(n, 11), AllocationPolicy::rand_many(n, 11)}) {
      const auto r = simulate(s.txs, p, n, {9, nullptr});
      REQUIRE(r.measured_inputs > 5000);
      for (std::size_t k : {0, 3, 9}) {
        const double expect = std::min(1.0, double(k + 1) / double(n));
        const double half = 2.576 * std::sqrt(expect * (1 - expect) / double(r.measured_inputs));
        CAPTURE(p.name());
        CAPTURE(n);
        CAPTURE(k);
        CHECK(std::abs(r.accuracy(k) - expect) <= half + 1e-12);
      }
    }
  }
}

TEST_CASE("policies are pure functions of their seed and the txid") {
  const auto& s = stream();
  const auto a = AllocationPolicy::rand_many(8, 5);
  const auto b = AllocationPolicy::rand_many(8, 5);
  const auto c = AllocationPolicy::rand_many(8, 6);
  std::size_t differ = 0;
  for (std::size_t i = 0; i < 200; ++i) {
    const auto ra = a.route(s.txs[i]);
    CHECK(ra.placement == b.route(s.txs[i]).placement);
    CHECK(ra.probes == b.route(s.txs[i]).probes);
    differ += ra.placement != c.route(s.txs[i]).placement;
    REQUIRE(ra.probes.size() == 1);
    auto sorted = ra.probes[0];
    std::sort(sorted.begin(), sorted.end());
    std::vector<ShardId> all(8);
    std::iota(all.begin(), all.end(), 0);
    CHECK(sorted == all);
  }
  CHECK(differ > 100);
  const auto one = AllocationPolicy::rand_one(8, 5).route(s.txs[42]);
  for (auto sh : one.placement) CHECK(sh == one.probes[0][0]);
  CHECK(one.routed() == std::vector<ShardId>{one.probes[0][0]});
}

TEST_CASE("measure set restricts metrics but not state") {
  const auto txs = chain(30);
  std::unordered_set<Hash32, Hash32Hasher> measure{txs[5].txid, txs[6].txid};
  const auto all = simulate(txs, AllocationPolicy::hash_txid(4), 4, {3, nullptr});
  const auto some = simulate(txs, AllocationPolicy::hash_txid(4), 4, {3, &measure});
  CHECK(some.measured_inputs == 2);
  CHECK(some.measured_transactions == 2);
  CHECK(some.transactions == all.transactions);
  CHECK(some.utxos_stored == all.utxos_stored);
  CHECK(some.shard_load == all.shard_load);
}

TEST_CASE("orphans and duplicates") {
  auto txs = chain(5);
  RawTransaction stray = make_tx({}, 1, 999);
  txs.push_back(make_tx({stray.outpoint(0)}, 1, 1000));  // parent never seen
  const auto r = simulate(txs, AllocationPolicy::hash_txid(2), 2, {1, nullptr});
  CHECK(r.orphan_inputs == 1);
  CHECK(r.measured_inputs == 4);
  check_conservation(r);
}

TEST_CASE("shard count mismatch is a typed error") {
  try {
    simulate(chain(3), AllocationPolicy::hash_txid(4), 5);
    FAIL("mismatch accepted");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::PolicyMismatch);
  }
  CHECK(parse_policy_kind("rand-many") == PolicyKind::RandMany);
  CHECK_THROWS_AS(parse_policy_kind("round-robin"), Error);
}

TEST_CASE("learned routing stores each output on its nearest centroid") {
  const auto& s = stream();
  std::vector<RawTransaction> head(s.txs.begin(), s.txs.begin() + 600);
  auto vocab = std::make_shared<OpCodeVocabulary>(build_vocabulary(head, 20));
  const auto table = FeatureTable::build(head, *vocab);
  auto scaler = std::make_shared<FeatureScaler>(fit_scaler(table.matrix(), FeatureLayout{vocab->bag_size()}));
  auto enc = std::make_shared<EmbeddingModel>(init_model({{table.dimension(), 8, 3}, false}, 4));
  const auto scaled = FeatureTable::build(head, *vocab, scaler.get());
  auto shards = std::make_shared<ShardModel>(fit_kmeans(enc->forward(scaled.matrix()), 5, 1));
  const auto policy = AllocationPolicy::learned({shards, enc, vocab, scaler});
  CHECK(policy.shard_count() == 5);
  for (std::size_t i = 0; i < 50; ++i) {
    const auto r = policy.route(head[i]);
    REQUIRE(r.placement.size() == head[i].outputs.size());
    for (std::uint32_t v = 0; v < r.placement.size(); ++v) {
      const auto row = scaled.row_of(head[i].outpoint(v));
      CHECK(r.placement[v] == shards->assign(enc->forward(scaled.matrix().row(*row)).h));
    }
  }
  const auto rep = simulate(head, policy, 5, {4, nullptr});
  CHECK(rep.accuracy(4) == 1.0);
  check_conservation(rep);

  auto wrong = std::make_shared<EmbeddingModel>(init_model({{table.dimension(), 8, 4}, false}, 4));
  CHECK_THROWS_AS(AllocationPolicy::learned({shards, wrong, vocab, scaler}), Error);
}

TEST_CASE("reports survive a JSON round trip") {
  const auto r = simulate(stream().txs, AllocationPolicy::rand_one(5, 3), 5, {4, nullptr});
  const auto back = SimReport::from_json(r.to_json());
  CHECK(back.to_json() == r.to_json());
  CHECK(back.accuracy_at_k == r.accuracy_at_k);
  CHECK(back.messages_histogram == r.messages_histogram);

  const auto rows = accuracy_curve({r});
  REQUIRE(rows.size() == 5);
  CHECK(rows[2].k == 2);
  const auto csv = accuracy_curve_csv(rows);
  CHECK(csv.rfind("policy,n_shards,k,accuracy\n", 0) == 0);
}

TEST_CASE("histograms clamp out-of-range values into the edge bins") {
  Histogram h{-1.0, 0.5, std::vector<std::uint64_t>(4, 0)};
  h.add(-5);
  h.add(-1);
  h.add(0.2);
  h.add(0.99);
  h.add(7);
  CHECK(h.counts == std::vector<std::uint64_t>{2, 0, 1, 2});
  CHECK(h.total() == 5);
  CHECK(h.to_csv().rfind("bin_start,count\n-1,2\n", 0) == 0);
}

TEST_CASE("diagnostics on a model that maps pairs to identical points") {
  // Parent and child rows carry the same features, so every positive
  // cosine is exactly 1 and every positive distance 0.
  Matrix features;
  std::vector<TrainingPair> pairs;
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g;
  for (std::size_t p = 0; p < 20; ++p) {
    std::vector<double> row(4);
    for (double& v : row) v = g(rng);
    features.append_row(row);
    features.append_row(row);
    pairs.push_back({2 * p, {2 * p + 1}});
  }
  EmbeddingModel identity({{4, 4}, false});
  for (std::size_t i = 0; i < 4; ++i) identity.parameters()[identity.weight_offset(0) + i * 4 + i] = 1.0;
  const auto d = embedding_diagnostics(pairs, features, identity, 6, 7);
  CHECK(d.positive_cosine_stats.mean == doctest::Approx(1.0));
  CHECK(d.positive_cosine_stats.count == 20);
  CHECK(d.positive_euclidean_stats.mean == doctest::Approx(0.0));
  CHECK(d.nonpositive_cosine_stats.count == 20);
  CHECK(d.nonpositive_cosine_stats.mean < 0.5);
  REQUIRE(d.anchors.size() == 6);
  for (const auto& a : d.anchors) CHECK(a.cosine.total() == 38);
  CHECK(d.zero_vectors == 0);

  const EmbeddingModel zero({{4, 4}, false});
  const auto z = embedding_diagnostics(pairs, features, zero, 2, 7);
  CHECK(z.zero_vectors > 0);
  CHECK(z.positive_cosine_stats.count == 0);
  CHECK_THROWS_AS(embedding_diagnostics({}, features, identity), Error);
}
