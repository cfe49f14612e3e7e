#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>
#include <unordered_map>

#include "support.hpp"
#include "utxoshard/datagen.hpp"
#include "utxoshard/trainer.hpp"

using namespace utxoshard;

namespace {

GenConfig small(std::size_t communities, std::size_t per, double p_intra, std::uint64_t seed = 1) {
  GenConfig c;
  c.n_communities = communities;
  c.txs_per_community = per;
  c.p_intra = p_intra;
  c.seed = seed;
  return c;
}

std::unordered_map<Hash32, std::size_t, Hash32Hasher> index_of(const GeneratedStream& s) {
  std::unordered_map<Hash32, std::size_t, Hash32Hasher> idx;
  for (std::size_t i = 0; i < s.txs.size(); ++i) idx.emplace(s.txs[i].txid, i);
  return idx;
}

}  // namespace

TEST_CASE("stream is well formed: ledger order, unique txids, no double spends") {
  const auto s = generate(small(5, 400, 0.9));
  REQUIRE(s.labels.size() == s.txs.size());
  const auto idx = index_of(s);
  CHECK(idx.size() == s.txs.size());
  std::set<TxOutpoint> spent;
  std::size_t coinbase = 0;
  for (std::size_t i = 0; i < s.txs.size(); ++i) {
    const auto& tx = s.txs[i];
    CHECK(decode_transaction(serialize(tx)) == tx);
    if (tx.is_coinbase()) {
      ++coinbase;
      continue;
    }
    for (const auto& in : tx.inputs) {
      const auto it = idx.find(in.prev_txid);
      REQUIRE(it != idx.end());
      CHECK(it->second < i);
      CHECK(in.prev_vout < s.txs[it->second].outputs.size());
      CHECK(spent.insert(in.prevout()).second);
    }
  }
  CHECK(coinbase == s.roots.size());
  CHECK(coinbase >= 5 * 20);
  CHECK(s.txs.size() == 5 * 400 + coinbase);
}

TEST_CASE("p_intra = 1 keeps every spend inside its community") {
  const auto s = generate(small(4, 300, 1.0));
  const auto idx = index_of(s);
  REQUIRE(!s.spends.empty());
  for (const auto& sp : s.spends) CHECK(s.labels[idx.at(sp.parent.txid)] == s.labels[idx.at(sp.child)]);
}

TEST_CASE("realized intra-community rate tracks p_intra") {
  const auto s = generate(small(6, 1000, 0.8, 9));
  const auto idx = index_of(s);
  std::size_t intra = 0;
  for (const auto& sp : s.spends) intra += s.labels[idx.at(sp.parent.txid)] == s.labels[idx.at(sp.child)];
  const double rate = double(intra) / double(s.spends.size());
  MESSAGE("intra rate " << rate);
  CHECK(rate == doctest::Approx(0.8).epsilon(0.05));
}

TEST_CASE("the pair extractor recovers the generator's own spend records") {
  const auto s = generate(small(2, 100, 0.95, 4));
  const auto pairs = build_pairs(s.txs, {1000, 0});
  std::set<std::pair<TxOutpoint, Hash32>> truth;
  for (const auto& sp : s.spends) truth.emplace(sp.parent, sp.child);
  std::size_t found = 0;
  for (const auto& p : pairs.pairs) found += truth.count({p.parent, p.child_txid});
  CHECK(pairs.pairs.size() == truth.size());
  CHECK(double(found) >= 0.99 * double(truth.size()));
  CHECK(pairs.orphan_inputs == 0);
}

TEST_CASE("generation is a pure function of the config") {
  const auto a = generate(small(3, 200, 0.9, 77));
  const auto b = generate(small(3, 200, 0.9, 77));
  const auto c = generate(small(3, 200, 0.9, 78));
  REQUIRE(a.txs.size() == b.txs.size());
  for (std::size_t i = 0; i < a.txs.size(); ++i) CHECK(a.txs[i].txid == b.txs[i].txid);
  CHECK(a.labels_jsonl() == b.labels_jsonl());
  CHECK(a.txs.back().txid != c.txs.back().txid);
}

TEST_CASE("a single community is valid") {
  const auto s = generate(small(1, 150, 0.95));
  for (auto l : s.labels) CHECK(l == 0);
  CHECK(s.txs.size() >= 150);
}

TEST_CASE("communities differ in what the features can see") {
  const auto s = generate(small(3, 600, 1.0, 2));
  // Mean log10 output amount per community follows the profile centers.
  std::vector<double> sum(3), count(3);
  for (std::size_t i = 0; i < s.txs.size(); ++i) {
    if (s.txs[i].is_coinbase()) continue;
    for (const auto& o : s.txs[i].outputs) {
      sum[s.labels[i]] += std::log10(double(std::max<std::uint64_t>(o.amount, 1)));
      ++count[s.labels[i]];
    }
  }
  const auto profiles = default_profiles(3);
  for (std::size_t c = 0; c < 3; ++c) {
    CAPTURE(c);
    CHECK(std::abs(sum[c] / count[c] - profiles[c].amount_log10_center) < 1.0);
  }
  CHECK(sum[0] / count[0] < sum[1] / count[1]);
  CHECK(sum[1] / count[1] < sum[2] / count[2]);
}

TEST_CASE("invalid configurations are rejected") {
  auto code = [](GenConfig c) {
    try {
      c.validate();
    } catch (const Error& e) {
      return e.code();
    }
    return Errc::Io;
  };
  CHECK(code(small(0, 10, 0.9)) == Errc::BadConfig);
  CHECK(code(small(2, 10, 1.5)) == Errc::BadConfig);
  CHECK(code(small(2, 10, -0.1)) == Errc::BadConfig);
  auto c = small(2, 10, 0.9);
  c.profiles = default_profiles(2);
  c.profiles[1] = c.profiles[0];
  CHECK(code(c) == Errc::BadConfig);
  c.profiles = default_profiles(3);
  CHECK(code(c) == Errc::BadConfig);
  c = small(2, 10, 0.9);
  c.profiles = default_profiles(2);
  c.profiles[0].template_mix = {0, 0, 0, 0};
  CHECK(code(c) == Errc::BadConfig);
  CHECK_THROWS_AS(generate(small(0, 10, 0.9)), Error);
  CHECK(code(small(10, 10, 0.9)) == Errc::Io);
}

TEST_CASE("labels sidecar") {
  const auto s = generate(small(2, 20, 0.9));
  const auto text = s.labels_jsonl();
  CHECK(static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')) == s.txs.size());
  CHECK(text.find("{\"txid\":\"" + s.txs[0].txid.to_hex() + "\",\"community\":" + std::to_string(s.labels[0]) +
                  "}") == 0);
}
