#include "utxoshard/router_sim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

namespace utxoshard {

using ordered_json = nlohmann::ordered_json;

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t txid_word(const Hash32& h, std::size_t word) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < 8; ++i) v |= std::uint64_t(h.bytes[8 * word + i]) << (8 * i);
  return v;
}

std::mt19937_64 draw_rng(std::uint64_t seed, const Hash32& txid, std::uint64_t salt) {
  std::uint64_t s = splitmix64(seed ^ salt);
  for (std::size_t w = 0; w < 4; ++w) s = splitmix64(s ^ txid_word(txid, w));
  return std::mt19937_64(s);
}

std::vector<ShardId> random_permutation(std::size_t n, std::mt19937_64& rng) {
  std::vector<ShardId> p(n);
  std::iota(p.begin(), p.end(), ShardId{0});
  std::shuffle(p.begin(), p.end(), rng);
  return p;
}

constexpr std::uint64_t kRouteSalt = 0x726f757465ULL;

std::uint64_t script_hash(const Bytes& script) {
  auto d = sha256(script);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(d[i]) << (8 * i);
  return v;
}

SummaryStats summarize(std::vector<double> values) {
  SummaryStats s;
  s.count = values.size();
  if (values.empty()) return s;
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  s.median = n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
  return s;
}

Histogram cosine_histogram() { return Histogram{-1.0, 0.05, std::vector<std::uint64_t>(40, 0)}; }

ordered_json histogram_json(const Histogram& h) {
  ordered_json j;
  j["start"] = h.start;
  j["width"] = h.width;
  j["counts"] = h.counts;
  return j;
}

Histogram histogram_from_json(const nlohmann::json& j) {
  return Histogram{j.at("start").get<double>(), j.at("width").get<double>(),
                   j.at("counts").get<std::vector<std::uint64_t>>()};
}

ordered_json stats_json(const SummaryStats& s) {
  ordered_json j;
  j["mean"] = s.mean;
  j["median"] = s.median;
  j["count"] = s.count;
  return j;
}

SummaryStats stats_from_json(const nlohmann::json& j) {
  return SummaryStats{j.at("mean").get<double>(), j.at("median").get<double>(), j.at("count").get<std::size_t>()};
}

}  // namespace

std::vector<ShardId> Routing::routed() const {
  std::vector<ShardId> r;
  for (const auto& p : probes) r.push_back(p.front());
  std::sort(r.begin(), r.end());
  r.erase(std::unique(r.begin(), r.end()), r.end());
  return r;
}

const char* policy_kind_name(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::Learned: return "learned";
    case PolicyKind::RandOne: return "rand-one";
    case PolicyKind::RandMany: return "rand-many";
    case PolicyKind::HashTxid: return "hash";
  }
  return "hash";
}

PolicyKind parse_policy_kind(std::string_view name) {
  if (name == "learned") return PolicyKind::Learned;
  if (name == "rand-one") return PolicyKind::RandOne;
  if (name == "rand-many") return PolicyKind::RandMany;
  if (name == "hash") return PolicyKind::HashTxid;
  throw Error(Errc::BadConfig, "unknown policy '" + std::string(name) + "'");
}

AllocationPolicy AllocationPolicy::learned(LearnedRouting routing) {
  if (!routing.shards || !routing.encoder || !routing.vocab)
    throw Error(Errc::BadConfig, "learned policy needs shard model, encoder and vocabulary");
  if (routing.shards->dimension() != routing.encoder->output_dim())
    throw Error(Errc::DimensionMismatch, "centroid dimension does not match encoder output");
  AllocationPolicy p;
  p.kind_ = PolicyKind::Learned;
  p.n_ = routing.shards->shard_count();
  p.learned_ = std::move(routing);
  return p;
}

AllocationPolicy AllocationPolicy::rand_one(std::size_t n_shards, std::uint64_t seed) {
  if (n_shards == 0) throw Error(Errc::BadConfig, "shard count must be positive");
  AllocationPolicy p;
  p.kind_ = PolicyKind::RandOne;
  p.n_ = n_shards;
  p.seed_ = seed;
  return p;
}

AllocationPolicy AllocationPolicy::rand_many(std::size_t n_shards, std::uint64_t seed) {
  auto p = rand_one(n_shards, seed);
  p.kind_ = PolicyKind::RandMany;
  return p;
}

AllocationPolicy AllocationPolicy::hash_txid(std::size_t n_shards) {
  if (n_shards == 0) throw Error(Errc::BadConfig, "shard count must be positive");
  AllocationPolicy p;
  p.kind_ = PolicyKind::HashTxid;
  p.n_ = n_shards;
  return p;
}

Routing AllocationPolicy::route(const RawTransaction& tx) const {
  Routing r;
  const std::size_t outputs = tx.outputs.size();
  switch (kind_) {
    case PolicyKind::Learned: {
      auto d = route_transaction(*learned_.shards, *learned_.encoder, tx, *learned_.vocab, learned_.scaler.get());
      r.placement = std::move(d.primary);
      r.probes = std::move(d.probe);
      break;
    }
    case PolicyKind::RandOne: {
      auto rng = draw_rng(seed_, tx.txid, kRouteSalt);
      r.probes.push_back(random_permutation(n_, rng));
      r.placement.assign(outputs, r.probes.front().front());
      break;
    }
    case PolicyKind::RandMany: {
      auto rng = draw_rng(seed_, tx.txid, kRouteSalt);
      r.probes.push_back(random_permutation(n_, rng));
      std::uniform_int_distribution<std::uint32_t> pick(0, static_cast<std::uint32_t>(n_ - 1));
      for (std::size_t v = 0; v < outputs; ++v) {
        auto orng = draw_rng(seed_, tx.txid, v);
        r.placement.push_back(pick(orng));
      }
      break;
    }
    case PolicyKind::HashTxid: {
      const auto first = static_cast<ShardId>(txid_word(tx.txid, 0) % n_);
      std::vector<ShardId> order(n_);
      for (std::size_t i = 0; i < n_; ++i) order[i] = static_cast<ShardId>((first + i) % n_);
      r.probes.push_back(std::move(order));
      r.placement.assign(outputs, first);
      break;
    }
  }
  return r;
}

// ---------------------------------------------------------------------------

void Histogram::add(double value) {
  if (counts.empty()) return;
  auto bin = static_cast<std::ptrdiff_t>(std::floor((value - start) / width));
  bin = std::clamp<std::ptrdiff_t>(bin, 0, static_cast<std::ptrdiff_t>(counts.size()) - 1);
  ++counts[static_cast<std::size_t>(bin)];
}

std::uint64_t Histogram::total() const { return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0}); }

std::string Histogram::to_csv() const {
  std::ostringstream os;
  os.precision(10);
  os << "bin_start,count\n";
  for (std::size_t i = 0; i < counts.size(); ++i) os << start + width * static_cast<double>(i) << ',' << counts[i] << '\n';
  return os.str();
}

double SimReport::accuracy(std::size_t k) const {
  if (accuracy_at_k.empty()) return 0.0;
  return accuracy_at_k[std::min(k, accuracy_at_k.size() - 1)];
}

std::string SimReport::to_json() const {
  ordered_json j;
  j["kind"] = "sim_report";
  j["version"] = 1;
  j["policy"] = policy;
  j["n_shards"] = n_shards;
  j["k_max"] = k_max;
  j["transactions"] = transactions;
  j["measured_transactions"] = measured_transactions;
  j["measured_inputs"] = measured_inputs;
  j["orphan_inputs"] = orphan_inputs;
  j["coinbase_inputs"] = coinbase_inputs;
  j["accuracy_at_k"] = accuracy_at_k;
  j["hit_depth"] = hit_depth;
  j["messages_per_tx"] = messages_per_tx;
  ordered_json mh = ordered_json::array();
  for (const auto& [messages, txs] : messages_histogram) mh.push_back({messages, txs});
  j["messages_histogram"] = mh;
  j["shard_load"] = shard_load;
  j["load_max_over_mean"] = load_max_over_mean;
  j["utxos_created"] = utxos_created;
  j["utxos_spent"] = utxos_spent;
  j["utxos_stored"] = utxos_stored;
  if (diagnostics) {
    const auto& d = *diagnostics;
    ordered_json dj;
    dj["positive_cosine"] = histogram_json(d.positive_cosine);
    dj["positive_euclidean"] = histogram_json(d.positive_euclidean);
    dj["positive_cosine_stats"] = stats_json(d.positive_cosine_stats);
    dj["positive_euclidean_stats"] = stats_json(d.positive_euclidean_stats);
    dj["nonpositive_cosine_stats"] = stats_json(d.nonpositive_cosine_stats);
    dj["zero_vectors"] = d.zero_vectors;
    dj["anchors"] = ordered_json::array();
    for (const auto& a : d.anchors) {
      ordered_json aj;
      aj["pair_index"] = a.pair_index;
      aj["cosine"] = histogram_json(a.cosine);
      aj["stats"] = stats_json(a.stats);
      dj["anchors"].push_back(aj);
    }
    j["diagnostics"] = dj;
  }
  return j.dump(1) + "\n";
}

SimReport SimReport::from_json(std::string_view text) {
  try {
    auto j = nlohmann::json::parse(text);
    if (j.at("kind") != "sim_report") throw Error(Errc::BadRecord, "not a simulation report");
    SimReport r;
    r.policy = j.at("policy").get<std::string>();
    r.n_shards = j.at("n_shards").get<std::size_t>();
    r.k_max = j.at("k_max").get<std::size_t>();
    r.transactions = j.at("transactions").get<std::uint64_t>();
    r.measured_transactions = j.at("measured_transactions").get<std::uint64_t>();
    r.measured_inputs = j.at("measured_inputs").get<std::uint64_t>();
    r.orphan_inputs = j.at("orphan_inputs").get<std::uint64_t>();
    r.coinbase_inputs = j.at("coinbase_inputs").get<std::uint64_t>();
    r.accuracy_at_k = j.at("accuracy_at_k").get<std::vector<double>>();
    r.hit_depth = j.at("hit_depth").get<std::vector<std::uint64_t>>();
    r.messages_per_tx = j.at("messages_per_tx").get<double>();
    for (const auto& e : j.at("messages_histogram"))
      r.messages_histogram[e.at(0).get<std::uint64_t>()] = e.at(1).get<std::uint64_t>();
    r.shard_load = j.at("shard_load").get<std::vector<std::uint64_t>>();
    r.load_max_over_mean = j.at("load_max_over_mean").get<double>();
    r.utxos_created = j.at("utxos_created").get<std::uint64_t>();
    r.utxos_spent = j.at("utxos_spent").get<std::uint64_t>();
    r.utxos_stored = j.at("utxos_stored").get<std::uint64_t>();
    if (j.contains("diagnostics")) {
      const auto& dj = j["diagnostics"];
      Diagnostics d;
      d.positive_cosine = histogram_from_json(dj.at("positive_cosine"));
      d.positive_euclidean = histogram_from_json(dj.at("positive_euclidean"));
      d.positive_cosine_stats = stats_from_json(dj.at("positive_cosine_stats"));
      d.positive_euclidean_stats = stats_from_json(dj.at("positive_euclidean_stats"));
      d.nonpositive_cosine_stats = stats_from_json(dj.at("nonpositive_cosine_stats"));
      d.zero_vectors = dj.value("zero_vectors", std::size_t{0});
      for (const auto& aj : dj.at("anchors"))
        d.anchors.push_back(
            {aj.at("pair_index").get<std::size_t>(), histogram_from_json(aj.at("cosine")), stats_from_json(aj.at("stats"))});
      r.diagnostics = std::move(d);
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::BadRecord, e.what());
  }
}

SimReport simulate(const std::vector<RawTransaction>& txs, const AllocationPolicy& policy, std::size_t n_shards,
                   const SimOptions& options) {
  if (policy.shard_count() != n_shards)
    throw Error(Errc::PolicyMismatch, "policy built for " + std::to_string(policy.shard_count()) +
                                          " shards, simulator configured for " + std::to_string(n_shards));
  SimReport report;
  report.policy = policy.name();
  report.n_shards = n_shards;
  report.k_max = options.k_max;
  report.hit_depth.assign(n_shards, 0);

  std::vector<ShardState> shards(n_shards);
  for (std::size_t s = 0; s < n_shards; ++s) shards[s].id = static_cast<ShardId>(s);
  // Outpoint -> owning shard, used only to tell orphans from misses.
  std::unordered_map<TxOutpoint, ShardId, TxOutpointHasher> owner;

  std::uint64_t measured_messages = 0;
  for (const auto& tx : txs) {
    ++report.transactions;
    const bool measured = !options.measure || options.measure->count(tx.txid) > 0;
    const Routing routing = policy.route(tx);
    for (auto s : routing.routed()) ++shards[s].received;

    std::uint64_t tx_messages = 0;
    for (const auto& in : tx.inputs) {
      if (in.is_coinbase()) {
        if (measured) ++report.coinbase_inputs;
        continue;
      }
      const TxOutpoint parent = in.prevout();
      auto own = owner.find(parent);
      if (own == owner.end()) {
        if (measured) ++report.orphan_inputs;
        continue;
      }
      // Probe nearest-first across every routing ordering until a shard's
      // store answers.
      std::size_t depth = n_shards;
      ShardId found = 0;
      for (std::size_t rank = 0; rank < n_shards && depth == n_shards; ++rank) {
        for (const auto& probe : routing.probes) {
          if (shards[probe[rank]].utxos.count(parent)) {
            depth = rank;
            found = probe[rank];
            break;
          }
        }
      }
      if (depth == n_shards) throw Error(Errc::BadRecord, "UTXO index out of sync for " + parent.to_string());
      if (depth == 0) ++shards[found].local_hits;
      else ++shards[found].remote_served;
      shards[found].utxos.erase(parent);
      owner.erase(own);
      ++report.utxos_spent;
      if (measured) {
        ++report.measured_inputs;
        ++report.hit_depth[depth];
        tx_messages += depth;
      }
    }
    if (measured) {
      ++report.measured_transactions;
      ++report.messages_histogram[tx_messages];
      measured_messages += tx_messages;
    }

    for (std::uint32_t v = 0; v < tx.outputs.size(); ++v) {
      const ShardId s = routing.placement[v];
      const TxOutpoint op = tx.outpoint(v);
      if (!owner.emplace(op, s).second) continue;  // duplicate txid: first output wins
      shards[s].utxos.emplace(op, StoredUtxo{tx.outputs[v].amount, script_hash(tx.outputs[v].locking_script)});
      ++report.utxos_created;
    }
  }

  report.accuracy_at_k.assign(options.k_max + 1, 0.0);
  std::uint64_t cumulative = 0;
  for (std::size_t k = 0; k <= options.k_max; ++k) {
    if (k < n_shards) cumulative += report.hit_depth[k];
    report.accuracy_at_k[k] =
        report.measured_inputs ? static_cast<double>(cumulative) / static_cast<double>(report.measured_inputs) : 0.0;
  }
  report.messages_per_tx = report.measured_transactions ? static_cast<double>(measured_messages) /
                                                              static_cast<double>(report.measured_transactions)
                                                        : 0.0;
  double load_sum = 0.0, load_max = 0.0;
  for (const auto& s : shards) {
    report.shard_load.push_back(s.received);
    report.utxos_stored += s.utxos.size();
    load_sum += static_cast<double>(s.received);
    load_max = std::max(load_max, static_cast<double>(s.received));
  }
  report.load_max_over_mean = load_sum > 0 ? load_max / (load_sum / static_cast<double>(n_shards)) : 0.0;
  return report;
}

std::vector<AccuracyRow> accuracy_curve(const std::vector<SimReport>& reports) {
  std::vector<AccuracyRow> rows;
  for (const auto& r : reports)
    for (std::size_t k = 0; k < r.accuracy_at_k.size(); ++k) rows.push_back({r.policy, r.n_shards, k, r.accuracy_at_k[k]});
  std::stable_sort(rows.begin(), rows.end(), [](const AccuracyRow& a, const AccuracyRow& b) {
    return std::tie(a.policy, a.n_shards, a.k) < std::tie(b.policy, b.n_shards, b.k);
  });
  return rows;
}

std::string accuracy_curve_csv(const std::vector<AccuracyRow>& rows) {
  std::ostringstream os;
  os.precision(10);
  os << "policy,n_shards,k,accuracy\n";
  for (const auto& r : rows) os << r.policy << ',' << r.n_shards << ',' << r.k << ',' << r.accuracy << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------

Diagnostics embedding_diagnostics(const std::vector<TrainingPair>& pairs, const Matrix& features,
                                  const EmbeddingModel& model, std::size_t sample_anchors, std::uint64_t seed) {
  if (pairs.empty()) throw Error(Errc::EmptyPairSet, "no pairs to diagnose");

  // Embed each referenced feature row once.
  std::vector<std::size_t> rows;
  for (const auto& p : pairs) {
    rows.push_back(p.parent_row);
    rows.insert(rows.end(), p.child_rows.begin(), p.child_rows.end());
  }
  std::sort(rows.begin(), rows.end());
  rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
  Matrix batch(rows.size(), features.cols());
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy(features.row(rows[i]).begin(), features.row(rows[i]).end(), batch.row(i).begin());
  const Matrix emb = model.forward(batch);
  auto embedding_of = [&](std::size_t feature_row) {
    auto it = std::lower_bound(rows.begin(), rows.end(), feature_row);
    return emb.row(static_cast<std::size_t>(it - rows.begin()));
  };

  Diagnostics d;
  d.positive_cosine = cosine_histogram();
  auto cosine = [&](std::span<const double> a, std::span<const double> b) -> std::optional<double> {
    try {
      return cosine_similarity(a, b);
    } catch (const Error&) {
      ++d.zero_vectors;
      return std::nullopt;
    }
  };

  std::vector<double> pos_cos, pos_euc;
  for (const auto& p : pairs) {
    auto a = embedding_of(p.parent_row);
    for (auto c : p.child_rows) {
      auto b = embedding_of(c);
      pos_euc.push_back(distance_euclidean(a, b));
      if (auto cs = cosine(a, b)) pos_cos.push_back(*cs);
    }
  }
  for (double v : pos_cos) d.positive_cosine.add(v);
  const double max_euc = pos_euc.empty() ? 0.0 : *std::max_element(pos_euc.begin(), pos_euc.end());
  d.positive_euclidean = Histogram{0.0, max_euc > 0.0 ? max_euc / 40.0 : 1.0, std::vector<std::uint64_t>(40, 0)};
  for (double v : pos_euc) d.positive_euclidean.add(v);
  d.positive_cosine_stats = summarize(pos_cos);
  d.positive_euclidean_stats = summarize(pos_euc);

  std::mt19937_64 rng(seed);
  std::vector<double> neg_cos;
  if (pairs.size() >= 2) {
    std::uniform_int_distribution<std::size_t> other(0, pairs.size() - 2);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      std::size_t j = other(rng);
      if (j >= i) ++j;
      if (auto cs = cosine(embedding_of(pairs[i].parent_row), embedding_of(pairs[j].child_rows.front())))
        neg_cos.push_back(*cs);
    }
  }
  d.nonpositive_cosine_stats = summarize(neg_cos);

  std::vector<std::size_t> anchor_pairs(pairs.size());
  std::iota(anchor_pairs.begin(), anchor_pairs.end(), 0);
  std::shuffle(anchor_pairs.begin(), anchor_pairs.end(), rng);
  anchor_pairs.resize(std::min(sample_anchors, anchor_pairs.size()));
  for (auto idx : anchor_pairs) {
    const auto& p = pairs[idx];
    auto a = embedding_of(p.parent_row);
    AnchorHistogram ah{idx, cosine_histogram(), {}};
    std::vector<double> values;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const std::size_t fr = rows[i];
      if (fr == p.parent_row || std::find(p.child_rows.begin(), p.child_rows.end(), fr) != p.child_rows.end())
        continue;
      if (auto cs = cosine(a, emb.row(i))) {
        ah.cosine.add(*cs);
        values.push_back(*cs);
      }
    }
    ah.stats = summarize(std::move(values));
    d.anchors.push_back(std::move(ah));
  }
  return d;
}

}  // namespace utxoshard
