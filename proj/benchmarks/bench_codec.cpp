#include <benchmark/benchmark.h>

#include "utxoshard/datagen.hpp"
#include "utxoshard/txcodec.hpp"

namespace {

using namespace utxoshard;

const std::vector<Bytes>& raw_stream() {
  static const std::vector<Bytes> raws = [] {
    GenConfig c;
    c.n_communities = 4;
    c.txs_per_community = 500;
    std::vector<Bytes> out;
    for (const auto& tx : generate(c).txs) out.push_back(serialize(tx));
    return out;
  }();
  return raws;
}

void BM_ParseTransaction(benchmark::State& state) {
  const auto& raws = raw_stream();
  std::size_t bytes = 0;
  for (auto _ : state) {
    for (const auto& r : raws) {
      auto tx = decode_transaction(r);
      benchmark::DoNotOptimize(tx.txid);
      bytes += r.size();
    }
  }
  state.SetBytesProcessed(static_cast<std::int64_t>(bytes));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * raws.size()));
}
BENCHMARK(BM_ParseTransaction);

void BM_Serialize(benchmark::State& state) {
  std::vector<RawTransaction> txs;
  for (const auto& r : raw_stream()) txs.push_back(decode_transaction(r));
  for (auto _ : state)
    for (const auto& tx : txs) benchmark::DoNotOptimize(serialize(tx));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * txs.size()));
}
BENCHMARK(BM_Serialize);

void BM_TokenizeScripts(benchmark::State& state) {
  std::vector<Bytes> scripts;
  for (const auto& r : raw_stream())
    for (auto& o : decode_transaction(r).outputs) scripts.push_back(std::move(o.locking_script));
  for (auto _ : state)
    for (const auto& s : scripts) benchmark::DoNotOptimize(tokenize_script(s));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * scripts.size()));
}
BENCHMARK(BM_TokenizeScripts);

}  // namespace
