#include <benchmark/benchmark.h>

#include <numeric>
#include <random>

#include "utxoshard/datagen.hpp"
#include "utxoshard/embedder.hpp"
#include "utxoshard/features.hpp"
#include "utxoshard/trainer.hpp"

namespace {

using namespace utxoshard;

const std::vector<RawTransaction>& txs() {
  static const auto s = [] {
    GenConfig c;
    c.n_communities = 4;
    c.txs_per_community = 500;
    return generate(c).txs;
  }();
  return s;
}

void BM_FeaturizeTransaction(benchmark::State& state) {
  const auto vocab = build_vocabulary(txs());
  std::size_t outputs = 0;
  for (auto _ : state) {
    Matrix m(0, FeatureLayout{vocab.bag_size()}.dimension());
    for (const auto& tx : txs()) featurize_transaction(tx, vocab, nullptr, m);
    outputs += m.rows();
    benchmark::DoNotOptimize(m.data().data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(outputs));
}
BENCHMARK(BM_FeaturizeTransaction);

void BM_ForwardBatch(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const auto model = init_model(ModelSpec::defaults(108), 42);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g;
  Matrix x(rows, 108);
  for (double& v : x.data()) v = g(rng);
  for (auto _ : state) benchmark::DoNotOptimize(model.forward(x).data().data());
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * rows));
}
BENCHMARK(BM_ForwardBatch)->Arg(1)->Arg(256)->Arg(2048);

void BM_ForwardBackward(benchmark::State& state) {
  const auto model = init_model(ModelSpec::defaults(108), 42);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g;
  Matrix x(1024, 108), up(1024, 32);
  for (double& v : x.data()) v = g(rng);
  for (double& v : up.data()) v = g(rng);
  for (auto _ : state) {
    const auto pass = model.forward_train(x);
    benchmark::DoNotOptimize(backward(model, pass, up, false).parameters.data());
  }
}
BENCHMARK(BM_ForwardBackward);

void BM_MineBatch(benchmark::State& state) {
  const auto pairs_in_batch = static_cast<std::size_t>(state.range(0));
  std::vector<TrainingPair> pairs;
  std::size_t next = 0;
  for (std::size_t p = 0; p < pairs_in_batch; ++p) {
    TrainingPair tp{next++, {}};
    for (int k = 0; k < 3; ++k) tp.child_rows.push_back(next++);
    pairs.push_back(tp);
  }
  std::vector<std::size_t> idx(pairs_in_batch);
  std::iota(idx.begin(), idx.end(), 0);
  const auto layout = make_batch_layout(pairs, idx);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  Matrix e(layout.rows(), 32);
  for (double& v : e.data()) v = g(rng);
  for (auto _ : state) benchmark::DoNotOptimize(mine_batch(e, layout, MiningMode::SemiHard, 1.0));
}
BENCHMARK(BM_MineBatch)->Arg(64)->Arg(256);

}  // namespace
