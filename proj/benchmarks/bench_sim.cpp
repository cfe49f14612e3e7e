#include <benchmark/benchmark.h>

#include <random>

#include "utxoshard/datagen.hpp"
#include "utxoshard/router_sim.hpp"
#include "utxoshard/shardspace.hpp"

namespace {

using namespace utxoshard;

void BM_Generate(benchmark::State& state) {
  GenConfig c;
  c.txs_per_community = static_cast<std::size_t>(state.range(0));
  std::size_t n = 0;
  for (auto _ : state) n += generate(c).txs.size();
  state.SetItemsProcessed(static_cast<std::int64_t>(n));
}
BENCHMARK(BM_Generate)->Arg(500)->Unit(benchmark::kMillisecond);

void BM_KMeans(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g;
  Matrix x(5000, 32);
  for (double& v : x.data()) v = g(rng);
  KMeansOptions opt;
  opt.restarts = 1;
  for (auto _ : state) benchmark::DoNotOptimize(fit_kmeans(x, n, 7, opt).centroids().data().data());
}
BENCHMARK(BM_KMeans)->Arg(10)->Arg(100)->Unit(benchmark::kMillisecond);

void BM_ProbeOrder(benchmark::State& state) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  Matrix c(100, 32);
  for (double& v : c.data()) v = g(rng);
  const ShardModel m(c);
  std::vector<double> q(32);
  for (double& v : q) v = g(rng);
  for (auto _ : state) benchmark::DoNotOptimize(m.probe_order(q));
}
BENCHMARK(BM_ProbeOrder);

void BM_SimulateRandOne(benchmark::State& state) {
  GenConfig c;
  c.txs_per_community = 1000;
  const auto txs = generate(c).txs;
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto policy = AllocationPolicy::rand_one(n, 11);
  for (auto _ : state) benchmark::DoNotOptimize(simulate(txs, policy, n).accuracy(0));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * txs.size()));
}
BENCHMARK(BM_SimulateRandOne)->Arg(10)->Arg(100)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
