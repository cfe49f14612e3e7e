#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <set>

#include "support.hpp"
#include "utxoshard/datagen.hpp"
#include "utxoshard/pipeline.hpp"
#include "utxoshard/trainer.hpp"

using namespace utxoshard;

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed, double sd = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, sd);
  Matrix m(rows, cols);
  for (double& v : m.data()) v = g(rng);
  return m;
}

double norm_diff(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

// Reference miner: enumerate every valid candidate, sort, pick.
std::vector<Triplet> brute_force_mine(const Matrix& e, const BatchLayout& L, MiningMode mode, double m) {
  std::vector<Triplet> out;
  for (std::size_t p = 0; p < L.pairs(); ++p) {
    const std::size_t a = L.anchor_rows[p];
    std::set<std::size_t> own{L.source_of_row[a]};
    for (auto r : L.positive_rows[p]) own.insert(L.source_of_row[r]);
    for (auto pos : L.positive_rows[p]) {
      const double dap = norm_diff(e.row(a), e.row(pos));
      std::vector<std::pair<double, std::size_t>> semi, hard, all;
      for (std::size_t r = 0; r < L.rows(); ++r) {
        if (L.pair_of_row[r] == p || own.count(L.source_of_row[r])) continue;
        const double dan = norm_diff(e.row(a), e.row(r));
        all.emplace_back(dan, r);
        if (dan < dap) hard.emplace_back(-dan, r);
        else if (dan < dap + m) semi.emplace_back(dan, r);
      }
      std::sort(all.begin(), all.end());
      std::sort(semi.begin(), semi.end());
      std::sort(hard.begin(), hard.end());
      std::optional<std::size_t> pick;
      if (mode == MiningMode::Hard) {
        if (!all.empty()) pick = all.front().second;
      } else if (!semi.empty()) {
        pick = semi.front().second;
      } else if (!hard.empty()) {
        pick = hard.front().second;
      }
      if (!pick) continue;
      const double dan = norm_diff(e.row(a), e.row(*pick));
      out.push_back({a, pos, *pick, dap, dan, classify_negative(dap, dan, m)});
    }
  }
  return out;
}

struct SmallWorld {
  GeneratedStream stream;
  PreparedData data;
  TrainConfig config;
};

const SmallWorld& small_world() {
  static const SmallWorld w = [] {
    GenConfig g;
    g.n_communities = 3;
    g.txs_per_community = 250;
    g.seed = 5;
    SmallWorld s;
    s.stream = generate(g);
    s.config.epochs = 4;
    s.config.batch_pairs = 64;
    s.config.hidden_layers = {32};
    s.config.embedding_dim = 8;
    s.config.mining = MiningMode::SemiHard;
    s.data = prepare_data(s.stream.txs, 30, s.config);
    return s;
  }();
  return w;
}

}  // namespace

TEST_CASE("triplet loss agrees with a direct evaluation on 10k random triplets") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> margin_dist(0.1, 2.0);
  const Matrix e = random_matrix(30000, 8, 2);
  for (std::size_t t = 0; t < 10000; ++t) {
    const double m = margin_dist(rng);
    auto a = e.row(3 * t), p = e.row(3 * t + 1), n = e.row(3 * t + 2);
    const double want = std::max(0.0, norm_diff(a, p) - norm_diff(a, n) + m);
    CHECK(std::abs(triplet_loss(a, p, n, m) - want) <= 1e-12);
  }
  const std::vector<double> x{0, 0}, y{3, 4}, z{0, 1};
  CHECK(triplet_loss(x, y, z, 1.0) == doctest::Approx(5.0));
  CHECK(triplet_loss(x, z, y, 1.0) == 0.0);
  CHECK_THROWS_AS(triplet_loss(x, y, std::vector<double>{1.0}, 1.0), Error);
  CHECK_THROWS_AS(triplet_loss(x, y, z, 0.0), Error);
}

TEST_CASE("negative classes") {
  CHECK(classify_negative(2.0, 1.0, 1.0) == NegativeClass::Hard);
  CHECK(classify_negative(2.0, 2.0, 1.0) == NegativeClass::SemiHard);
  CHECK(classify_negative(2.0, 2.999, 1.0) == NegativeClass::SemiHard);
  CHECK(classify_negative(2.0, 3.0, 1.0) == NegativeClass::Easy);
  CHECK(parse_mining_mode("curriculum") == MiningMode::Curriculum);
  CHECK_THROWS_AS(parse_mining_mode("random"), Error);
}

TEST_CASE("online mining matches a brute-force reference on every batch size up to 64") {
  std::mt19937_64 rng(17);
  std::size_t compared = 0;
  for (std::size_t batch = 2; batch <= 64; batch += (batch < 10 ? 1 : 9)) {
    for (int trial = 0; trial < 3; ++trial) {
      std::vector<TrainingPair> pairs;
      std::size_t next_row = 0;
      for (std::size_t p = 0; p < batch; ++p) {
        TrainingPair tp;
        // Occasionally share a parent row so the source exclusion is exercised.
        tp.parent_row = (p > 0 && rng() % 7 == 0) ? pairs[p - 1].parent_row : next_row++;
        const std::size_t kids = 1 + rng() % 4;
        for (std::size_t k = 0; k < kids; ++k) tp.child_rows.push_back(next_row++);
        pairs.push_back(tp);
      }
      std::vector<std::size_t> idx(batch);
      std::iota(idx.begin(), idx.end(), 0);
      const auto layout = make_batch_layout(pairs, idx);
      // Coarse grid values make exact distance ties common.
      Matrix e(layout.rows(), 3);
      for (double& v : e.data()) v = double(rng() % 5) * 0.5;
      for (auto mode : {MiningMode::SemiHard, MiningMode::Hard}) {
        for (double margin : {0.3, 1.0}) {
          const auto got = mine_batch(e, layout, mode, margin);
          const auto want = brute_force_mine(e, layout, mode, margin);
          REQUIRE(got.size() == want.size());
          for (std::size_t i = 0; i < got.size(); ++i) {
            CHECK(got[i].anchor == want[i].anchor);
            CHECK(got[i].positive == want[i].positive);
            CHECK(got[i].negative == want[i].negative);
            CHECK(got[i].negative_class == want[i].negative_class);
          }
          ++compared;
        }
      }
    }
  }
  CHECK(compared > 50);
}

TEST_CASE("mining preconditions") {
  std::vector<TrainingPair> pairs{{0, {1}}, {2, {3}}};
  const std::vector<std::size_t> one{0};
  const auto small = make_batch_layout(pairs, one);
  CHECK_THROWS_AS(mine_batch(Matrix(2, 2), small, MiningMode::SemiHard, 1.0), Error);
  const std::vector<std::size_t> both{0, 1};
  const auto layout = make_batch_layout(pairs, both);
  CHECK_THROWS_AS(mine_batch(Matrix(4, 2), layout, MiningMode::Curriculum, 1.0), Error);
  CHECK_THROWS_AS(mine_batch(Matrix(3, 2), layout, MiningMode::Hard, 1.0), Error);
}

TEST_CASE("batch loss gradient agrees with finite differences") {
  const Matrix e = random_matrix(12, 4, 3, 0.4);
  std::vector<Triplet> ts{{0, 1, 2}, {0, 3, 4}, {5, 6, 7}, {8, 9, 10}, {11, 1, 4}};
  const double margin = 1.0;
  const auto base = triplet_batch_loss(e, ts, margin);
  CHECK(base.active > 0);
  const double eps = 1e-6;
  for (std::size_t i = 0; i < e.data().size(); ++i) {
    Matrix up = e, down = e;
    up.data()[i] += eps;
    down.data()[i] -= eps;
    const double numeric =
        (triplet_batch_loss(up, ts, margin).loss - triplet_batch_loss(down, ts, margin).loss) / (2 * eps);
    CHECK(numeric == doctest::Approx(base.grad.data()[i]).epsilon(1e-5).scale(1e-6));
  }
}

TEST_CASE("adam step matches the closed form of its first update") {
  std::vector<double> p{1.0, -2.0, 0.5};
  const std::vector<double> g{0.1, -3.0, 0.0};
  AdamState s;
  AdamConfig c;
  adam_step(p, g, s, c);
  // After one step the bias-corrected update is lr * g / (|g| + eps).
  CHECK(p[0] == doctest::Approx(1.0 - 1e-3 * 0.1 / (0.1 + 1e-8)));
  CHECK(p[1] == doctest::Approx(-2.0 + 1e-3 * 3.0 / (3.0 + 1e-8)));
  CHECK(p[2] == 0.5);
  CHECK(s.step == 1);
}

TEST_CASE("pairs, split and binding on the fixture corpus") {
  const auto txs = testsupport::fixture_corpus();
  const auto ps = build_pairs(txs);
  std::set<Hash32> ids;
  for (const auto& tx : txs) ids.insert(tx.txid);
  std::size_t internal_inputs = 0;
  for (const auto& tx : txs)
    for (const auto& in : tx.inputs)
      if (!in.is_coinbase() && ids.count(in.prev_txid)) ++internal_inputs;
  CHECK(ps.pairs.size() == internal_inputs);
  // The corpus reuses some outpoints, so spent_by records the first spender.
  std::set<std::pair<TxOutpoint, Hash32>> links;
  for (const auto& p : ps.pairs) {
    CHECK(ids.count(p.parent.txid));
    links.emplace(p.parent, p.child_txid);
  }
  for (const auto& [parent, child] : ps.spent_by) CHECK(links.count({parent, child}));
  CHECK(ps.spent_by.size() <= ps.pairs.size());

  // Reversing the stream must not lose any pair.
  auto reversed = txs;
  std::reverse(reversed.begin(), reversed.end());
  CHECK(build_pairs(reversed).pairs.size() == ps.pairs.size());
}

TEST_CASE("split keeps every child on one side and is seed-stable") {
  const auto& w = small_world();
  const auto& pairs = w.data.pairs.pairs;
  const auto s1 = split_dataset(pairs, 0.8, 42);
  const auto s2 = split_dataset(pairs, 0.8, 42);
  CHECK(s1.train == s2.train);
  CHECK(s1.test == s2.test);
  CHECK(s1.train.size() + s1.test.size() == pairs.size());
  std::set<Hash32> train_children;
  for (const auto& p : s1.train) train_children.insert(p.child_txid);
  for (const auto& p : s1.test) CHECK(train_children.count(p.child_txid) == 0);
  const double frac = double(s1.train.size()) / double(pairs.size());
  CHECK(frac == doctest::Approx(0.8).epsilon(0.1));
  for (const auto& p : pairs) CHECK(p.child_vouts.size() <= w.config.max_children);
}

TEST_CASE("training is deterministic and improves margin satisfaction") {
  const auto& w = small_world();
  const Matrix& x = w.data.table.matrix();
  const auto r1 = train(w.data.train_pairs, x, w.config);
  const auto r2 = train(w.data.train_pairs, x, w.config);
  CHECK(save_model(r1.model) == save_model(r2.model));
  REQUIRE(r1.log.size() == w.config.epochs);
  const auto init = init_model({{x.cols(), 32, 8}, false}, w.config.seed);
  const double before = margin_satisfaction(init, w.data.test_pairs, x, 1.0, 2, 3);
  const double after = margin_satisfaction(r1.model, w.data.test_pairs, x, 1.0, 2, 3);
  MESSAGE("margin satisfaction " << before << " -> " << after);
  CHECK(after > before);
  for (const auto& e : r1.log) CHECK(std::isfinite(e.mean_loss));

  // Resuming from a checkpoint reproduces the same bytes.
  const auto [m, st] = load_checkpoint(save_checkpoint(r1.model, r1.optimizer));
  CHECK(m == r1.model);
  CHECK(st == r1.optimizer);
}

TEST_CASE("training error paths") {
  const auto& w = small_world();
  const Matrix& x = w.data.table.matrix();
  CHECK_THROWS_AS(train({}, x, w.config), Error);
  try {
    train({}, x, w.config);
  } catch (const Error& e) {
    CHECK(e.code() == Errc::EmptyPairSet);
  }
  Matrix poisoned = x;
  for (double& v : poisoned.data()) v = std::numeric_limits<double>::quiet_NaN();
  try {
    train(w.data.train_pairs, poisoned, w.config);
    FAIL("training on NaN features did not diverge");
  } catch (const DivergedError& e) {
    CHECK(e.code() == Errc::Diverged);
    CHECK(e.last_good().all_finite());
  }
  TrainConfig bad = w.config;
  bad.margin = 0;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = w.config;
  bad.split_fraction = 1.0;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("curriculum logs the switch to hard negatives at most once") {
  const auto& w = small_world();
  TrainConfig c = w.config;
  c.mining = MiningMode::Curriculum;
  c.epochs = 8;
  c.plateau_window = 2;
  c.plateau_threshold = 10.0;  // forces a switch as soon as the window fills
  const auto r = train(w.data.train_pairs, w.data.table.matrix(), c);
  std::size_t switches = 0;
  for (const auto& e : r.log) switches += e.switched_to_hard;
  CHECK(switches == 1);
  CHECK(r.log.front().mode == MiningMode::SemiHard);
  CHECK(r.log.back().mode == MiningMode::Hard);
}
