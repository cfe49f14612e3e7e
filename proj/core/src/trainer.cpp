#include "utxoshard/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <unordered_set>

#include <json.hpp>

namespace utxoshard {

PairSet build_pairs(const std::vector<RawTransaction>& txs, PairOptions options) {
  std::unordered_map<Hash32, std::size_t, Hash32Hasher> index;
  index.reserve(txs.size());
  for (std::size_t i = 0; i < txs.size(); ++i) index.emplace(txs[i].txid, i);

  PairSet set;
  for (const auto& child : txs) {
    for (const auto& in : child.inputs) {
      if (in.is_coinbase()) {
        ++set.coinbase_inputs;
        continue;
      }
      auto it = index.find(in.prev_txid);
      if (it == index.end() || in.prev_vout >= txs[it->second].outputs.size()) {
        ++set.orphan_inputs;
        continue;
      }
      SpendingPair pair;
      pair.parent = in.prevout();
      pair.child_txid = child.txid;
      pair.child_vouts.resize(child.outputs.size());
      std::iota(pair.child_vouts.begin(), pair.child_vouts.end(), 0u);
      if (pair.child_vouts.size() > options.max_children) {
        // Seeded by the pair's identity so the subsample does not depend on
        // stream order.
        std::mt19937_64 rng(options.seed ^ Hash32Hasher{}(child.txid) ^ (std::uint64_t(in.prev_vout) << 32) ^
                            Hash32Hasher{}(in.prev_txid));
        std::shuffle(pair.child_vouts.begin(), pair.child_vouts.end(), rng);
        pair.child_vouts.resize(options.max_children);
        std::sort(pair.child_vouts.begin(), pair.child_vouts.end());
      }
      set.spent_by.emplace(pair.parent, child.txid);
      set.pairs.push_back(std::move(pair));
    }
  }
  return set;
}

DatasetSplit split_dataset(const std::vector<SpendingPair>& pairs, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw Error(Errc::BadConfig, "split fraction must be in (0, 1)");
  std::vector<Hash32> children;
  children.reserve(pairs.size());
  for (const auto& p : pairs) children.push_back(p.child_txid);
  std::sort(children.begin(), children.end());
  children.erase(std::unique(children.begin(), children.end()), children.end());
  std::mt19937_64 rng(seed);
  std::shuffle(children.begin(), children.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(children.size())));
  std::unordered_set<Hash32, Hash32Hasher> train_children(children.begin(), children.begin() + n_train);

  DatasetSplit split;
  for (const auto& p : pairs) (train_children.count(p.child_txid) ? split.train : split.test).push_back(p);
  return split;
}

std::vector<TrainingPair> bind_pairs(const std::vector<SpendingPair>& pairs, const FeatureTable& table) {
  std::vector<TrainingPair> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    auto parent = table.row_of(p.parent);
    if (!parent) continue;
    TrainingPair tp;
    tp.parent_row = *parent;
    for (auto v : p.child_vouts)
      if (auto row = table.row_of({p.child_txid, v})) tp.child_rows.push_back(*row);
    if (!tp.child_rows.empty()) out.push_back(std::move(tp));
  }
  return out;
}

// ---------------------------------------------------------------------------

double triplet_loss(std::span<const double> anchor, std::span<const double> positive,
                    std::span<const double> negative, double margin) {
  if (anchor.size() != positive.size() || anchor.size() != negative.size())
    throw Error(Errc::DimensionMismatch, "triplet members differ in dimension");
  if (!(margin > 0.0)) throw Error(Errc::BadConfig, "margin must be positive");
  return std::max(0.0, distance_euclidean(anchor, positive) - distance_euclidean(anchor, negative) + margin);
}

const char* negative_class_name(NegativeClass c) {
  switch (c) {
    case NegativeClass::Easy: return "easy";
    case NegativeClass::SemiHard: return "semi-hard";
    case NegativeClass::Hard: return "hard";
  }
  return "easy";
}

NegativeClass classify_negative(double d_ap, double d_an, double margin) {
  if (d_an < d_ap) return NegativeClass::Hard;
  if (d_an < d_ap + margin) return NegativeClass::SemiHard;
  return NegativeClass::Easy;
}

const char* mining_mode_name(MiningMode mode) {
  switch (mode) {
    case MiningMode::SemiHard: return "semi-hard";
    case MiningMode::Hard: return "hard";
    case MiningMode::Curriculum: return "curriculum";
  }
  return "semi-hard";
}

MiningMode parse_mining_mode(std::string_view name) {
  if (name == "semi-hard") return MiningMode::SemiHard;
  if (name == "hard") return MiningMode::Hard;
  if (name == "curriculum") return MiningMode::Curriculum;
  throw Error(Errc::BadConfig, "unknown mining mode '" + std::string(name) + "'");
}

BatchLayout make_batch_layout(const std::vector<TrainingPair>& pairs, std::span<const std::size_t> batch) {
  BatchLayout layout;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& p = pairs.at(batch[b]);
    layout.anchor_rows.push_back(layout.rows());
    layout.pair_of_row.push_back(b);
    layout.source_of_row.push_back(p.parent_row);
    std::vector<std::size_t> positives;
    for (auto c : p.child_rows) {
      positives.push_back(layout.rows());
      layout.pair_of_row.push_back(b);
      layout.source_of_row.push_back(c);
    }
    layout.positive_rows.push_back(std::move(positives));
  }
  return layout;
}

std::vector<Triplet> mine_batch(const Matrix& embeddings, const BatchLayout& layout, MiningMode mode,
                                double margin) {
  if (mode == MiningMode::Curriculum) throw Error(Errc::BadConfig, "resolve the curriculum before mining");
  if (layout.pairs() < 2) throw Error(Errc::BatchTooSmall, "mining needs at least two spending pairs");
  if (embeddings.rows() != layout.rows())
    throw Error(Errc::DimensionMismatch, "embedding rows do not match batch layout");

  const std::size_t rows = layout.rows();
  std::vector<Triplet> triplets;
  std::vector<double> d_anchor(rows);
  std::vector<std::size_t> own_sources;
  std::vector<char> excluded(rows);

  for (std::size_t p = 0; p < layout.pairs(); ++p) {
    const std::size_t a = layout.anchor_rows[p];
    own_sources.assign({layout.source_of_row[a]});
    for (auto r : layout.positive_rows[p]) own_sources.push_back(layout.source_of_row[r]);
    for (std::size_t r = 0; r < rows; ++r) {
      excluded[r] = layout.pair_of_row[r] == p ||
                    std::find(own_sources.begin(), own_sources.end(), layout.source_of_row[r]) != own_sources.end();
      d_anchor[r] = excluded[r] ? 0.0 : distance_euclidean(embeddings.row(a), embeddings.row(r));
    }

    for (auto pos : layout.positive_rows[p]) {
      const double d_ap = distance_euclidean(embeddings.row(a), embeddings.row(pos));
      std::size_t best = rows;
      std::size_t fallback = rows;
      for (std::size_t r = 0; r < rows; ++r) {
        if (excluded[r]) continue;
        const double d_an = d_anchor[r];
        if (mode == MiningMode::Hard) {
          if (best == rows || d_an < d_anchor[best]) best = r;
          continue;
        }
        switch (classify_negative(d_ap, d_an, margin)) {
          case NegativeClass::SemiHard:
            if (best == rows || d_an < d_anchor[best]) best = r;
            break;
          case NegativeClass::Hard:
            if (fallback == rows || d_an > d_anchor[fallback]) fallback = r;
            break;
          case NegativeClass::Easy:
            break;
        }
      }
      if (best == rows) best = fallback;
      if (best == rows) continue;
      triplets.push_back({a, pos, best, d_ap, d_anchor[best], classify_negative(d_ap, d_anchor[best], margin)});
    }
  }
  return triplets;
}

TripletBatchLoss triplet_batch_loss(const Matrix& embeddings, const std::vector<Triplet>& triplets, double margin) {
  TripletBatchLoss out;
  out.grad = Matrix(embeddings.rows(), embeddings.cols());
  if (triplets.empty()) return out;
  const double inv = 1.0 / static_cast<double>(triplets.size());
  const std::size_t k = embeddings.cols();
  for (const auto& t : triplets) {
    auto a = embeddings.row(t.anchor);
    auto p = embeddings.row(t.positive);
    auto n = embeddings.row(t.negative);
    const double d_ap = distance_euclidean(a, p);
    const double d_an = distance_euclidean(a, n);
    const double l = d_ap - d_an + margin;
    if (!(l > 0.0)) {
      if (std::isnan(l)) out.loss = l;
      continue;
    }
    out.loss += l * inv;
    ++out.active;
    auto ga = out.grad.row(t.anchor);
    auto gp = out.grad.row(t.positive);
    auto gn = out.grad.row(t.negative);
    // d|x|/dx = x/|x|; zero distance contributes the zero subgradient.
    const double sp = d_ap > 0.0 ? inv / d_ap : 0.0;
    const double sn = d_an > 0.0 ? inv / d_an : 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      const double dap = (a[j] - p[j]) * sp;
      const double dan = (a[j] - n[j]) * sn;
      ga[j] += dap - dan;
      gp[j] -= dap;
      gn[j] += dan;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, const AdamConfig& config) {
  if (params.size() != grads.size()) throw Error(Errc::DimensionMismatch, "gradient size");
  if (state.m.size() != params.size()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = config.beta1 * state.m[i] + (1.0 - config.beta1) * g;
    state.v[i] = config.beta2 * state.v[i] + (1.0 - config.beta2) * g * g;
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    params[i] -= config.learning_rate * mhat / (std::sqrt(vhat) + config.epsilon);
  }
}

void TrainConfig::validate() const {
  if (!(margin > 0.0)) throw Error(Errc::BadConfig, "margin must be positive");
  if (!(split_fraction > 0.0 && split_fraction < 1.0)) throw Error(Errc::BadConfig, "split fraction outside (0,1)");
  if (batch_pairs < 2) throw Error(Errc::BadConfig, "batch must hold at least two pairs");
  if (embedding_dim == 0) throw Error(Errc::BadConfig, "embedding dimension must be positive");
  if (!(adam.learning_rate > 0.0)) throw Error(Errc::BadConfig, "learning rate must be positive");
  if (plateau_window == 0) throw Error(Errc::BadConfig, "plateau window must be positive");
}

std::string epoch_log_json(const EpochLog& log) {
  nlohmann::ordered_json j;
  j["epoch"] = log.epoch;
  j["mean_loss"] = log.mean_loss;
  j["active_fraction"] = log.active_fraction;
  j["triplets"] = log.triplets;
  j["mode"] = mining_mode_name(log.mode);
  j["switched_to_hard"] = log.switched_to_hard;
  return j.dump();
}

namespace {

Matrix gather_rows(const Matrix& features, const BatchLayout& layout) {
  Matrix batch(layout.rows(), features.cols());
  for (std::size_t r = 0; r < layout.rows(); ++r) {
    auto src = features.row(layout.source_of_row[r]);
    std::copy(src.begin(), src.end(), batch.row(r).begin());
  }
  return batch;
}

}  // namespace

TrainResult train(const std::vector<TrainingPair>& pairs, const Matrix& features, const TrainConfig& config,
                  const EpochCallback& on_epoch, const EmbeddingModel* initial) {
  config.validate();
  if (pairs.empty()) throw Error(Errc::EmptyPairSet, "no training pairs");
  if (pairs.size() < 2) throw Error(Errc::BatchTooSmall, "training needs at least two pairs");

  TrainResult result;
  if (initial) {
    result.model = *initial;
  } else {
    ModelSpec spec;
    spec.layers.push_back(features.cols());
    spec.layers.insert(spec.layers.end(), config.hidden_layers.begin(), config.hidden_layers.end());
    spec.layers.push_back(config.embedding_dim);
    spec.normalize_output = config.normalize_output;
    result.model = init_model(spec, config.seed);
  }
  if (result.model.input_dim() != features.cols())
    throw Error(Errc::DimensionMismatch, "model input dimension does not match features");

  MiningMode mode = config.mining == MiningMode::Hard ? MiningMode::Hard : MiningMode::SemiHard;
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(config.seed ^ 0x747261696eULL);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    EmbeddingModel last_good = result.model;
    std::shuffle(order.begin(), order.end(), rng);

    double loss_sum = 0.0;
    std::size_t batches = 0;
    std::size_t triplets = 0;
    std::size_t active = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_pairs) {
      const std::size_t end = std::min(order.size(), start + config.batch_pairs);
      if (end - start < 2) break;
      const auto layout = make_batch_layout(pairs, std::span(order).subspan(start, end - start));
      const auto pass = result.model.forward_train(gather_rows(features, layout));
      const auto mined = mine_batch(pass.output, layout, mode, config.margin);
      if (mined.empty()) continue;
      auto loss = triplet_batch_loss(pass.output, mined, config.margin);
      if (!std::isfinite(loss.loss))
        throw DivergedError("non-finite loss in epoch " + std::to_string(epoch), std::move(last_good));
      loss_sum += loss.loss;
      ++batches;
      triplets += mined.size();
      active += loss.active;
      if (loss.active == 0) continue;
      auto grads = backward(result.model, pass, loss.grad, false);
      adam_step(result.model.parameters(), grads.parameters, result.optimizer, config.adam);
    }
    if (!result.model.all_finite())
      throw DivergedError("non-finite parameters after epoch " + std::to_string(epoch), std::move(last_good));

    EpochLog log;
    log.epoch = epoch;
    log.mode = mode;
    log.mean_loss = batches ? loss_sum / static_cast<double>(batches) : 0.0;
    log.triplets = triplets;
    log.active_fraction = triplets ? static_cast<double>(active) / static_cast<double>(triplets) : 0.0;

    if (config.mining == MiningMode::Curriculum && mode == MiningMode::SemiHard &&
        result.log.size() >= config.plateau_window) {
      const double past = result.log[result.log.size() - config.plateau_window].mean_loss;
      const double improvement = past > 0.0 ? (past - log.mean_loss) / past : 0.0;
      if (improvement < config.plateau_threshold) {
        mode = MiningMode::Hard;
        log.switched_to_hard = true;
      }
    }
    result.log.push_back(log);
    if (on_epoch) on_epoch(log, result.model);
  }
  return result;
}

double margin_satisfaction(const EmbeddingModel& model, const std::vector<TrainingPair>& pairs,
                           const Matrix& features, double margin, std::size_t batch_pairs, std::uint64_t seed) {
  if (pairs.size() < 2) throw Error(Errc::EmptyPairSet, "need at least two pairs");
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t total = 0, satisfied = 0;
  for (std::size_t start = 0; start + 2 <= order.size(); start += batch_pairs) {
    const std::size_t end = std::min(order.size(), start + batch_pairs);
    const auto layout = make_batch_layout(pairs, std::span(order).subspan(start, end - start));
    const auto emb = model.forward(gather_rows(features, layout));
    for (const auto& t : mine_batch(emb, layout, MiningMode::Hard, margin)) {
      ++total;
      if (t.d_ap + margin < t.d_an) ++satisfied;
    }
  }
  return total ? static_cast<double>(satisfied) / static_cast<double>(total) : 0.0;
}

namespace {
constexpr std::array<std::uint8_t, 4> kOptimizerMagic = {'U', 'X', 'O', 'S'};
}

Bytes save_checkpoint(const EmbeddingModel& model, const AdamState& state) {
  Bytes out = save_model(model);
  out.insert(out.end(), kOptimizerMagic.begin(), kOptimizerMagic.end());
  put_u64(out, state.step);
  put_u64(out, state.m.size());
  for (double v : state.m) put_f64(out, v);
  for (double v : state.v) put_f64(out, v);
  return out;
}

std::pair<EmbeddingModel, AdamState> load_checkpoint(ByteView bytes) {
  EmbeddingModel model = load_model(bytes);
  const std::size_t model_size = 12 + get_u32(bytes, 8) + model.parameters().size() * 8;
  if (bytes.size() < model_size + 20 ||
      !std::equal(kOptimizerMagic.begin(), kOptimizerMagic.end(), bytes.begin() + model_size))
    throw Error(Errc::UnsupportedFormat, "checkpoint lacks optimizer state");
  AdamState state;
  state.step = get_u64(bytes, model_size + 4);
  const std::size_t n = get_u64(bytes, model_size + 12);
  if (n != 0 && n != model.parameters().size()) throw Error(Errc::BadRecord, "optimizer state size");
  std::size_t off = model_size + 20;
  if (bytes.size() != off + 16 * n) throw Error(Errc::Truncated, "optimizer state blob");
  state.m.resize(n);
  state.v.resize(n);
  for (std::size_t i = 0; i < n; ++i) state.m[i] = get_f64(bytes, off + 8 * i);
  off += 8 * n;
  for (std::size_t i = 0; i < n; ++i) state.v[i] = get_f64(bytes, off + 8 * i);
  return {std::move(model), std::move(state)};
}

}  // namespace utxoshard
