#include "commands.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <memory>

#include <spdlog/spdlog.h>

#include "utxoshard/datagen.hpp"
#include "utxoshard/pipeline.hpp"

namespace utxoshard::cli {

namespace {

struct LoadedStream {
  fs::path path;
  std::vector<RawTransaction> txs;
};

LoadedStream load_stream(const Workspace& ws, const CommandInput& input, ParseOptions parse = {}) {
  LoadedStream s;
  s.path = input.in.empty() ? ws.find_stream() : fs::path(input.in);
  if (!fs::exists(s.path)) throw Error(Errc::Io, "stream file not found: " + s.path.string());
  auto contents = read_tx_stream(s.path.string(), tx_format_from_path(s.path.string()), StreamOptions{false, parse});
  for (std::size_t i = 0; i < contents.errors.size() && i < 5; ++i)
    spdlog::warn("record {} (line {}): {}", contents.errors[i].record, contents.errors[i].line,
                 contents.errors[i].message);
  if (!contents.errors.empty()) spdlog::warn("{} malformed records skipped", contents.errors.size());
  s.txs = std::move(contents.txs);
  spdlog::info("read {} transactions from {}", s.txs.size(), s.path.string());
  return s;
}

OpCodeVocabulary load_vocab(const fs::path& p) { return OpCodeVocabulary::from_json(read_text(p)); }
FeatureScaler load_scaler(const fs::path& p) { return FeatureScaler::from_json(read_text(p)); }
EmbeddingModel load_model_file(const fs::path& p) { return load_model(read_file(p.string())); }

fs::path model_path(const Workspace& ws, const CommandInput& input) {
  return input.model.empty() ? ws.model() : fs::path(input.model);
}

struct FeatureSet {
  FeatureMeta meta;
  FeatureTable table;
};

FeatureSet load_features(const Workspace& ws, const CommandInput& input, RunManifest& manifest) {
  const fs::path features = input.features.empty() ? ws.features() : fs::path(input.features);
  const fs::path meta_path = features.parent_path() / "features.meta.json";
  const fs::path outpoints = features.parent_path() / "outpoints.bin";
  FeatureSet f;
  f.meta = FeatureMeta::from_json(read_text(meta_path));
  Matrix m = decode_feature_matrix(read_file(features.string()));
  auto ops = decode_outpoints(read_file(outpoints.string()));
  if (m.cols() != f.meta.dimension || m.rows() != f.meta.rows)
    throw Error(Errc::DimensionMismatch, "feature file does not match its metadata");
  f.table = FeatureTable(std::move(m), std::move(ops));
  manifest.add_input("features", features);
  manifest.add_input("outpoints", outpoints);
  manifest.hashes["vocab_hash"] = f.meta.vocab_hash;
  manifest.hashes["scaler_hash"] = f.meta.scaler_hash;
  manifest.hashes["dataset_id"] = f.meta.dataset_id;
  return f;
}

std::vector<PolicyKind> policy_list(const RunConfig& cfg) {
  std::vector<PolicyKind> out;
  std::string text = cfg.get_string("simulate.policies", "learned");
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find(',', start);
    if (end == std::string::npos) end = text.size();
    std::string item = text.substr(start, end - start);
    item.erase(0, item.find_first_not_of(' '));
    item.erase(item.find_last_not_of(' ') + 1);
    if (!item.empty()) out.push_back(parse_policy_kind(item));
    start = end + 1;
  }
  if (out.empty()) throw Error(Errc::BadConfig, "no policies selected");
  return out;
}

// Learned-routing bundle with every cross-artifact hash verified.
struct LearnedBundle {
  std::shared_ptr<const EmbeddingModel> model;
  std::shared_ptr<const OpCodeVocabulary> vocab;
  std::shared_ptr<const FeatureScaler> scaler;
  std::string model_hash;
};

LearnedBundle load_learned(const Workspace& ws, const CommandInput& input, RunManifest& manifest) {
  LearnedBundle b;
  const auto mp = model_path(ws, input);
  b.model = std::make_shared<EmbeddingModel>(load_model_file(mp));
  b.vocab = std::make_shared<OpCodeVocabulary>(load_vocab(ws.vocab()));
  b.scaler = std::make_shared<FeatureScaler>(load_scaler(ws.scaler()));
  require_same_hash("vocabulary", b.model->provenance().vocab_hash, b.vocab->hash());
  require_same_hash("scaler", b.model->provenance().scaler_hash, b.scaler->hash());
  b.model_hash = model_hash(*b.model);
  manifest.add_input("model", mp);
  manifest.add_input("vocab", ws.vocab());
  manifest.add_input("scaler", ws.scaler());
  manifest.hashes["model_hash"] = b.model_hash;
  return b;
}

const std::unordered_set<Hash32, Hash32Hasher>* measure_set(const Workspace& ws, const CommandInput& input,
                                                             std::unordered_set<Hash32, Hash32Hasher>& storage) {
  if (input.all_outputs || !fs::exists(ws.held_out())) {
    spdlog::info("measuring every transaction");
    return nullptr;
  }
  storage = read_hash_list(ws.held_out());
  spdlog::info("measuring {} held-out child transactions", storage.size());
  return &storage;
}

}  // namespace

int run_gen(const RunConfig& cfg, const Workspace& ws) {
  const GenConfig g = gen_config_from(cfg);
  const TxFormat format = parse_tx_format(cfg.get_string("gen.format", "bin"));
  spdlog::info("generating {} communities x {} transactions (seed {})", g.n_communities, g.txs_per_community, g.seed);
  const GeneratedStream stream = generate(g);
  fs::create_directories(ws.dir);

  const auto path = ws.stream(format);
  write_tx_stream(path.string(), format, stream.txs);
  write_text_file(ws.labels().string(), stream.labels_jsonl());
  std::string spends;
  for (const auto& s : stream.spends)
    spends += "{\"parent\":\"" + s.parent.to_string() + "\",\"child\":\"" + s.child.to_hex() + "\"}\n";
  write_text_file(ws.spends().string(), spends);
  spdlog::info("{} transactions ({} roots, {} minted on exhaustion)", stream.txs.size(), stream.roots.size(),
               stream.exhausted_count());

  RunManifest manifest;
  manifest.command = "gen";
  manifest.add_output("stream", path);
  manifest.add_output("labels", ws.labels());
  manifest.add_output("spends", ws.spends());
  manifest.hashes["dataset_id"] = stream_id(stream.txs);
  write_run_record(ws.dir, manifest, cfg);
  return 0;
}

int run_decode(const RunConfig&, const Workspace& ws, const CommandInput& input) {
  const ParseOptions parse{input.strict};
  if (!input.hex.empty()) {
    std::cout << to_json_line(decode_transaction_hex(input.hex, parse)) << '\n';
    return 0;
  }
  const fs::path path = input.in.empty() ? ws.find_stream() : fs::path(input.in);
  TxStreamReader reader(path.string(), tx_format_from_path(path.string()), StreamOptions{false, parse});
  std::size_t ok = 0;
  while (auto tx = reader.next()) {
    std::cout << to_json_line(*tx) << '\n';
    ++ok;
  }
  for (const auto& e : reader.errors())
    spdlog::error("record {} (line {}, offset {}): {}", e.record, e.line, e.offset, e.message);
  spdlog::info("decoded {} of {} records", ok, reader.records_read());
  return reader.errors().empty() ? 0 : 2;
}

int run_build_vocab(const RunConfig& cfg, const Workspace& ws, const CommandInput& input) {
  const auto stream = load_stream(ws, input);
  const auto vocab = build_vocabulary(stream.txs, cfg.get_uint("vocab.size", kDefaultVocabularySize),
                                      stream_id(stream.txs));
  fs::create_directories(ws.dir);
  write_text_file(ws.vocab().string(), vocab.to_json());
  spdlog::info("vocabulary: {} opcodes + other, hash {}", vocab.entries().size(), vocab.hash());

  RunManifest manifest;
  manifest.command = "build-vocab";
  manifest.add_input("stream", stream.path);
  manifest.add_output("vocab", ws.vocab());
  manifest.hashes["vocab_hash"] = vocab.hash();
  write_run_record(ws.dir, manifest, cfg);
  return 0;
}

int run_featurize(const RunConfig& cfg, const Workspace& ws, const CommandInput& input) {
  const auto stream = load_stream(ws, input);
  const std::string id = stream_id(stream.txs);
  RunManifest manifest;
  manifest.command = "featurize";
  manifest.add_input("stream", stream.path);

  OpCodeVocabulary vocab;
  const fs::path vocab_src = input.vocab.empty() ? ws.vocab() : fs::path(input.vocab);
  if (fs::exists(vocab_src)) {
    vocab = load_vocab(vocab_src);
    manifest.add_input("vocab", vocab_src);
    spdlog::info("using vocabulary {} ({})", vocab_src.string(), vocab.hash());
  } else {
    vocab = build_vocabulary(stream.txs, cfg.get_uint("vocab.size", kDefaultVocabularySize), id);
    spdlog::info("built vocabulary {}", vocab.hash());
  }
  fs::create_directories(ws.dir);
  if (vocab_src != ws.vocab() || !fs::exists(ws.vocab())) write_text_file(ws.vocab().string(), vocab.to_json());

  const FeatureTable raw = FeatureTable::build(stream.txs, vocab);
  const FeatureScaler scaler = fit_scaler(raw.matrix(), FeatureLayout{vocab.bag_size()}, id);
  Matrix scaled = raw.matrix();
  for (std::size_t r = 0; r < scaled.rows(); ++r) scaler.transform(scaled.row(r));

  write_file(ws.features().string(), encode_feature_matrix(scaled));
  write_file(ws.outpoints().string(), encode_outpoints(raw.outpoints()));
  write_text_file(ws.scaler().string(), scaler.to_json());
  const FeatureMeta meta{scaled.cols(), scaled.rows(), vocab.hash(), scaler.hash(), id};
  write_text_file(ws.features_meta().string(), meta.to_json());
  spdlog::info("features: {} outpoints x {} dimensions", meta.rows, meta.dimension);

  manifest.add_output("vocab", ws.vocab());
  manifest.add_output("features", ws.features());
  manifest.add_output("outpoints", ws.outpoints());
  manifest.add_output("scaler", ws.scaler());
  manifest.add_output("features_meta", ws.features_meta());
  manifest.hashes["vocab_hash"] = meta.vocab_hash;
  manifest.hashes["scaler_hash"] = meta.scaler_hash;
  manifest.hashes["dataset_id"] = id;
  write_run_record(ws.dir, manifest, cfg);
  return 0;
}

int run_train(const RunConfig& cfg, const Workspace& ws, const CommandInput& input) {
  RunManifest manifest;
  manifest.command = "train";
  const auto stream = load_stream(ws, input);
  manifest.add_input("stream", stream.path);
  auto features = load_features(ws, input, manifest);
  const auto vocab = load_vocab(ws.vocab());
  const auto scaler = load_scaler(ws.scaler());
  manifest.add_input("vocab", ws.vocab());
  require_same_hash("vocabulary", features.meta.vocab_hash, vocab.hash());
  require_same_hash("scaler", features.meta.scaler_hash, scaler.hash());
  require_same_hash("dataset", features.meta.dataset_id, stream_id(stream.txs));

  const TrainConfig tc = train_config_from(cfg);
  tc.validate();
  const PairSet pairs = build_pairs(stream.txs, PairOptions{tc.max_children, tc.seed});
  const DatasetSplit split = split_dataset(pairs.pairs, tc.split_fraction, tc.seed);
  const auto train_pairs = bind_pairs(split.train, features.table);
  spdlog::info("{} pairs ({} train / {} held out), {} orphan inputs", pairs.pairs.size(), split.train.size(),
               split.test.size(), pairs.orphan_inputs);

  std::string log_text;
  auto on_epoch = [&](const EpochLog& log, const EmbeddingModel&) {
    log_text += epoch_log_json(log) + "\n";
    spdlog::info("epoch {:>3}  loss {:.5f}  active {:.3f}  {}{}", log.epoch, log.mean_loss, log.active_fraction,
                 mining_mode_name(log.mode), log.switched_to_hard ? "  -> hard" : "");
  };
  fs::create_directories(ws.dir);
  TrainResult result;
  try {
    result = train(train_pairs, features.table.matrix(), tc, on_epoch);
  } catch (const DivergedError& e) {
    EmbeddingModel last = e.last_good();
    last.provenance() = {tc.seed, vocab.hash(), scaler.hash()};
    write_file((ws.dir / "model.diverged.bin").string(), save_model(last));
    write_text_file(ws.train_log().string(), log_text);
    throw;
  }
  result.model.provenance() = {tc.seed, vocab.hash(), scaler.hash()};

  std::unordered_set<Hash32, Hash32Hasher> held_out;
  for (const auto& p : split.test) held_out.insert(p.child_txid);
  write_file(ws.model().string(), save_model(result.model));
  write_file(ws.checkpoint().string(), save_checkpoint(result.model, result.optimizer));
  write_text_file(ws.train_log().string(), log_text);
  write_hash_list(ws.held_out(), held_out);

  manifest.add_output("model", ws.model());
  manifest.add_output("checkpoint", ws.checkpoint());
  manifest.add_output("train_log", ws.train_log());
  manifest.add_output("held_out", ws.held_out());
  manifest.hashes["model_hash"] = model_hash(result.model);
  write_run_record(ws.dir, manifest, cfg);
  spdlog::info("model {} written", manifest.hashes["model_hash"]);
  return 0;
}

int run_cluster(const RunConfig& cfg, const Workspace& ws, const CommandInput& input) {
  RunManifest manifest;
  manifest.command = "cluster";
  const auto mp = model_path(ws, input);
  const auto model = load_model_file(mp);
  manifest.add_input("model", mp);
  auto features = load_features(ws, input, manifest);
  require_same_hash("vocabulary", features.meta.vocab_hash, model.provenance().vocab_hash);
  const std::string mh = model_hash(model);
  manifest.hashes["model_hash"] = mh;

  const Matrix emb = embed_rows(model, features.table.matrix());
  const auto options = kmeans_options_from(cfg);
  const auto seed = cfg.get_uint("cluster.seed", 7);
  fs::create_directories(ws.dir / "shards");
  for (std::size_t n : cfg.get_size_list("cluster.shards", {10})) {
    ShardModel sm = fit_kmeans(emb, n, seed, options);
    sm.model_hash = mh;
    sm.dataset_id = features.meta.dataset_id;
    write_file(ws.shard_model(n).string(), save_shard_model(sm));
    manifest.add_output("shards_n" + std::to_string(n), ws.shard_model(n));
    spdlog::info("n={:>4}: inertia {:.6g} after {} iterations", n, sm.inertia_history().back(),
                 sm.inertia_history().size());
  }
  write_run_record(ws.dir, manifest, cfg);
  return 0;
}

int run_simulate(const RunConfig& cfg, const Workspace& ws, const CommandInput& input) {
  RunManifest manifest;
  manifest.command = "simulate";
  const auto stream = load_stream(ws, input);
  manifest.add_input("stream", stream.path);
  const auto policies = policy_list(cfg);
  const auto shards = cfg.get_size_list("simulate.shards", {10});
  const std::uint64_t seed = cfg.get_uint("simulate.policy_seed", 11);

  std::unordered_set<Hash32, Hash32Hasher> held_out;
  SimOptions options;
  options.k_max = cfg.get_uint("simulate.k_max", 9);
  options.measure = measure_set(ws, input, held_out);
  if (options.measure) manifest.add_input("held_out", ws.held_out());

  std::optional<LearnedBundle> learned;
  if (std::find(policies.begin(), policies.end(), PolicyKind::Learned) != policies.end())
    learned = load_learned(ws, input, manifest);

  fs::create_directories(ws.dir / "reports");
  std::vector<SimReport> reports;
  for (auto kind : policies) {
    for (std::size_t n : shards) {
      std::optional<AllocationPolicy> policy;
      if (kind == PolicyKind::Learned) {
        auto sm = std::make_shared<ShardModel>(load_shard_model(read_file(ws.shard_model(n).string())));
        require_same_hash("shard model's embedding model", sm->model_hash, learned->model_hash);
        manifest.add_input("shards_n" + std::to_string(n), ws.shard_model(n));
        const LearnedRouting routing{sm, learned->model, learned->vocab, learned->scaler};
        policy = make_policy(kind, n, seed, &routing);
      } else {
        policy = make_policy(kind, n, seed);
      }
      reports.push_back(simulate(stream.txs, *policy, n, options));
      const auto path = ws.report(policy_kind_name(kind), n);
      write_text_file(path.string(), reports.back().to_json());
      manifest.add_output(std::string(policy_kind_name(kind)) + "_n" + std::to_string(n), path);
      spdlog::info("{} n={}: acc@0 {:.4f}", policy_kind_name(kind), n, reports.back().accuracy(0));
    }
  }
  std::cout << summary_table(reports);
  write_run_record(ws.dir, manifest, cfg);
  return 0;
}

int run_eval(const RunConfig& cfg, const Workspace& ws, const CommandInput& input) {
  RunManifest manifest;
  manifest.command = "eval";
  const auto stream = load_stream(ws, input);
  manifest.add_input("stream", stream.path);
  auto features = load_features(ws, input, manifest);
  const auto vocab = std::make_shared<OpCodeVocabulary>(load_vocab(ws.vocab()));
  const auto scaler = std::make_shared<FeatureScaler>(load_scaler(ws.scaler()));
  require_same_hash("vocabulary", features.meta.vocab_hash, vocab->hash());
  require_same_hash("scaler", features.meta.scaler_hash, scaler->hash());
  require_same_hash("dataset", features.meta.dataset_id, stream_id(stream.txs));
  const TrainConfig tc = train_config_from(cfg);

  std::shared_ptr<EmbeddingModel> model;
  if (input.untrained) {
    ModelSpec spec;
    spec.layers.push_back(features.meta.dimension);
    spec.layers.insert(spec.layers.end(), tc.hidden_layers.begin(), tc.hidden_layers.end());
    spec.layers.push_back(tc.embedding_dim);
    spec.normalize_output = tc.normalize_output;
    model = std::make_shared<EmbeddingModel>(init_model(spec, tc.seed));
    model->provenance() = {tc.seed, vocab->hash(), scaler->hash()};
    spdlog::info("evaluating an untrained model (seed {})", tc.seed);
  } else {
    const auto mp = model_path(ws, input);
    model = std::make_shared<EmbeddingModel>(load_model_file(mp));
    manifest.add_input("model", mp);
    require_same_hash("vocabulary", model->provenance().vocab_hash, vocab->hash());
  }
  manifest.hashes["model_hash"] = model_hash(*model);

  const PairSet pairs = build_pairs(stream.txs, PairOptions{tc.max_children, tc.seed});
  const DatasetSplit split = split_dataset(pairs.pairs, tc.split_fraction, tc.seed);
  const auto test_pairs = bind_pairs(split.test, features.table);
  const auto diag = embedding_diagnostics(test_pairs, features.table.matrix(), *model,
                                          cfg.get_uint("eval.anchors", 6), cfg.get_uint("eval.seed", 7));
  spdlog::info("held-out positive cosine mean {:.4f} (median {:.4f}), non-positive mean {:.4f}",
               diag.positive_cosine_stats.mean, diag.positive_cosine_stats.median,
               diag.nonpositive_cosine_stats.mean);

  std::unordered_set<Hash32, Hash32Hasher> held_out;
  for (const auto& p : split.test) held_out.insert(p.child_txid);
  SimOptions options;
  options.k_max = cfg.get_uint("simulate.k_max", 9);
  if (!input.all_outputs) options.measure = &held_out;

  const Matrix emb = embed_rows(*model, features.table.matrix());
  const auto kmeans = kmeans_options_from(cfg);
  fs::create_directories(ws.dir / "eval");
  std::vector<SimReport> reports;
  for (std::size_t n : cfg.get_size_list("eval.shards", {10})) {
    auto sm = std::make_shared<ShardModel>(fit_kmeans(emb, n, cfg.get_uint("cluster.seed", 7), kmeans));
    const LearnedRouting routing{sm, model, vocab, scaler};
    SimReport r = simulate(stream.txs, AllocationPolicy::learned(routing), n, options);
    r.diagnostics = diag;
    write_text_file(ws.eval_report(n).string(), r.to_json());
    manifest.add_output("eval_n" + std::to_string(n), ws.eval_report(n));
    reports.push_back(std::move(r));
  }
  std::cout << summary_table(reports);
  write_run_record(ws.dir, manifest, cfg);
  return 0;
}

int run_report(const RunConfig& cfg, const Workspace& ws, const CommandInput& input) {
  RunManifest manifest;
  manifest.command = "report";
  const fs::path dir = input.reports.empty() ? ws.dir / "reports" : fs::path(input.reports);
  if (!fs::is_directory(dir)) throw Error(Errc::Io, "no report directory " + dir.string());

  auto collect = [&](const fs::path& d) {
    std::vector<fs::path> files;
    if (fs::is_directory(d))
      for (const auto& e : fs::directory_iterator(d))
        if (e.path().extension() == ".json") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    return files;
  };
  std::vector<SimReport> reports;
  for (const auto& f : collect(dir)) {
    reports.push_back(SimReport::from_json(read_text(f)));
    manifest.add_input("report", f);
  }
  if (reports.empty()) throw Error(Errc::Io, "no SimReports in " + dir.string());
  std::stable_sort(reports.begin(), reports.end(), [](const SimReport& a, const SimReport& b) {
    return std::tie(a.policy, a.n_shards) < std::tie(b.policy, b.n_shards);
  });

  write_text_file((ws.dir / "accuracy_curve.csv").string(), accuracy_curve_csv(accuracy_curve(reports)));
  manifest.add_output("accuracy_curve", ws.dir / "accuracy_curve.csv");

  std::string messages = "policy,n_shards,messages,transactions\n";
  for (const auto& r : reports)
    for (const auto& [m, count] : r.messages_histogram)
      messages += r.policy + "," + std::to_string(r.n_shards) + "," + std::to_string(m) + "," +
                  std::to_string(count) + "\n";
  write_text_file((ws.dir / "messages_histogram.csv").string(), messages);
  manifest.add_output("messages_histogram", ws.dir / "messages_histogram.csv");

  // Embedding histograms come from eval output when present.
  std::optional<Diagnostics> diag;
  for (const auto& f : collect(ws.dir / "eval")) {
    auto r = SimReport::from_json(read_text(f));
    if (r.diagnostics) {
      diag = r.diagnostics;
      manifest.add_input("eval", f);
      break;
    }
  }
  if (!diag)
    for (const auto& r : reports)
      if (r.diagnostics) diag = r.diagnostics;
  if (diag) {
    auto emit = [&](const std::string& name, const Histogram& h) {
      write_text_file((ws.dir / name).string(), h.to_csv());
      manifest.add_output(name, ws.dir / name);
    };
    emit("positive_cosine.csv", diag->positive_cosine);
    emit("positive_euclidean.csv", diag->positive_euclidean);
    for (std::size_t i = 0; i < diag->anchors.size(); ++i)
      emit("anchor_" + std::to_string(i) + "_cosine.csv", diag->anchors[i].cosine);
  } else {
    spdlog::warn("no embedding diagnostics found; run eval for the cosine histograms");
  }

  const std::string table = summary_table(reports);
  write_text_file((ws.dir / "summary.txt").string(), table);
  manifest.add_output("summary", ws.dir / "summary.txt");
  std::cout << table;
  write_run_record(ws.dir, manifest, cfg);
  return 0;
}

}  // namespace utxoshard::cli
