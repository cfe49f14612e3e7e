#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <sys/wait.h>

#include "support.hpp"
#include "utxoshard/artifacts.hpp"
#include "utxoshard/router_sim.hpp"

using namespace utxoshard;
namespace fs = std::filesystem;

namespace {

std::string text_of(const std::string& path) {
  const Bytes b = read_file(path);
  return {b.begin(), b.end()};
}

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

Run cli(const std::string& dir, const std::string& args) {
  const std::string out = dir + "/.stdout", err = dir + "/.stderr";
  const std::string cmd = std::string(UTXOSHARD_CLI) + " " + args + " >" + out + " 2>" + err;
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = text_of(out);
  r.err = text_of(err);
  return r;
}

constexpr const char* kSmallConfig = R"([gen]
communities = 3
txs_per_community = 200
roots_per_community = 5
[vocab]
size = 30
[train]
epochs = 2
batch_pairs = 32
hidden = 16
embedding = 4
[eval]
shards = 3
[cluster]
shards = 2,3
restarts = 1
[simulate]
shards = 2,3
k_max = 2
)";

const std::string& pipeline_dir() {
  static const std::string dir = [] {
    const auto d = testsupport::scratch_dir("cli_pipeline");
    write_text_file(d + "/small.ini", kSmallConfig);
    const std::string common = "--config " + d + "/small.ini --out " + d + "/ws --log-level warn ";
    for (const char* sub : {"gen", "build-vocab", "featurize", "train", "cluster", "simulate", "eval", "report"}) {
      const auto r = cli(d, common + sub);
      INFO(sub << ": " << r.err);
      REQUIRE(r.code == 0);
    }
    return d;
  }();
  return dir;
}

}  // namespace

TEST_CASE("shipped default.ini spells out the built-in defaults") {
  CHECK(RunConfig::load(UTXOSHARD_DEFAULT_INI).values() == RunConfig::defaults().values());
}

TEST_CASE("full pipeline on a small stream writes every artifact") {
  const fs::path ws = pipeline_dir() + "/ws";
  for (const char* f : {"stream.bin", "labels.jsonl", "spends.jsonl", "vocab.json", "scaler.json", "features.bin",
                        "features.meta.json", "model.bin", "checkpoint.bin", "train_log.jsonl",
                        "heldout_children.txt", "shards/n2.bin", "shards/n3.bin", "reports/learned_n3.json",
                        "reports/rand-one_n2.json", "reports/hash_n3.json", "eval/learned_n3.json",
                        "accuracy_curve.csv", "summary.txt", "positive_cosine.csv", "gen.manifest.json",
                        "train.config.ini", "simulate.manifest.json"})
    CHECK_MESSAGE(fs::exists(ws / f), f);
  const auto rep = SimReport::from_json(text_of(ws / "reports/learned_n3.json"));
  CHECK(rep.accuracy_at_k.size() == 3);
  CHECK(rep.accuracy(2) == 1.0);
  CHECK(rep.measured_inputs > 0);
  const auto ev = SimReport::from_json(text_of(ws / "eval/learned_n3.json"));
  CHECK(ev.diagnostics.has_value());
  const auto csv = text_of(ws / "accuracy_curve.csv");
  CHECK(csv.rfind("policy,n_shards,k,accuracy\n", 0) == 0);
  CHECK(RunConfig::load(ws / "train.config.ini").get_uint("train.epochs") == 2);
}

TEST_CASE("a vocabulary that no longer matches the model is refused with exit code 2") {
  const auto d = pipeline_dir();
  const auto w2 = d + "/ws2";
  fs::remove_all(w2);
  fs::copy(d + "/ws", w2, fs::copy_options::recursive);
  write_text_file(d + "/smaller.ini", "[vocab]\nsize = 12\n");
  REQUIRE(cli(d, "--config " + d + "/smaller.ini --out " + w2 + " build-vocab").code == 0);
  const auto r = cli(d, "--config " + d + "/small.ini --out " + w2 + " simulate");
  CHECK(r.code == 2);
  CHECK(r.err.find("HashMismatch") != std::string::npos);
  const auto t = cli(d, "--config " + d + "/small.ini --out " + w2 + " train");
  CHECK(t.code == 2);
}

TEST_CASE("a shard model fitted for another embedding model is refused") {
  const auto d = pipeline_dir();
  const auto w3 = d + "/ws3";
  fs::remove_all(w3);
  fs::copy(d + "/ws", w3, fs::copy_options::recursive);
  REQUIRE(cli(d, "--config " + d + "/small.ini --out " + w3 + " --seed 99 train").code == 0);
  const auto r = cli(d, "--config " + d + "/small.ini --out " + w3 + " --policy learned simulate");
  CHECK(r.code == 2);
  CHECK(r.err.find("HashMismatch") != std::string::npos);
}

TEST_CASE("decode and argument errors") {
  const auto d = testsupport::scratch_dir("cli_decode");
  const auto genesis = testsupport::fixture_lines("corpus.hex").front();
  const auto r = cli(d, "decode --hex " + genesis);
  CHECK(r.code == 0);
  CHECK(r.out.find("\"txid\":\"4a5e1e4baab89f3a32518a88c31bc87f618f76673e2cc77ab2127b7afdeda33b\"") !=
        std::string::npos);
  CHECK(cli(d, "decode --hex 0100").code == 2);
  CHECK(cli(d, "frobnicate").code == 2);
  CHECK(cli(d, "--format xml gen").code == 2);
  CHECK(cli(d, "--out " + d + "/empty simulate").code != 0);
  CHECK(cli(d, "--version").code == 0);
}
