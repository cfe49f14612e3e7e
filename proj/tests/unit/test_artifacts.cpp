#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "support.hpp"
#include "utxoshard/artifacts.hpp"
#include "utxoshard/pipeline.hpp"

using namespace utxoshard;

TEST_CASE("sectioned config parsing and typed getters") {
  const auto cfg = RunConfig::parse(
      "# comment\n[gen]\ncommunities = 4\np_intra = 0.75\n\n[train]\nhidden = 64, 32\nnormalize = true\n"
      "mining = hard\n");
  CHECK(cfg.get_uint("gen.communities") == 4);
  CHECK(cfg.get_double("gen.p_intra") == 0.75);
  CHECK(cfg.get_size_list("train.hidden") == std::vector<std::size_t>{64, 32});
  CHECK(cfg.get_bool("train.normalize"));
  CHECK(cfg.get_string("train.mining") == "hard");
  CHECK(cfg.get_int("gen.missing", -3) == -3);
  CHECK_FALSE(cfg.contains("gen.missing"));

  const auto g = gen_config_from(cfg);
  CHECK(g.n_communities == 4);
  CHECK(g.p_intra == 0.75);
  CHECK(g.txs_per_community == GenConfig{}.txs_per_community);
  const auto t = train_config_from(cfg);
  CHECK(t.hidden_layers == std::vector<std::size_t>{64, 32});
  CHECK(t.mining == MiningMode::Hard);
  CHECK(t.normalize_output);
}

TEST_CASE("bad values are config errors") {
  auto cfg = RunConfig::parse("[a]\nn = 12x\nb = maybe\nl = 1,,2\nneg = -4\n");
  CHECK_THROWS_AS(cfg.get_uint("a.n"), Error);
  CHECK_THROWS_AS(cfg.get_bool("a.b"), Error);
  CHECK_THROWS_AS(cfg.get_size_list("a.l"), Error);
  CHECK_THROWS_AS(cfg.get_uint("a.neg"), Error);
  CHECK(cfg.get_int("a.neg") == -4);
  CHECK_THROWS_AS(RunConfig::parse("[unterminated\nx = 1\n"), Error);
  CHECK_THROWS_AS(RunConfig::load("/nonexistent/config.ini"), Error);
  CHECK_THROWS_AS(parse_size_list(""), Error);
}

TEST_CASE("merge overrides and to_ini is canonical") {
  auto base = RunConfig::defaults();
  CHECK(base.get_uint("train.epochs") == 10);
  CHECK(base.get_size_list("cluster.shards") == std::vector<std::size_t>{2, 5, 10, 20, 50, 100});
  base.merge(RunConfig::parse("[train]\nepochs = 3\n[extra]\nk = v\n"));
  CHECK(base.get_uint("train.epochs") == 3);
  CHECK(base.get_string("extra.k") == "v");
  const auto again = RunConfig::parse(base.to_ini());
  CHECK(again.values() == base.values());
  CHECK(again.to_ini() == base.to_ini());
}

TEST_CASE("run records") {
  const auto dir = testsupport::scratch_dir("artifacts_record");
  write_text_file(dir + "/in.txt", "abc");
  CHECK(file_sha256(dir + "/in.txt") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  RunManifest m;
  m.command = "demo";
  m.add_input("source", dir + "/in.txt");
  m.hashes["vocab"] = "00ff";
  write_run_record(dir, m, RunConfig::parse("[x]\ny = 1\n"));
  const auto manifest = nlohmann::json::parse(read_file(dir + "/demo.manifest.json"));
  CHECK(manifest["command"] == "demo");
  CHECK(manifest["tool_version"] == tool_version());
  CHECK(manifest["inputs"][0]["sha256"] == file_sha256(dir + "/in.txt"));
  CHECK(manifest["hashes"]["vocab"] == "00ff");
  CHECK(RunConfig::load(dir + "/demo.config.ini").get_uint("x.y") == 1);
  CHECK(!tool_version().empty());
}
