#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "commands.hpp"

namespace {

using namespace utxoshard;
using namespace utxoshard::cli;

constexpr int kValidationError = 2;
constexpr int kRuntimeError = 3;

int exit_code_for(Errc code) {
  switch (code) {
    case Errc::Io:
    case Errc::Diverged:
      return kRuntimeError;
    default:
      return kValidationError;
  }
}

struct GlobalFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string format;
  std::string shards;
  std::optional<std::size_t> k_max;
  std::string policy;
  std::string log_level;
};

// Flags win over the config file, which wins over built-in defaults.
RunConfig resolve_config(const GlobalFlags& flags, const std::string& command) {
  RunConfig cfg = RunConfig::defaults();
  if (!flags.config.empty()) cfg.merge(RunConfig::load(flags.config));
  if (!flags.out.empty()) cfg.set("global.out", flags.out);
  if (!flags.log_level.empty()) cfg.set("global.log_level", flags.log_level);
  if (!flags.format.empty()) cfg.set("gen.format", tx_format_name(parse_tx_format(flags.format)));
  if (!flags.shards.empty()) {
    parse_size_list(flags.shards);
    for (const char* key : {"cluster.shards", "simulate.shards", "eval.shards"}) cfg.set(key, flags.shards);
  }
  if (flags.k_max) cfg.set("simulate.k_max", std::to_string(*flags.k_max));
  if (!flags.policy.empty()) cfg.set("simulate.policies", flags.policy);
  if (flags.seed) {
    const std::string value = std::to_string(*flags.seed);
    if (command == "gen") cfg.set("gen.seed", value);
    else if (command == "train" || command == "eval") cfg.set("train.seed", value);
    else if (command == "cluster") cfg.set("cluster.seed", value);
    else if (command == "simulate") cfg.set("simulate.policy_seed", value);
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"utxoshard: learned UTXO shard allocation pipeline"};
  app.set_version_flag("--version", tool_version());
  app.require_subcommand(1);

  GlobalFlags flags;
  app.add_option("--config", flags.config, "Config file (sectioned key = value)")->check(CLI::ExistingFile);
  app.add_option("--seed", flags.seed, "Seed for the subcommand's random draws");
  app.add_option("--out", flags.out, "Output directory");
  app.add_option("--format", flags.format, "Stream format written by gen")
      ->check(CLI::IsMember({"hex", "bin", "jsonl"}));
  app.add_option("--shards", flags.shards, "Comma-separated shard counts, e.g. 2,5,10");
  app.add_option("--k-max", flags.k_max, "Largest probe depth K reported");
  app.add_option("--policy", flags.policy, "Comma-separated policies: learned,rand-one,rand-many,hash");
  app.add_option("--log-level", flags.log_level, "trace, debug, info, warn, error or off");

  CommandInput input;
  struct Sub {
    const char* name;
    const char* help;
    int (*run)(const RunConfig&, const Workspace&, const CommandInput&);
  };
  const Sub subs[] = {
      {"gen", "Generate a synthetic transaction stream", [](const RunConfig& c, const Workspace& w,
                                                             const CommandInput&) { return run_gen(c, w); }},
      {"decode", "Decode transactions to canonical JSON lines", run_decode},
      {"build-vocab", "Build the opcode vocabulary", run_build_vocab},
      {"featurize", "Extract and scale outpoint features", run_featurize},
      {"train", "Train the embedding model", run_train},
      {"cluster", "Fit shard centroids in embedding space", run_cluster},
      {"simulate", "Replay the stream through allocation policies", run_simulate},
      {"eval", "Embedding diagnostics and learned-policy accuracy", run_eval},
      {"report", "Merge SimReports into CSV tables", run_report},
  };
  std::vector<std::pair<CLI::App*, const Sub*>> commands;
  for (const auto& s : subs) {
    auto* sub = app.add_subcommand(s.name, s.help);
    sub->fallthrough();
    commands.emplace_back(sub, &s);
  }
  auto find = [&](const char* name) { return app.get_subcommand(name); };
  for (const char* name : {"decode", "build-vocab", "featurize", "train", "simulate", "eval"})
    find(name)->add_option("--in", input.in, "Transaction stream file");
  find("decode")->add_option("--hex", input.hex, "Decode one hex-encoded transaction");
  find("decode")->add_flag("--strict", input.strict, "Reject non-canonical encodings");
  find("featurize")->add_option("--vocab", input.vocab, "Existing vocabulary to reuse");
  for (const char* name : {"train", "cluster", "eval"})
    find(name)->add_option("--features", input.features, "Feature matrix file");
  for (const char* name : {"cluster", "simulate", "eval"})
    find(name)->add_option("--model", input.model, "Embedding model file");
  find("eval")->add_flag("--untrained", input.untrained, "Use a freshly initialised model");
  for (const char* name : {"simulate", "eval"})
    find(name)->add_flag("--all", input.all_outputs, "Measure every transaction, not only held-out children");
  find("report")->add_option("--reports", input.reports, "Directory of SimReport JSON files");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kValidationError;
  }

  auto logger = spdlog::stderr_color_mt("utxoshard");
  logger->set_pattern("[%H:%M:%S] [%^%l%$] %v");
  spdlog::set_default_logger(logger);

  for (const auto& [sub, spec] : commands) {
    if (!sub->parsed()) continue;
    try {
      const RunConfig cfg = resolve_config(flags, spec->name);
      spdlog::set_level(spdlog::level::from_str(cfg.get_string("global.log_level", "info")));
      const Workspace ws{cfg.get_string("global.out", "out")};
      return spec->run(cfg, ws, input);
    } catch (const Error& e) {
      spdlog::error("{}", e.what());
      return exit_code_for(e.code());
    } catch (const std::exception& e) {
      spdlog::error("{}", e.what());
      return kRuntimeError;
    }
  }
  return kValidationError;
}
