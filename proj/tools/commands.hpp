#pragma once

#include <string>

#include "utxoshard/artifacts.hpp"
#include "workspace.hpp"

namespace utxoshard::cli {

// Per-subcommand inputs not covered by the run configuration.
struct CommandInput {
  std::string in;          // stream file (defaults to the workspace stream)
  std::string hex;         // decode: a single hex transaction
  std::string vocab;       // featurize: reuse an existing vocabulary
  std::string features;    // train: alternate feature file
  std::string model;       // eval/cluster/simulate: alternate model file
  std::string reports;     // report: directory of SimReports
  bool untrained = false;  // eval: freshly initialised model
  bool strict = false;     // decode: reject non-canonical encodings
  bool all_outputs = false;  // simulate/eval: measure every transaction
};

int run_gen(const RunConfig& cfg, const Workspace& ws);
int run_decode(const RunConfig& cfg, const Workspace& ws, const CommandInput& input);
int run_build_vocab(const RunConfig& cfg, const Workspace& ws, const CommandInput& input);
int run_featurize(const RunConfig& cfg, const Workspace& ws, const CommandInput& input);
int run_train(const RunConfig& cfg, const Workspace& ws, const CommandInput& input);
int run_cluster(const RunConfig& cfg, const Workspace& ws, const CommandInput& input);
int run_simulate(const RunConfig& cfg, const Workspace& ws, const CommandInput& input);
int run_eval(const RunConfig& cfg, const Workspace& ws, const CommandInput& input);
int run_report(const RunConfig& cfg, const Workspace& ws, const CommandInput& input);

}  // namespace utxoshard::cli
