// SPDX-License-Identifier: Apache-2.0
//
// tracehls: compiles declarative model descriptions to fully scheduled
// Verilog with built-in behavioral verification.
#include <cstdint>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tracehls/pipeline.hpp"

namespace {

std::vector<int64_t> parse_stages(const std::string& text) {
  std::vector<int64_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(std::stoll(item));
  return out;
}

void add_config_options(CLI::App* cmd, thls::CompileConfig& config,
                        std::string& precision, std::string& stages) {
  cmd->add_option("--model", config.model_path, "model description (JSON)")
      ->required();
  cmd->add_option("--weights", config.weights_path,
                  "weight blob (little-endian f64)")
      ->required();
  cmd->add_option("--precision", precision,
                  "floating-point format as we,wf (default 5,11)");
  cmd->add_option("--exp-order", config.exp_order,
                  "Taylor order for exp (default 6)");
  cmd->add_option("--clock-ns", config.clock_ns,
                  "target clock period in ns (default 10)");
  cmd->add_option("--stages", stages,
                  "pipeline stage boundaries, e.g. 480,960");
  cmd->add_option("--resources", config.resources_path,
                  "resource/latency config (JSON)");
  cmd->add_option("--seed", config.seed, "seed for test vectors (default 0)");
  cmd->add_option("-o,--out", config.out_dir, "output directory");
  cmd->add_flag("--emit-ir", config.emit_ir, "also write the textual IR");
  cmd->add_flag("--emit-dfg", config.emit_dfg, "also write the dataflow dump");
  cmd->add_flag("!--no-hoist-globals", config.transforms.hoist_globals,
                "disable weight hoisting");
  cmd->add_flag("!--no-recompose-relu", config.transforms.recompose_relu,
                "disable relu recomposition");
  cmd->add_flag("!--no-fuse-mac", config.transforms.fuse_mac,
                "disable multiply-add fusion");
  cmd->add_flag("!--no-reduce-fors", config.transforms.reduce_fors,
                "disable reduction-tree rebalancing");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tracehls: loop-nest to fully scheduled Verilog compiler"};
  app.require_subcommand(1);

  thls::CompileConfig config;
  std::string precision = "5,11";
  std::string stages;
  int n_vectors = 16;

  CLI::App* compile =
      app.add_subcommand("compile", "compile a model to RTL artifacts");
  add_config_options(compile, config, precision, stages);

  CLI::App* verify = app.add_subcommand(
      "verify", "check cosim against numeric evaluation on random vectors");
  add_config_options(verify, config, precision, stages);
  verify->add_option("--vectors", n_vectors, "number of vectors (default 16)");

  CLI::App* report =
      app.add_subcommand("report", "print reports without emitting RTL");
  add_config_options(report, config, precision, stages);

  CLI11_PARSE(app, argc, argv);

  try {
    config.precision = thls::FloatFormat::parse(precision);
    if (!stages.empty()) config.stage_boundaries = parse_stages(stages);
  } catch (const std::exception& e) {
    std::cerr << "bad arguments: " << e.what() << "\n";
    return 2;
  }

  if (compile->parsed()) return thls::cmd_compile(config);
  if (verify->parsed()) return thls::cmd_verify(config, n_vectors);
  if (report->parsed()) return thls::cmd_report(config);
  return 2;
}
