// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tracehls/backend.hpp"
#include "tracehls/cosim.hpp"
#include "tracehls/frontend.hpp"
#include "tracehls/interp.hpp"
#include "tracehls/sched.hpp"
#include "tracehls/transforms.hpp"

namespace thls {

struct CompileConfig {
  std::string model_path;
  std::string weights_path;
  FloatFormat precision{5, 11};
  int exp_order = 6;
  double clock_ns = 10.0;
  std::vector<int64_t> stage_boundaries;
  std::string resources_path;  // optional JSON overlay
  TransformOptions transforms;
  std::string out_dir = "out";
  uint64_t seed = 0;
  bool emit_ir = false;
  bool emit_dfg = false;
};

// Everything the backend and the reports need, kept in memory.
struct CompiledDesign {
  LoopNestProgram program;  // post-hoist
  DataflowGraph dfg;        // post-transforms
  ResourceModel model;
  Binding binding;
  Schedule sched;
  std::map<std::string, std::vector<double>> weights;
  FloatFormat fmt;
  TransformStats transform_stats;
  std::string name;
};

// Frontend -> trace -> transforms -> bind -> schedule; throws on any
// diagnostic or pipeline error.
CompiledDesign run_pipeline(const CompileConfig& config);

// Same, for an already-loaded model (used by tests).
CompiledDesign run_pipeline(const ModelGraph& graph, const CompileConfig& config);

// Deterministic random input tensors for verification vector `index`.
std::map<std::string, std::vector<double>> vector_inputs(
    const CompiledDesign& design, uint64_t seed, int index);

// JSON + human-readable compile report (no timing measurements, so the
// output is byte-stable for identical configs).
std::string report_json(const CompiledDesign& design, double clock_ns);
std::string report_text(const CompiledDesign& design, double clock_ns);
std::string schedule_json(const CompiledDesign& design);

// Subcommands; return process exit codes and print via stdout/stderr.
int cmd_compile(const CompileConfig& config);
int cmd_verify(const CompileConfig& config, int n_vectors);
int cmd_report(const CompileConfig& config);

}  // namespace thls
