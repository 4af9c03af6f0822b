// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "tracehls/cosim.hpp"
#include "tracehls/interp.hpp"
#include "tracehls/sched.hpp"

namespace thls {

struct BackendError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Synthesizable top module: a binary cycle counter drives per-instance
// operand muxes and result-capture registers per the static schedule; weight
// leaves become registered constants; outputs latch at their producer's
// completion cycle; done asserts at total_intervals. Stage registers are
// inserted at every stage boundary for each value live across it.
std::string emit_rtl(const DataflowGraph& dfg, const Schedule& sched,
                     const Binding& binding, const ResourceModel& model,
                     const FloatFormat& fmt,
                     const std::map<std::string, std::vector<double>>& weights,
                     const std::string& top_name = "top");

// Behavioral simulation models for every operator kind, one module per kind
// with a pipeline depth equal to its configured latency. Bit-level semantics
// mirror the functional models in fpformat; they stand in for externally
// generated arithmetic cores and are meant for IEEE-1364 simulators.
std::string emit_operator_library(const FloatFormat& fmt,
                                  const ResourceModel& model);

struct TestbenchFiles {
  std::string testbench;
  // (relative path, contents), e.g. ("vectors/inputs.hex", ...). One
  // fmt-width hex word per line.
  std::vector<std::pair<std::string, std::string>> files;
};

// Self-checking testbench: drives n seeded random input sets and compares
// DUT outputs bitwise against fpformat-evaluated expectations.
TestbenchFiles emit_testbench(const DataflowGraph& dfg, const FloatFormat& fmt,
                              int n_vectors, uint64_t seed,
                              const std::map<std::string, std::vector<double>>& weights,
                              const std::string& top_name = "top");

// In-process Verilog-subset check over a set of sources that instantiate
// each other: balanced blocks, every identifier declared, instantiated
// modules and their port names known. Returns diagnostics (empty = clean).
std::vector<std::string> check_verilog(const std::vector<std::string>& sources);

// Deterministic seeded doubles in [-2, 2), independent of the C++ standard
// library's distribution implementations.
std::vector<double> random_inputs(uint64_t seed, size_t count);

// Stable sanitized net-name fragment for a buffer id.
std::string sanitize_name(const std::string& id);

}  // namespace thls
