// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "tracehls/interp.hpp"
#include "tracehls/ir.hpp"

namespace thls {

struct OperatorSpec {
  int64_t latency = 0;           // cycles until result is available
  int64_t initiation_interval = 1;  // cycles between issues to one instance
};

// Per-kind operator timing and capacity. A missing capacity entry means
// unbounded (one instance per node).
struct ResourceModel {
  std::map<ArithKind, OperatorSpec> specs;
  std::map<ArithKind, uint64_t> capacities;

  const OperatorSpec& spec(ArithKind k) const;
  std::optional<uint64_t> capacity(ArithKind k) const;

  // Default latencies for the 10 ns clock class: addf/subf/mulf 2, fmac 3,
  // divf/sqrtf 8, compare/select/max/neg/relu combinational, II 1.
  static ResourceModel defaults();
  // Overlays {kind: {latency, ii, capacity}} from a JSON document.
  void apply_config(const std::string& json_text);
};

// Peak per-kind concurrency derived from the parallel loop structure: for
// every loop nest, each statically distinct arith statement contributes the
// product of its enclosing parallel iteration-space sizes; nests are
// combined by taking the maximum. fmac inherits the mulf bound.
std::map<ArithKind, uint64_t> compute_resource_bound(
    const LoopNestProgram& program);

struct Binding {
  std::vector<uint32_t> instance;              // per node id
  std::map<ArithKind, uint64_t> instances_used;
};

// Round-robin assignment in trace order: the j-th node of a kind binds to
// instance j mod K.
Binding bind(const DataflowGraph& dfg, const ResourceModel& model);

struct Schedule {
  std::vector<int64_t> start;  // per node id
  int64_t total_intervals = 0;
  std::vector<int64_t> stage_boundaries;  // strictly increasing, exclusive ends

  std::vector<int64_t> stage_lengths() const;
  int64_t longest_stage() const;
};

// Resource-constrained list scheduling in trace order: every node starts at
// the earliest cycle satisfying data precedence and per-instance issue
// spacing; nodes inside reduction subtrees (except roots and combinational
// ops) are then sunk as late as possible without moving the subtree's
// completion. Chains of more than four zero-latency ops in one cycle are
// broken by a forced register (start pushed one cycle).
Schedule schedule(const DataflowGraph& dfg, const Binding& binding,
                  const ResourceModel& model,
                  const std::vector<ReductionSubtree>& subtrees);

std::vector<Diagnostic> validate_schedule(const DataflowGraph& dfg,
                                          const Binding& binding,
                                          const Schedule& sched,
                                          const ResourceModel& model);

struct ScheduleError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Exhaustive branch-and-bound makespan minimizer used as a test oracle.
// Keeps the given binding but explores arbitrary issue orders per instance.
// Throws ScheduleError for graphs above 12 nodes.
Schedule brute_force_schedule(const DataflowGraph& dfg, const Binding& binding,
                              const ResourceModel& model);

// Validates and installs explicit stage boundaries on the schedule.
void assign_stages(Schedule& sched, const std::vector<int64_t>& boundaries);
// Splits the schedule into `count` stages of near-equal length.
void assign_stages(Schedule& sched, int count);

// Critical path length (sum of latencies along the longest path).
int64_t critical_path_length(const DataflowGraph& dfg,
                             const ResourceModel& model);

}  // namespace thls
