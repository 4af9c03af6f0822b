// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tracehls/fpformat.hpp"
#include "tracehls/interp.hpp"
#include "tracehls/sched.hpp"

namespace thls {

struct StageLatch {
  int64_t cycle = 0;
  uint32_t value = 0;
};

// Per-cycle issue/completion record of one run of the scheduled design.
struct CycleTrace {
  int64_t total_intervals = 0;
  std::vector<std::pair<int64_t, uint32_t>> issues;       // (cycle, node)
  std::vector<std::pair<int64_t, uint32_t>> completions;  // (cycle, node)
  std::vector<StageLatch> stage_latches;                  // boundary registers
  std::map<std::string, std::vector<FPValue>> outputs;
  std::map<std::string, std::vector<double>> outputs_f64;
};

// Cycle-accurate, event-free walk of the static schedule under the bit-exact
// functional float models. Outputs are bitwise equal to
// evaluate_numeric(dfg, inputs, fp_format(fmt)).
CycleTrace simulate(const DataflowGraph& dfg, const Schedule& sched,
                    const Binding& binding, const FloatFormat& fmt,
                    const std::map<std::string, std::vector<double>>& inputs,
                    const ResourceModel& model);

struct LatencyReport {
  int64_t total_intervals = 0;
  double clock_period_ns = 0.0;
  double end_to_end_ns = 0.0;  // total_intervals * clock
  std::vector<int64_t> stage_lengths;
  double throughput_us_per_sample = 0.0;  // longest stage * clock / 1000
};

LatencyReport latency_report(const Schedule& sched, double clock_period_ns);

struct BoundaryReport {
  int64_t boundary = 0;
  uint64_t crossing_values = 0;
  uint64_t wires = 0;  // crossing_values * fmt.total_width()
};

// Values produced at-or-before a boundary and consumed at-or-after it need a
// wire across the corresponding partition. Weight leaves and constants are
// excluded (they re-materialize as registered constants on either side).
std::vector<BoundaryReport> bus_width_report(const DataflowGraph& dfg,
                                             const Schedule& sched,
                                             const ResourceModel& model,
                                             const FloatFormat& fmt);

// Value ids crossing one boundary, sorted.
std::vector<uint32_t> crossing_values(const DataflowGraph& dfg,
                                      const Schedule& sched,
                                      const ResourceModel& model,
                                      int64_t boundary);

struct WeightHistogram {
  std::map<int, uint64_t> buckets;  // unbiased exponent of the encoded value
  uint64_t overflow = 0;            // encodes to infinity
  uint64_t underflow = 0;           // nonzero value flushed to zero
  uint64_t zeros = 0;
};

WeightHistogram weight_histogram(
    const std::map<std::string, std::vector<double>>& weights,
    const FloatFormat& fmt);

}  // namespace thls
