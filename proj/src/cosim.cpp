// SPDX-License-Identifier: Apache-2.0
#include "tracehls/cosim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace thls {

CycleTrace simulate(const DataflowGraph& dfg, const Schedule& sched,
                    const Binding& binding, const FloatFormat& fmt,
                    const std::map<std::string, std::vector<double>>& inputs,
                    const ResourceModel& model) {
  (void)binding;
  CycleTrace trace;
  trace.total_intervals = sched.total_intervals;

  std::vector<const std::vector<double>*> tensors(dfg.buffers.size(), nullptr);
  for (size_t b = 0; b < dfg.buffers.size(); ++b) {
    auto it = inputs.find(dfg.buffers[b].id);
    if (it != inputs.end()) tensors[b] = &it->second;
  }

  std::vector<FPValue> vals(dfg.values.size());
  std::vector<int64_t> ready(dfg.values.size(), 0);
  for (size_t i = 0; i < dfg.values.size(); ++i) {
    const ValueInfo& v = dfg.values[i];
    if (v.kind == ValueKind::constant) {
      vals[i] = encode(v.literal, fmt);
    } else if (v.kind == ValueKind::input_element) {
      if (!tensors[v.buffer])
        throw TraceError("simulate: missing input tensor %" +
                         dfg.buffers[v.buffer].id);
      vals[i] = encode((*tensors[v.buffer])[static_cast<size_t>(v.flat_index)],
                       fmt);
    }
  }

  // Walk nodes in issue order; operands must have completed by the issue
  // cycle (the schedule validator guarantees it, this re-asserts it).
  std::vector<uint32_t> order(dfg.nodes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](uint32_t a, uint32_t b) {
    return sched.start[a] < sched.start[b];
  });
  trace.issues.reserve(order.size());
  trace.completions.reserve(order.size());
  for (uint32_t id : order) {
    const DfgNode& node = dfg.nodes[id];
    int64_t start = sched.start[id];
    FPValue ops[3];
    for (int k = 0; k < node.operand_count; ++k) {
      uint32_t op = node.operands[k];
      if (ready[op] > start)
        throw TraceError("simulate: node " + std::to_string(id) +
                         " issues before operand completion");
      ops[k] = vals[op];
    }
    vals[node.result] = fp_apply(node.kind, ops, node.operand_count, fmt);
    int64_t done = start + model.spec(node.kind).latency;
    ready[node.result] = done;
    trace.issues.push_back({start, id});
    trace.completions.push_back({done, id});
  }
  std::stable_sort(trace.completions.begin(), trace.completions.end());

  for (int64_t boundary : sched.stage_boundaries)
    for (uint32_t v : crossing_values(dfg, sched, model, boundary))
      trace.stage_latches.push_back({boundary, v});

  for (const auto& out : dfg.outputs) {
    const std::string& id = dfg.buffers[out.buffer].id;
    auto& bits = trace.outputs[id];
    auto& f64 = trace.outputs_f64[id];
    if (bits.empty()) {
      size_t n =
          static_cast<size_t>(dfg.buffers[out.buffer].shape.num_elements());
      bits.resize(n);
      f64.resize(n);
    }
    bits[static_cast<size_t>(out.flat_index)] = vals[out.value];
    f64[static_cast<size_t>(out.flat_index)] = decode(vals[out.value], fmt);
  }
  return trace;
}

LatencyReport latency_report(const Schedule& sched, double clock_period_ns) {
  LatencyReport r;
  r.total_intervals = sched.total_intervals;
  r.clock_period_ns = clock_period_ns;
  r.end_to_end_ns = static_cast<double>(sched.total_intervals) * clock_period_ns;
  r.stage_lengths = sched.stage_lengths();
  r.throughput_us_per_sample =
      static_cast<double>(sched.longest_stage()) * clock_period_ns / 1000.0;
  return r;
}

std::vector<uint32_t> crossing_values(const DataflowGraph& dfg,
                                      const Schedule& sched,
                                      const ResourceModel& model,
                                      int64_t boundary) {
  // produced(v) <= boundary and some consumer starts at >= boundary
  std::vector<int64_t> produced(dfg.values.size(), 0);
  std::vector<bool> eligible(dfg.values.size(), false);
  for (size_t i = 0; i < dfg.values.size(); ++i) {
    const ValueInfo& v = dfg.values[i];
    if (v.kind == ValueKind::constant) continue;  // re-materialized per stage
    if (v.kind == ValueKind::input_element) {
      if (dfg.buffers[v.buffer].kind == BufferKind::weight) continue;  // same
      eligible[i] = true;
      produced[i] = 0;
    }
  }
  for (size_t n = 0; n < dfg.nodes.size(); ++n) {
    const DfgNode& node = dfg.nodes[n];
    eligible[node.result] = true;
    produced[node.result] =
        sched.start[n] + model.spec(node.kind).latency;
  }
  std::vector<bool> crossing(dfg.values.size(), false);
  for (size_t n = 0; n < dfg.nodes.size(); ++n) {
    const DfgNode& node = dfg.nodes[n];
    if (sched.start[n] < boundary) continue;
    for (int k = 0; k < node.operand_count; ++k) {
      uint32_t op = node.operands[k];
      if (eligible[op] && produced[op] <= boundary) crossing[op] = true;
    }
  }
  std::vector<uint32_t> out;
  for (size_t i = 0; i < crossing.size(); ++i)
    if (crossing[i]) out.push_back(static_cast<uint32_t>(i));
  return out;
}

std::vector<BoundaryReport> bus_width_report(const DataflowGraph& dfg,
                                             const Schedule& sched,
                                             const ResourceModel& model,
                                             const FloatFormat& fmt) {
  std::vector<BoundaryReport> reports;
  for (int64_t boundary : sched.stage_boundaries) {
    BoundaryReport r;
    r.boundary = boundary;
    r.crossing_values = crossing_values(dfg, sched, model, boundary).size();
    r.wires = r.crossing_values * static_cast<uint64_t>(fmt.total_width());
    reports.push_back(r);
  }
  return reports;
}

WeightHistogram weight_histogram(
    const std::map<std::string, std::vector<double>>& weights,
    const FloatFormat& fmt) {
  WeightHistogram h;
  for (const auto& [name, data] : weights) {
    (void)name;
    for (double w : data) {
      if (w == 0.0) {
        ++h.zeros;
        continue;
      }
      FPValue enc = encode(w, fmt);
      switch (fp_class(enc, fmt)) {
        case FpClass::inf:
          ++h.overflow;
          break;
        case FpClass::zero:
          ++h.underflow;
          break;
        case FpClass::normal:
          ++h.buckets[static_cast<int>(fp_exponent_field(enc, fmt)) -
                      fmt.bias()];
          break;
        case FpClass::nan:
          break;
      }
    }
  }
  return h;
}

}  // namespace thls
