// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "tracehls/ir.hpp"

namespace thls {

// Where an SSA value comes from.
enum class ValueKind : uint8_t { op_result, constant, input_element };

struct ValueInfo {
  ValueKind kind = ValueKind::op_result;
  uint32_t node = 0;       // op_result: producing node id
  double literal = 0.0;    // constant
  uint32_t buffer = 0;     // input_element: index into DataflowGraph::buffers
  int64_t flat_index = 0;  // input_element: row-major cell index
};

struct DfgNode {
  ArithKind kind = ArithKind::addf;
  uint8_t operand_count = 0;
  uint32_t result = 0;  // SSA value id
  std::array<uint32_t, 3> operands{};
};

struct DfgBuffer {
  std::string id;
  TensorShape shape;
  BufferKind kind = BufferKind::intermediate;
  FloatFormat elem_format;
};

// An accumulation chain recorded from a reduction mark: the accumulation
// nodes of one chain instance, in execution order.
struct ReductionChain {
  std::string marker;
  std::vector<uint32_t> nodes;
};

// A balanced reduction tree produced by the reduce-fors transform; its
// interior nodes are scheduled as late as possible.
struct ReductionSubtree {
  std::vector<uint32_t> nodes;  // all tree nodes, root last
  uint32_t root = 0;
};

struct OutputCell {
  uint32_t buffer = 0;
  int64_t flat_index = 0;
  uint32_t value = 0;
};

// Pure SSA dataflow graph produced by tracing; nodes appear in execution
// (trace) order and no load/store operations remain.
struct DataflowGraph {
  std::vector<DfgBuffer> buffers;
  std::vector<ValueInfo> values;
  std::vector<DfgNode> nodes;
  std::vector<OutputCell> outputs;  // sorted by (buffer, flat_index)
  std::vector<ReductionChain> chains;
  std::vector<ReductionSubtree> subtrees;
  double trace_seconds = 0.0;

  int buffer_index(std::string_view id) const;
  // Number of uses of each value across node operands and output cells.
  std::vector<uint32_t> use_counts() const;
};

struct TraceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Executes the program over its full constant iteration space, treating
// scalars as symbols and buffers as geometric symbol tables. Store-load
// forwarding is emergent: a load yields the value most recently stored to
// the cell. Reads of a cell written by a sibling instance of the same
// parallel loop raise a TraceError (runtime memory-dependence assertion).
DataflowGraph trace(const LoopNestProgram& program);

struct EvaluationRules {
  bool use_fp = false;
  FloatFormat fmt{};

  static EvaluationRules f64() { return {}; }
  static EvaluationRules fp_format(FloatFormat f) { return {true, f}; }
};

struct EvalResult {
  // Per output buffer, row-major element values (decoded under fp rules).
  std::map<std::string, std::vector<double>> tensors;
  // Raw encodings, populated only under fp rules.
  std::map<std::string, std::vector<FPValue>> bits;
};

// Evaluates nodes in trace order under the given rules. `inputs` must cover
// every input and weight buffer with a leaf in the graph.
EvalResult evaluate_numeric(const DataflowGraph& dfg,
                            const std::map<std::string, std::vector<double>>& inputs,
                            const EvaluationRules& rules);

struct TraceStats {
  std::map<ArithKind, uint64_t> node_counts;
  uint64_t total_nodes = 0;
  uint64_t input_elements = 0;
  uint64_t weight_elements = 0;
  uint64_t output_elements = 0;
  double trace_seconds = 0.0;
};

TraceStats trace_stats(const DataflowGraph& dfg);

// Deterministic text dump (one node per line: id, kind, operand ids) plus
// leaf and output sections, for diffing and external tooling.
std::string dump_dfg(const DataflowGraph& dfg);

// Structural invariant check used by tests and the pipeline: operands
// precede their consumers in trace order, ids resolve, outputs are defined.
std::vector<Diagnostic> check_dfg(const DataflowGraph& dfg);

}  // namespace thls
