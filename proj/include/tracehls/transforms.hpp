// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>

#include "tracehls/interp.hpp"
#include "tracehls/ir.hpp"

namespace thls {

struct TransformError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TransformStats {
  uint64_t hoisted_weights = 0;
  uint64_t relu_recomposed = 0;
  uint64_t macs_fused = 0;
  uint64_t chains_reduced = 0;
  uint64_t chains_skipped_fused = 0;  // chains superseded by mac fusion
};

// Moves weight-kind buffers from the body declaration region to the param
// list so they surface at the RTL module interface. Statements unchanged.
LoopNestProgram hoist_globals(const LoopNestProgram& program,
                              TransformStats* stats = nullptr);

// Rewrites {c = cmpfugt(x, 0); y = select(c, x, 0)} with single-use c into
// y = relu(x).
DataflowGraph recompose_relu(DataflowGraph dfg, TransformStats* stats = nullptr);

// Rewrites {m = mulf(a,b); s = addf(c,m)} with single-use m into
// s = fmac(a,b,c), greedily in trace order. When both addf operands qualify,
// the trace-order-earlier mulf is fused.
DataflowGraph fuse_mac(DataflowGraph dfg, TransformStats* stats = nullptr);

// Replaces each marked accumulation chain (uniform addf/max/mulf) by a
// balanced binary tree over the same leaves, preserving leaf order. Chains
// whose ops were turned into fmacs by fuse_mac are skipped. Mixed-kind
// chains raise a TransformError. The produced subtrees are recorded on the
// graph for ALAP placement during scheduling.
DataflowGraph reduce_fors(DataflowGraph dfg, TransformStats* stats = nullptr);

struct TransformOptions {
  bool hoist_globals = true;
  bool recompose_relu = true;
  bool fuse_mac = true;
  bool reduce_fors = true;
};

// Fixed application order: hoist_globals (program level, before tracing),
// then recompose_relu -> fuse_mac -> reduce_fors on the traced graph.
struct TransformPipeline {
  TransformOptions options;
  TransformStats stats;

  LoopNestProgram run_program(const LoopNestProgram& p) {
    return options.hoist_globals ? thls::hoist_globals(p, &stats) : p;
  }
  DataflowGraph run_graph(DataflowGraph dfg) {
    if (options.recompose_relu) dfg = thls::recompose_relu(std::move(dfg), &stats);
    if (options.fuse_mac) dfg = thls::fuse_mac(std::move(dfg), &stats);
    if (options.reduce_fors) dfg = thls::reduce_fors(std::move(dfg), &stats);
    return dfg;
  }
};

}  // namespace thls
