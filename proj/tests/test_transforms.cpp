// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <set>

#include "doctest.h"
#include "support/models.hpp"
#include "support/oracles.hpp"
#include "tracehls/backend.hpp"
#include "tracehls/frontend.hpp"
#include "tracehls/transforms.hpp"

using namespace thls;
using namespace thls::testing;

namespace {

const FloatFormat kF{5, 11};

// depth of a reduction subtree = longest node path root-ward
int subtree_depth(const DataflowGraph& dfg, const ReductionSubtree& sub) {
  std::map<uint32_t, int> depth;  // node -> depth
  std::set<uint32_t> members(sub.nodes.begin(), sub.nodes.end());
  for (uint32_t n : sub.nodes) {  // nodes are in emission (topological) order
    int d = 0;
    for (int k = 0; k < dfg.nodes[n].operand_count; ++k) {
      const ValueInfo& v = dfg.values[dfg.nodes[n].operands[k]];
      if (v.kind == ValueKind::op_result && members.count(v.node))
        d = std::max(d, depth[v.node]);
    }
    depth[n] = d + 1;
  }
  return depth[sub.root];
}

// synthetic accumulation chain over n leaves
DataflowGraph make_chain(ArithKind kind, int64_t leaves) {
  DfgBuilder b;
  uint32_t acc = b.input("x", 0);
  std::vector<uint32_t> nodes;
  for (int64_t i = 1; i < leaves; ++i) {
    acc = b.op(kind, {acc, b.input("x", i)});
    nodes.push_back(b.dfg.values[acc].node);
  }
  b.mark_output("y", 0, acc);
  b.chain("sum", nodes);
  return b.take();
}

}  // namespace

TEST_CASE("hoist_globals moves weight buffers to the param list") {
  LoopNestProgram p;
  p.name = "h";
  p.params.push_back({"x", TensorShape{{1}}, kF, BufferKind::input});
  p.locals.push_back({"w", TensorShape{{4}}, kF, BufferKind::weight});
  p.locals.push_back({"t", TensorShape{{4}}, kF, BufferKind::intermediate});
  TransformStats stats;
  LoopNestProgram h = hoist_globals(p, &stats);
  CHECK(stats.hoisted_weights == 1);
  REQUIRE(h.params.size() == 2);
  CHECK(h.params[1].id == "w");
  REQUIRE(h.locals.size() == 1);
  CHECK(h.locals[0].id == "t");
  CHECK(h.body == p.body);
  // no weights: identity
  CHECK(hoist_globals(h) == h);
}

TEST_CASE("hoisted braggnn params cover the weight manifest") {
  BuiltModel m = braggnn_s1(5);
  ModelGraph graph = load_built(m);
  LoweredModel lowered = lower_model(graph, ExpApprox{4}, kF);
  LoopNestProgram hoisted = hoist_globals(lowered.program);
  std::set<std::string> params;
  for (const auto& b : hoisted.params)
    if (b.kind == BufferKind::weight) params.insert(b.id);
  for (const auto& [name, tensor] : graph.weights) {
    (void)tensor;
    CHECK(params.count(name));
  }
  for (const auto& b : hoisted.locals) CHECK(b.kind != BufferKind::weight);
}

TEST_CASE("recompose_relu rewrites the cmp+select pattern") {
  DfgBuilder b;
  uint32_t x = b.input("x");
  uint32_t zero = b.constant(0.0);
  uint32_t c = b.op(ArithKind::cmpfugt, {x, zero});
  uint32_t y = b.op(ArithKind::select, {c, x, zero});
  b.mark_output("out", 0, y);
  TransformStats stats;
  DataflowGraph out = recompose_relu(b.take(), &stats);
  CHECK(stats.relu_recomposed == 1);
  REQUIRE(out.nodes.size() == 1);
  CHECK(out.nodes[0].kind == ArithKind::relu);
  CHECK(out.nodes[0].operand_count == 1);
  CHECK(check_dfg(out).empty());
}

TEST_CASE("recompose_relu guards: nonzero constant, multi-use cmp") {
  {
    DfgBuilder b;
    uint32_t x = b.input("x");
    uint32_t one = b.constant(1.0);
    uint32_t c = b.op(ArithKind::cmpfugt, {x, one});
    uint32_t y = b.op(ArithKind::select, {c, x, one});
    b.mark_output("out", 0, y);
    DataflowGraph out = recompose_relu(b.take());
    CHECK(out.nodes.size() == 2);  // unchanged
  }
  {
    DfgBuilder b;
    uint32_t x = b.input("x");
    uint32_t zero = b.constant(0.0);
    uint32_t c = b.op(ArithKind::cmpfugt, {x, zero});
    uint32_t y = b.op(ArithKind::select, {c, x, zero});
    uint32_t y2 = b.op(ArithKind::select, {c, zero, x});  // second use of c
    b.mark_output("out", 0, y);
    b.mark_output("out", 1, y2);
    DataflowGraph out = recompose_relu(b.take());
    CHECK(out.nodes.size() == 3);
  }
}

TEST_CASE("a chain of 100 cmp+select pairs becomes 100 relus") {
  DfgBuilder b;
  uint32_t zero = b.constant(0.0);
  uint32_t v = b.input("x");
  for (int i = 0; i < 100; ++i) {
    uint32_t c = b.op(ArithKind::cmpfugt, {v, zero});
    v = b.op(ArithKind::select, {c, v, zero});
  }
  b.mark_output("out", 0, v);
  DataflowGraph in = b.take();
  size_t before = in.nodes.size();
  TransformStats stats;
  DataflowGraph out = recompose_relu(std::move(in), &stats);
  CHECK(stats.relu_recomposed == 100);
  CHECK(before - out.nodes.size() == 100);
  for (const auto& n : out.nodes) CHECK(n.kind == ArithKind::relu);
  CHECK(check_dfg(out).empty());
}

TEST_CASE("fuse_mac halves the conv graph") {
  BuiltModel m = conv_1x1x16x16_c3k3(3);
  LoweredModel lowered = lower_model(load_built(m), ExpApprox{6}, kF);
  DataflowGraph dfg = trace(lowered.program);
  REQUIRE(dfg.nodes.size() == 13824);
  TransformStats stats;
  DataflowGraph fused = fuse_mac(std::move(dfg), &stats);
  CHECK(stats.macs_fused == 6912);
  CHECK(fused.nodes.size() == 6912);
  for (const auto& n : fused.nodes) CHECK(n.kind == ArithKind::fmac);
  CHECK(check_dfg(fused).empty());
}

TEST_CASE("fuse_mac skips multiply results with multiple uses") {
  DfgBuilder b;
  uint32_t x = b.input("x", 0);
  uint32_t y = b.input("x", 1);
  uint32_t m = b.op(ArithKind::mulf, {x, y});
  uint32_t s = b.op(ArithKind::addf, {x, m});
  b.mark_output("out", 0, s);
  b.mark_output("out", 1, m);  // second use
  DataflowGraph out = fuse_mac(b.take());
  CHECK(out.nodes.size() == 2);
  CHECK(out.nodes[1].kind == ArithKind::addf);
}

TEST_CASE("diamond addf fuses the trace-order-earlier mulf, deterministically") {
  auto build = [&]() {
    DfgBuilder b;
    uint32_t a = b.input("x", 0);
    uint32_t c = b.input("x", 1);
    uint32_t m1 = b.op(ArithKind::mulf, {a, a});  // node 0
    uint32_t m2 = b.op(ArithKind::mulf, {c, c});  // node 1
    uint32_t s = b.op(ArithKind::addf, {m1, m2});
    b.mark_output("out", 0, s);
    return b.take();
  };
  TransformStats stats;
  DataflowGraph out1 = fuse_mac(build(), &stats);
  CHECK(stats.macs_fused == 1);
  REQUIRE(out1.nodes.size() == 2);
  // earlier mulf (node 0) fused; the second mulf survives and feeds operand c
  CHECK(out1.nodes[0].kind == ArithKind::mulf);
  CHECK(out1.nodes[1].kind == ArithKind::fmac);
  CHECK(out1.nodes[1].operands[2] == out1.nodes[0].result);
  DataflowGraph out2 = fuse_mac(build());
  CHECK(dump_dfg(out1) == dump_dfg(out2));
}

TEST_CASE("recompose_relu is idempotent") {
  DfgBuilder b;
  uint32_t zero = b.constant(0.0);
  uint32_t x = b.input("x");
  uint32_t c = b.op(ArithKind::cmpfugt, {x, zero});
  uint32_t y = b.op(ArithKind::select, {c, x, zero});
  b.mark_output("out", 0, y);
  DataflowGraph once = recompose_relu(b.take());
  std::string d1 = dump_dfg(once);
  CHECK(dump_dfg(recompose_relu(std::move(once))) == d1);
}

TEST_CASE("fuse_mac is idempotent") {
  BuiltModel m = conv_model(1, 1, 2, 3, 5, 5, 1, 1, true, 4);
  DataflowGraph dfg = trace(lower_model(load_built(m), ExpApprox{6}, kF).program);
  DataflowGraph once = fuse_mac(std::move(dfg));
  std::string d1 = dump_dfg(once);
  DataflowGraph twice = fuse_mac(std::move(once));
  CHECK(dump_dfg(twice) == d1);
}

TEST_CASE("reduce_fors builds balanced trees (8, 768, 1 leaves)") {
  {
    TransformStats stats;
    DataflowGraph out = reduce_fors(make_chain(ArithKind::addf, 8), &stats);
    CHECK(stats.chains_reduced == 1);
    CHECK(out.nodes.size() == 7);
    REQUIRE(out.subtrees.size() == 1);
    CHECK(subtree_depth(out, out.subtrees[0]) == 3);
    CHECK(check_dfg(out).empty());
  }
  {
    DataflowGraph out = reduce_fors(make_chain(ArithKind::addf, 768));
    CHECK(out.nodes.size() == 767);
    REQUIRE(out.subtrees.size() == 1);
    CHECK(subtree_depth(out, out.subtrees[0]) == tree_depth_oracle(768));
    CHECK(subtree_depth(out, out.subtrees[0]) == 10);
  }
  {
    // a 1-leaf chain records no accumulation ops: identity
    DataflowGraph in = make_chain(ArithKind::addf, 1);
    CHECK(in.nodes.empty());
    DataflowGraph out = reduce_fors(std::move(in));
    CHECK(out.nodes.empty());
  }
}

TEST_CASE("reduce_fors preserves leaf order and operator count") {
  DataflowGraph out = reduce_fors(make_chain(ArithKind::max, 10));
  CHECK(out.nodes.size() == 9);  // n-1 ops over n leaves
  for (const auto& n : out.nodes) CHECK(n.kind == ArithKind::max);
  // leaves left-to-right are the original inputs in trace order
  std::vector<int64_t> seen;
  for (const auto& n : out.nodes)
    for (int k = 0; k < n.operand_count; ++k) {
      const ValueInfo& v = out.values[n.operands[k]];
      if (v.kind == ValueKind::input_element) seen.push_back(v.flat_index);
    }
  std::vector<int64_t> sorted = seen;
  std::sort(sorted.begin(), sorted.end());
  CHECK(seen.size() == 10);
  // each leaf appears exactly once
  for (size_t i = 0; i < sorted.size(); ++i)
    CHECK(sorted[i] == static_cast<int64_t>(i));
}

TEST_CASE("mixed-kind chains are rejected") {
  DfgBuilder b;
  uint32_t acc = b.input("x", 0);
  std::vector<uint32_t> nodes;
  acc = b.op(ArithKind::addf, {acc, b.input("x", 1)});
  nodes.push_back(b.dfg.values[acc].node);
  acc = b.op(ArithKind::max, {acc, b.input("x", 2)});
  nodes.push_back(b.dfg.values[acc].node);
  b.mark_output("y", 0, acc);
  b.chain("bad", nodes);
  CHECK_THROWS_WITH_AS(reduce_fors(b.take()),
                       doctest::Contains("names a non-chain"), TransformError);
}

TEST_CASE("fmac chains left by fusion are skipped silently") {
  BuiltModel m = conv_model(1, 1, 1, 3, 4, 4, 1, 1, true, 9);
  DataflowGraph dfg = trace(lower_model(load_built(m), ExpApprox{6}, kF).program);
  TransformStats stats;
  DataflowGraph fused = fuse_mac(std::move(dfg), &stats);
  REQUIRE(stats.macs_fused > 0);
  DataflowGraph out = reduce_fors(std::move(fused), &stats);
  CHECK(stats.chains_skipped_fused > 0);
  CHECK(stats.chains_reduced == 0);
  CHECK(out.subtrees.empty());
}

TEST_CASE("extensional equivalence under f64") {
  // relu recomposition is exact
  {
    DfgBuilder b;
    uint32_t x = b.input("x");
    uint32_t zero = b.constant(0.0);
    uint32_t c = b.op(ArithKind::cmpfugt, {x, zero});
    uint32_t y = b.op(ArithKind::select, {c, x, zero});
    b.mark_output("out", 0, y);
    DataflowGraph in = b.take();
    std::map<std::string, std::vector<double>> inputs{{"x", {-3.5}}};
    EvalResult before = evaluate_numeric(in, inputs, EvaluationRules::f64());
    DataflowGraph out = recompose_relu(std::move(in));
    EvalResult after = evaluate_numeric(out, inputs, EvaluationRules::f64());
    CHECK(before.tensors.at("out") == after.tensors.at("out"));
  }
  // reduce_fors agrees with a reassociation-aware oracle (balanced-tree sum)
  {
    DataflowGraph in = make_chain(ArithKind::addf, 13);
    std::map<std::string, std::vector<double>> inputs{
        {"x", random_inputs(17, 13)}};
    DataflowGraph out = reduce_fors(std::move(in));
    EvalResult got = evaluate_numeric(out, inputs, EvaluationRules::f64());
    // oracle: pairwise level-by-level reduction over the same leaves (the
    // declared reassociation semantics)
    std::vector<double> level = inputs["x"];
    while (level.size() > 1) {
      std::vector<double> next;
      for (size_t k = 0; k + 1 < level.size(); k += 2)
        next.push_back(level[k] + level[k + 1]);
      if (level.size() % 2) next.push_back(level.back());
      level = std::move(next);
    }
    CHECK(got.tensors.at("y")[0] == level.front());
  }
  // fuse_mac agrees with an fma-aware oracle
  {
    DfgBuilder b;
    uint32_t x = b.input("x", 0);
    uint32_t y = b.input("x", 1);
    uint32_t z = b.input("x", 2);
    uint32_t m = b.op(ArithKind::mulf, {x, y});
    uint32_t s = b.op(ArithKind::addf, {z, m});
    b.mark_output("out", 0, s);
    DataflowGraph out = fuse_mac(b.take());
    std::map<std::string, std::vector<double>> inputs{
        {"x", {1.000000001, 3.000000007, -3.0}}};
    EvalResult got = evaluate_numeric(out, inputs, EvaluationRules::f64());
    CHECK(got.tensors.at("out")[0] ==
          std::fma(1.000000001, 3.000000007, -3.0));
  }
}

TEST_CASE("reduce_fors is idempotent") {
  DataflowGraph once = reduce_fors(make_chain(ArithKind::addf, 20));
  std::string d1 = dump_dfg(once);
  size_t subtrees = once.subtrees.size();
  DataflowGraph twice = reduce_fors(std::move(once));
  CHECK(dump_dfg(twice) == d1);
  CHECK(twice.subtrees.size() == subtrees);
}
