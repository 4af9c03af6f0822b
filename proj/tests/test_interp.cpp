// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"
#include "support/models.hpp"
#include "support/oracles.hpp"
#include "tracehls/backend.hpp"
#include "tracehls/frontend.hpp"
#include "tracehls/interp.hpp"

using namespace thls;
using namespace thls::testing;

namespace {

const FloatFormat kF{5, 11};

LoweredModel lower_built(const BuiltModel& m, int exp_order = 6) {
  return lower_model(load_built(m), ExpApprox{exp_order}, kF);
}

IndexExpr one_iv(const std::string& name) {
  return IndexExpr{{IndexTerm::var(name)}};
}
IndexExpr lit(int64_t v) { return IndexExpr{{IndexTerm::lit(v)}}; }

}  // namespace

TEST_CASE("store-load forwarding wires the stored value to the consumer") {
  // unrolled accumulation scenario: a store to a cell followed by a load of
  // the same cell; the consumer of the load must take the stored value's SSA
  // id directly, with no load/store artifacts left in the graph
  LoopNestProgram p;
  p.name = "fwd";
  p.params.push_back({"x", TensorShape{{1}}, kF, BufferKind::input});
  p.params.push_back({"out", TensorShape{{1}}, kF, BufferKind::output});
  p.locals.push_back({"acc", TensorShape{{1}}, kF, BufferKind::intermediate});
  SequentialFor loop;
  loop.iv = "i";
  loop.lower = 0;
  loop.upper = 2;
  loop.step = 1;
  loop.body.push_back(Statement{Load{"a", "x", {lit(0)}}});
  loop.body.push_back(Statement{ConstF{"c", 2.0}});
  loop.body.push_back(Statement{Arith{"m", ArithKind::mulf, {"a", "c"}, {}}});
  loop.body.push_back(Statement{Store{"acc", {lit(0)}, "m"}});
  loop.body.push_back(Statement{Load{"r", "acc", {lit(0)}}});
  loop.body.push_back(Statement{Arith{"s", ArithKind::addf, {"r", "a"}, {}}});
  loop.body.push_back(Statement{Store{"out", {lit(0)}, "s"}});
  p.body.push_back(Statement{std::move(loop)});
  REQUIRE(validate(p).empty());

  DataflowGraph dfg = trace(p);
  CHECK(check_dfg(dfg).empty());
  // two iterations x (mulf + addf); no load/store nodes exist by construction
  REQUIRE(dfg.nodes.size() == 4);
  // the addf consumes the mulf result of the same iteration directly
  CHECK(dfg.nodes[1].kind == ArithKind::addf);
  CHECK(dfg.nodes[1].operands[0] == dfg.nodes[0].result);
  CHECK(dfg.nodes[3].operands[0] == dfg.nodes[2].result);
}

TEST_CASE("conv trace matches the iteration-space enumeration oracle") {
  BuiltModel m = conv_1x1x16x16_c3k3(3);
  LoweredModel lowered = lower_built(m);
  // oracle: walk the loop structure and count arith executions
  auto counts = count_arith_executions(lowered.program);
  CHECK(counts[ArithKind::mulf] == 6912);
  CHECK(counts[ArithKind::addf] == 6912);
  CHECK(counts[ArithKind::mulf] + counts[ArithKind::addf] == 13824);

  DataflowGraph dfg = trace(lowered.program);
  CHECK(check_dfg(dfg).empty());
  TraceStats stats = trace_stats(dfg);
  CHECK(stats.node_counts[ArithKind::mulf] == 6912);
  CHECK(stats.node_counts[ArithKind::addf] == 6912);
  CHECK(stats.output_elements == 3 * 16 * 16);
  CHECK(stats.trace_seconds > 0.0);
}

TEST_CASE("uninitialized reads are errors") {
  LoopNestProgram p;
  p.name = "uninit";
  p.params.push_back({"x", TensorShape{{1}}, kF, BufferKind::input});
  p.params.push_back({"out", TensorShape{{1}}, kF, BufferKind::output});
  p.locals.push_back({"buf", TensorShape{{2}}, kF, BufferKind::intermediate});
  SequentialFor loop;
  loop.iv = "i";
  loop.lower = 0;
  loop.upper = 1;
  loop.step = 1;
  loop.body.push_back(Statement{Load{"a", "x", {lit(0)}}});
  loop.body.push_back(Statement{Store{"buf", {lit(0)}, "a"}});
  loop.body.push_back(Statement{Load{"b", "buf", {lit(1)}}});  // other cell
  loop.body.push_back(Statement{Store{"out", {lit(0)}, "b"}});
  p.body.push_back(Statement{std::move(loop)});
  REQUIRE(validate(p).empty());
  CHECK_THROWS_WITH_AS(trace(p),
                       doctest::Contains("uninitialized read of %buf[1]"),
                       TraceError);
}

TEST_CASE("out-of-bounds index is an error") {
  LoopNestProgram p;
  p.name = "oob";
  p.params.push_back({"x", TensorShape{{2}}, kF, BufferKind::input});
  p.params.push_back({"out", TensorShape{{2}}, kF, BufferKind::output});
  SequentialFor loop;
  loop.iv = "i";
  loop.lower = 0;
  loop.upper = 2;
  loop.step = 1;
  loop.body.push_back(
      Statement{Load{"a", "x", {IndexExpr{{IndexTerm::var("i"), IndexTerm::lit(1)}}}}});
  loop.body.push_back(Statement{Store{"out", {one_iv("i")}, "a"}});
  p.body.push_back(Statement{std::move(loop)});
  CHECK_THROWS_WITH_AS(trace(p), doctest::Contains("out-of-bounds"),
                       TraceError);
}

TEST_CASE("cross-instance parallel reads are detected") {
  LoopNestProgram p;
  p.name = "hazard";
  p.params.push_back({"x", TensorShape{{2}}, kF, BufferKind::input});
  p.params.push_back({"out", TensorShape{{2}}, kF, BufferKind::output});
  p.locals.push_back({"buf", TensorShape{{2}}, kF, BufferKind::intermediate});
  ParallelFor loop;
  loop.ivs = {"i"};
  loop.lowers = {0};
  loop.uppers = {2};
  loop.steps = {1};
  loop.body.push_back(Statement{Load{"a", "x", {one_iv("i")}}});
  loop.body.push_back(Statement{Store{"buf", {one_iv("i")}, "a"}});
  // instance 1 reads buf[0], written by sibling instance 0
  loop.body.push_back(Statement{Load{"b", "buf", {lit(0)}}});
  loop.body.push_back(Statement{Store{"out", {one_iv("i")}, "b"}});
  p.body.push_back(Statement{std::move(loop)});
  REQUIRE(validate(p).empty());
  CHECK_THROWS_WITH_AS(trace(p),
                       doctest::Contains("parallel dependence violation"),
                       TraceError);
}

TEST_CASE("intra-instance read-after-write inside a parallel body is allowed") {
  LoopNestProgram p;
  p.name = "raw_ok";
  p.params.push_back({"x", TensorShape{{2}}, kF, BufferKind::input});
  p.params.push_back({"out", TensorShape{{2}}, kF, BufferKind::output});
  p.locals.push_back({"buf", TensorShape{{2}}, kF, BufferKind::intermediate});
  ParallelFor loop;
  loop.ivs = {"i"};
  loop.lowers = {0};
  loop.uppers = {2};
  loop.steps = {1};
  loop.body.push_back(Statement{Load{"a", "x", {one_iv("i")}}});
  loop.body.push_back(Statement{Store{"buf", {one_iv("i")}, "a"}});
  loop.body.push_back(Statement{Load{"b", "buf", {one_iv("i")}}});  // own cell
  loop.body.push_back(Statement{Store{"out", {one_iv("i")}, "b"}});
  p.body.push_back(Statement{std::move(loop)});
  CHECK_NOTHROW(trace(p));
}

TEST_CASE("relu graph evaluates under f64 rules") {
  BuiltModel m = relu_model({1, 2});
  LoweredModel lowered = lower_built(m);
  DataflowGraph dfg = trace(lowered.program);
  TraceStats stats = trace_stats(dfg);
  CHECK(stats.node_counts[ArithKind::relu] == 2);
  CHECK(stats.total_nodes == 2);

  std::map<std::string, std::vector<double>> inputs{{"x", {-1.0, 2.0}}};
  EvalResult r = evaluate_numeric(dfg, inputs, EvaluationRules::f64());
  CHECK(r.tensors.at("act") == std::vector<double>{0.0, 2.0});
}

TEST_CASE("traced conv equals the straight-line f64 oracle exactly") {
  BuiltModel m = conv_1x1x16x16_c3k3(11);
  ModelGraph graph = load_built(m);
  LoweredModel lowered = lower_model(graph, ExpApprox{6}, kF);
  DataflowGraph dfg = trace(lowered.program);

  std::map<std::string, std::vector<double>> inputs = lowered.weights;
  inputs["x"] = random_inputs(99, 256);
  EvalResult got = evaluate_numeric(dfg, inputs, EvaluationRules::f64());

  RefTensor x{{1, 1, 16, 16}, inputs["x"]};
  RefTensor w{{3, 1, 3, 3}, graph.weights.at("conv.weight").data};
  RefTensor expect = conv2d_ref(x, w, &graph.weights.at("conv.bias").data, 1, 1);
  // identical operation order: bitwise-equal doubles
  REQUIRE(got.tensors.at("conv").size() == expect.data.size());
  for (size_t i = 0; i < expect.data.size(); ++i)
    REQUIRE(got.tensors.at("conv")[i] == expect.data[i]);
}

TEST_CASE("forwarding soundness: traced graph equals the memory-faithful interpreter") {
  for (uint64_t seed : {1ull, 2ull}) {
    BuiltModel m = conv_model(1, 2, 2, 3, 6, 6, 1, 1, true, seed);
    LoweredModel lowered = lower_built(m);
    DataflowGraph dfg = trace(lowered.program);
    std::map<std::string, std::vector<double>> inputs = lowered.weights;
    inputs["x"] = random_inputs(seed + 500, 2 * 36);
    EvalResult traced = evaluate_numeric(dfg, inputs, EvaluationRules::f64());
    auto reference = reference_interpret(lowered.program, inputs);
    REQUIRE(reference.at("conv") == traced.tensors.at("conv"));
  }
}

TEST_CASE("trace_stats on an empty program is all zeros") {
  LoopNestProgram p;
  p.name = "empty";
  DataflowGraph dfg = trace(p);
  TraceStats stats = trace_stats(dfg);
  CHECK(stats.total_nodes == 0);
  CHECK(stats.node_counts.empty());
  CHECK(stats.input_elements == 0);
  CHECK(stats.output_elements == 0);
}

TEST_CASE("input leaves are memoized per cell") {
  BuiltModel m = conv_1x1x16x16_c3k3(3);
  LoweredModel lowered = lower_built(m);
  DataflowGraph dfg = trace(lowered.program);
  // each of the 256 input elements becomes exactly one leaf even though conv
  // reads most cells nine times
  TraceStats stats = trace_stats(dfg);
  CHECK(stats.input_elements == 256);
  CHECK(stats.weight_elements == 3 * 9 + 3);
}

TEST_CASE("missing input tensors are reported") {
  BuiltModel m = relu_model({1, 2});
  DataflowGraph dfg = trace(lower_built(m).program);
  std::map<std::string, std::vector<double>> empty;
  CHECK_THROWS_WITH_AS(evaluate_numeric(dfg, empty, EvaluationRules::f64()),
                       doctest::Contains("missing input tensor"), TraceError);
}

TEST_CASE("dfg dump is deterministic and line-oriented") {
  BuiltModel m = relu_model({1, 2});
  LoweredModel lowered = lower_built(m);
  std::string d1 = dump_dfg(trace(lowered.program));
  std::string d2 = dump_dfg(trace(lowered.program));
  CHECK(d1 == d2);
  CHECK(d1.find("node 0 relu") != std::string::npos);
  CHECK(d1.find("output %act[0]") != std::string::npos);
}

TEST_CASE("evaluate under fp rules produces encoded outputs") {
  BuiltModel m = relu_model({1, 2});
  DataflowGraph dfg = trace(lower_built(m).program);
  std::map<std::string, std::vector<double>> inputs{{"x", {-1.0, 2.0}}};
  EvalResult r =
      evaluate_numeric(dfg, inputs, EvaluationRules::fp_format(kF));
  REQUIRE(r.bits.count("act"));
  CHECK(r.bits.at("act")[0] == encode(0.0, kF));
  CHECK(r.bits.at("act")[1] == encode(2.0, kF));
  CHECK(r.tensors.at("act")[1] == 2.0);
}
