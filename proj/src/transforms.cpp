// SPDX-License-Identifier: Apache-2.0
#include "tracehls/transforms.hpp"

#include <algorithm>

namespace thls {

LoopNestProgram hoist_globals(const LoopNestProgram& program,
                              TransformStats* stats) {
  LoopNestProgram out = program;
  std::vector<BufferDecl> kept;
  for (auto& decl : out.locals) {
    if (decl.kind == BufferKind::weight) {
      out.params.push_back(decl);
      if (stats) ++stats->hoisted_weights;
    } else {
      kept.push_back(decl);
    }
  }
  out.locals = std::move(kept);
  return out;
}

namespace {

// Rebuilds the node/value arrays after a rewrite, dropping dead nodes and
// unreferenced non-op values, and remapping outputs, chains and subtrees.
DataflowGraph compact(DataflowGraph dfg, const std::vector<bool>& node_dead) {
  constexpr uint32_t kGone = 0xffffffffu;
  std::vector<uint32_t> value_map(dfg.values.size(), kGone);
  std::vector<uint32_t> node_map(dfg.nodes.size(), kGone);

  std::vector<bool> value_live(dfg.values.size(), false);
  for (size_t i = 0; i < dfg.nodes.size(); ++i) {
    if (node_dead[i]) continue;
    const DfgNode& n = dfg.nodes[i];
    for (int k = 0; k < n.operand_count; ++k) value_live[n.operands[k]] = true;
    value_live[n.result] = true;
  }
  for (const auto& out : dfg.outputs) value_live[out.value] = true;

  DataflowGraph out;
  out.buffers = std::move(dfg.buffers);
  out.trace_seconds = dfg.trace_seconds;

  for (size_t i = 0; i < dfg.values.size(); ++i) {
    const ValueInfo& v = dfg.values[i];
    bool keep = value_live[i] &&
                (v.kind != ValueKind::op_result || !node_dead[v.node]);
    if (!keep) continue;
    value_map[i] = static_cast<uint32_t>(out.values.size());
    out.values.push_back(v);
  }
  for (size_t i = 0; i < dfg.nodes.size(); ++i) {
    if (node_dead[i]) continue;
    DfgNode n = dfg.nodes[i];
    node_map[i] = static_cast<uint32_t>(out.nodes.size());
    for (int k = 0; k < n.operand_count; ++k) n.operands[k] = value_map[n.operands[k]];
    n.result = value_map[n.result];
    out.nodes.push_back(n);
  }
  for (auto& v : out.values)
    if (v.kind == ValueKind::op_result) v.node = node_map[v.node];
  for (auto out_cell : dfg.outputs) {
    out_cell.value = value_map[out_cell.value];
    out.outputs.push_back(out_cell);
  }
  for (auto& chain : dfg.chains) {
    ReductionChain c{chain.marker, {}};
    bool alive = true;
    for (uint32_t n : chain.nodes) {
      if (node_map[n] == kGone) {
        alive = false;
        break;
      }
      c.nodes.push_back(node_map[n]);
    }
    if (alive && !c.nodes.empty()) out.chains.push_back(std::move(c));
  }
  for (auto& sub : dfg.subtrees) {
    ReductionSubtree s;
    bool alive = node_map[sub.root] != kGone;
    for (uint32_t n : sub.nodes) {
      if (node_map[n] == kGone) {
        alive = false;
        break;
      }
      s.nodes.push_back(node_map[n]);
    }
    if (!alive) continue;
    s.root = node_map[sub.root];
    out.subtrees.push_back(std::move(s));
  }
  return out;
}

bool is_zero_const(const DataflowGraph& dfg, uint32_t value) {
  const ValueInfo& v = dfg.values[value];
  return v.kind == ValueKind::constant && v.literal == 0.0;
}

}  // namespace

DataflowGraph recompose_relu(DataflowGraph dfg, TransformStats* stats) {
  std::vector<uint32_t> uses = dfg.use_counts();
  std::vector<bool> dead(dfg.nodes.size(), false);
  bool changed = false;
  for (size_t i = 0; i < dfg.nodes.size(); ++i) {
    DfgNode& sel = dfg.nodes[i];
    if (sel.kind != ArithKind::select) continue;
    const ValueInfo& cond = dfg.values[sel.operands[0]];
    if (cond.kind != ValueKind::op_result) continue;
    uint32_t cmp_id = cond.node;
    if (dead[cmp_id]) continue;
    const DfgNode& cmp = dfg.nodes[cmp_id];
    if (cmp.kind != ArithKind::cmpfugt) continue;
    if (uses[cmp.result] != 1) continue;
    // select(cmpfugt(x, 0), x, 0) with the same x and zero constant
    if (cmp.operands[0] != sel.operands[1]) continue;
    if (!is_zero_const(dfg, cmp.operands[1])) continue;
    if (!is_zero_const(dfg, sel.operands[2])) continue;
    uint32_t x = cmp.operands[0];
    sel.kind = ArithKind::relu;
    sel.operand_count = 1;
    sel.operands = {x, 0, 0};
    dead[cmp_id] = true;
    changed = true;
    if (stats) ++stats->relu_recomposed;
  }
  if (!changed) return dfg;
  return compact(std::move(dfg), dead);
}

DataflowGraph fuse_mac(DataflowGraph dfg, TransformStats* stats) {
  std::vector<uint32_t> uses = dfg.use_counts();
  std::vector<bool> dead(dfg.nodes.size(), false);
  bool changed = false;
  auto fusable_mul = [&](uint32_t value) -> int64_t {
    const ValueInfo& v = dfg.values[value];
    if (v.kind != ValueKind::op_result) return -1;
    const DfgNode& m = dfg.nodes[v.node];
    if (m.kind != ArithKind::mulf || dead[v.node]) return -1;
    if (uses[value] != 1) return -1;
    return static_cast<int64_t>(v.node);
  };
  for (size_t i = 0; i < dfg.nodes.size(); ++i) {
    DfgNode& add = dfg.nodes[i];
    if (add.kind != ArithKind::addf) continue;
    int64_t m0 = fusable_mul(add.operands[0]);
    int64_t m1 = fusable_mul(add.operands[1]);
    if (m0 < 0 && m1 < 0) continue;
    // Prefer the trace-order-earlier mulf when both operands qualify.
    int which;
    if (m0 >= 0 && m1 >= 0)
      which = m0 < m1 ? 0 : 1;
    else
      which = m0 >= 0 ? 0 : 1;
    uint32_t mul_node = static_cast<uint32_t>(which == 0 ? m0 : m1);
    uint32_t addend = add.operands[which == 0 ? 1 : 0];
    const DfgNode& mul = dfg.nodes[mul_node];
    add.kind = ArithKind::fmac;
    add.operand_count = 3;
    add.operands = {mul.operands[0], mul.operands[1], addend};
    dead[mul_node] = true;
    changed = true;
    if (stats) ++stats->macs_fused;
  }
  if (!changed) return dfg;
  return compact(std::move(dfg), dead);
}

DataflowGraph reduce_fors(DataflowGraph dfg, TransformStats* stats) {
  if (dfg.chains.empty()) return dfg;
  std::vector<uint32_t> uses = dfg.use_counts();

  struct TreeJob {
    ArithKind kind;
    std::vector<uint32_t> leaves;     // value ids, trace order
    uint32_t anchor;                  // node id of the last chain op
    uint32_t old_root_value;
  };
  std::vector<TreeJob> jobs;
  std::vector<bool> chain_member(dfg.nodes.size(), false);

  for (const auto& chain : dfg.chains) {
    if (chain.nodes.empty()) continue;
    ArithKind kind = dfg.nodes[chain.nodes[0]].kind;
    for (uint32_t n : chain.nodes)
      if (dfg.nodes[n].kind != kind)
        throw TransformError("reduction marker @" + chain.marker +
                             " names a non-chain: operator kinds differ");
    if (kind == ArithKind::fmac) {
      // Fused by the mac transform; nothing left to reassociate.
      if (stats) ++stats->chains_skipped_fused;
      continue;
    }
    if (kind != ArithKind::addf && kind != ArithKind::max &&
        kind != ArithKind::mulf)
      throw TransformError("reduction marker @" + chain.marker +
                           " names a non-reducible operator " +
                           std::string(kind_name(kind)));
    // Verify linearity: each op consumes the previous op's result, and every
    // interior result has exactly one use.
    TreeJob job;
    job.kind = kind;
    job.anchor = chain.nodes.back();
    job.old_root_value = dfg.nodes[chain.nodes.back()].result;
    bool ok = true;
    for (size_t i = 0; i < chain.nodes.size(); ++i) {
      const DfgNode& n = dfg.nodes[chain.nodes[i]];
      if (i == 0) {
        job.leaves.push_back(n.operands[0]);
        job.leaves.push_back(n.operands[1]);
        continue;
      }
      uint32_t prev_result = dfg.nodes[chain.nodes[i - 1]].result;
      if (uses[prev_result] != 1) {
        ok = false;
        break;
      }
      if (n.operands[0] == prev_result)
        job.leaves.push_back(n.operands[1]);
      else if (n.operands[1] == prev_result)
        job.leaves.push_back(n.operands[0]);
      else {
        ok = false;
        break;
      }
    }
    if (!ok || chain.nodes.size() < 2) continue;  // nothing to rebalance
    for (uint32_t n : chain.nodes) chain_member[n] = true;
    jobs.push_back(std::move(job));
    if (stats) ++stats->chains_reduced;
  }
  if (jobs.empty()) {
    dfg.chains.clear();
    return dfg;
  }

  std::sort(jobs.begin(), jobs.end(),
            [](const TreeJob& a, const TreeJob& b) { return a.anchor < b.anchor; });

  DataflowGraph out;
  out.buffers = std::move(dfg.buffers);
  out.values = dfg.values;  // values keep their ids; interiors orphaned
  out.trace_seconds = dfg.trace_seconds;

  constexpr uint32_t kGone = 0xffffffffu;
  std::vector<uint32_t> value_redirect(dfg.values.size());
  for (size_t i = 0; i < value_redirect.size(); ++i)
    value_redirect[i] = static_cast<uint32_t>(i);
  std::vector<uint32_t> node_map(dfg.nodes.size(), kGone);

  size_t next_job = 0;
  auto emit_node = [&](ArithKind kind, uint32_t a, uint32_t b) -> uint32_t {
    DfgNode n;
    n.kind = kind;
    n.operand_count = 2;
    n.operands = {a, b, 0};
    uint32_t node_id = static_cast<uint32_t>(out.nodes.size());
    ValueInfo info;
    info.kind = ValueKind::op_result;
    info.node = node_id;
    out.values.push_back(info);
    n.result = static_cast<uint32_t>(out.values.size() - 1);
    out.nodes.push_back(n);
    return n.result;
  };

  for (size_t i = 0; i < dfg.nodes.size(); ++i) {
    if (chain_member[i]) {
      if (next_job < jobs.size() && jobs[next_job].anchor == i) {
        // Emit the balanced tree at the position of the chain's last op; all
        // leaves are defined by now. Pairwise reduction level by level keeps
        // depth at ceil(log2 n), preserves leaf order, and puts tree nodes
        // in level order so the trace-order issue discipline schedules each
        // level before the next.
        const TreeJob& job = jobs[next_job];
        ReductionSubtree subtree;
        std::vector<uint32_t> level;
        level.reserve(job.leaves.size());
        for (uint32_t leaf : job.leaves)
          level.push_back(value_redirect[leaf]);
        while (level.size() > 1) {
          std::vector<uint32_t> next;
          for (size_t k = 0; k + 1 < level.size(); k += 2) {
            uint32_t res = emit_node(job.kind, level[k], level[k + 1]);
            subtree.nodes.push_back(out.values[res].node);
            next.push_back(res);
          }
          if (level.size() % 2) next.push_back(level.back());
          level = std::move(next);
        }
        uint32_t root_value = level.front();
        subtree.root = out.values[root_value].node;
        out.subtrees.push_back(std::move(subtree));
        value_redirect[job.old_root_value] = root_value;
        ++next_job;
      }
      continue;  // interior chain node: dropped
    }
    DfgNode n = dfg.nodes[i];
    for (int k = 0; k < n.operand_count; ++k)
      n.operands[k] = value_redirect[n.operands[k]];
    uint32_t node_id = static_cast<uint32_t>(out.nodes.size());
    node_map[i] = node_id;
    out.values[n.result].node = node_id;
    out.nodes.push_back(n);
  }
  for (auto cell : dfg.outputs) {
    cell.value = value_redirect[cell.value];
    out.outputs.push_back(cell);
  }
  // Subtrees from an earlier run survive if none of their nodes was rebuilt.
  for (const auto& sub : dfg.subtrees) {
    ReductionSubtree s;
    bool alive = node_map[sub.root] != kGone;
    for (uint32_t n : sub.nodes) {
      if (node_map[n] == kGone) {
        alive = false;
        break;
      }
      s.nodes.push_back(node_map[n]);
    }
    if (!alive) continue;
    s.root = node_map[sub.root];
    out.subtrees.push_back(std::move(s));
  }

  // Compact away the orphaned interior values of the rebuilt chains.
  std::vector<bool> dead(out.nodes.size(), false);
  return compact(std::move(out), dead);
}

}  // namespace thls
