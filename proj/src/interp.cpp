// SPDX-License-Identifier: Apache-2.0
#include "tracehls/interp.hpp"

#include <bit>
#include <chrono>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>
#include <unordered_map>

namespace thls {

int DataflowGraph::buffer_index(std::string_view id) const {
  for (size_t i = 0; i < buffers.size(); ++i)
    if (buffers[i].id == id) return static_cast<int>(i);
  return -1;
}

std::vector<uint32_t> DataflowGraph::use_counts() const {
  std::vector<uint32_t> uses(values.size(), 0);
  for (const auto& n : nodes)
    for (int i = 0; i < n.operand_count; ++i) ++uses[n.operands[i]];
  for (const auto& out : outputs) ++uses[out.value];
  return uses;
}

namespace {

constexpr uint32_t kNoValue = 0xffffffffu;

// Interned stack of (parallel loop execution, instance) pairs; cells remember
// the context that wrote them so cross-instance reads can be detected.
struct ParallelContext {
  uint32_t parent = 0;
  uint64_t epoch = 0;
  uint64_t instance = 0;
};

struct BufferState {
  std::vector<uint32_t> cells;        // value id or kNoValue
  std::vector<uint32_t> writer_ctx;   // context id of last store
  std::vector<uint32_t> write_count;
  std::vector<int64_t> strides;
};

struct Tracer {
  const LoopNestProgram& program;
  DataflowGraph dfg;
  std::vector<BufferState> state;
  std::unordered_map<std::string_view, int> buffer_ids;
  std::unordered_map<std::string_view, int64_t> index_env;
  std::unordered_map<std::string_view, uint32_t> value_env;
  std::unordered_map<uint64_t, uint32_t> const_pool;  // f64 bits -> value id

  std::vector<ParallelContext> contexts;
  uint32_t current_ctx = 0;
  uint64_t next_epoch = 1;

  std::map<std::pair<std::string, std::vector<int64_t>>, size_t> chain_keys;
  std::vector<std::string> iv_stack;

  explicit Tracer(const LoopNestProgram& p) : program(p) {
    contexts.push_back({});  // root context
    auto add_buffer = [&](const BufferDecl& d) {
      buffer_ids.emplace(d.id, static_cast<int>(dfg.buffers.size()));
      dfg.buffers.push_back({d.id, d.shape, d.kind, d.elem_format});
      BufferState bs;
      int64_t n = d.shape.num_elements();
      bs.cells.assign(static_cast<size_t>(n), kNoValue);
      bs.writer_ctx.assign(static_cast<size_t>(n), 0);
      bs.write_count.assign(static_cast<size_t>(n), 0);
      bs.strides.resize(d.shape.dims.size());
      int64_t stride = 1;
      for (int i = d.shape.rank() - 1; i >= 0; --i) {
        bs.strides[static_cast<size_t>(i)] = stride;
        stride *= d.shape.dims[static_cast<size_t>(i)];
      }
      state.push_back(std::move(bs));
    };
    for (const auto& d : program.params) add_buffer(d);
    for (const auto& d : program.locals) add_buffer(d);
  }

  [[noreturn]] void fail(const std::string& msg) { throw TraceError(msg); }

  int64_t eval_term(const IndexTerm& t) {
    if (t.is_const()) return t.constant;
    auto it = index_env.find(t.name);
    if (it == index_env.end())
      fail("undefined index name %" + t.name + " during trace");
    return it->second;
  }

  int64_t eval_index_expr(const IndexExpr& e) {
    int64_t sum = 0;
    for (const auto& t : e.terms) sum += eval_term(t);
    return sum;
  }

  uint32_t lookup_value(const std::string& name) {
    auto it = value_env.find(name);
    if (it == value_env.end())
      fail("undefined value %" + name + " during trace");
    return it->second;
  }

  std::pair<int, int64_t> resolve_cell(const std::string& buffer,
                                       const std::vector<IndexExpr>& indices) {
    auto it = buffer_ids.find(buffer);
    if (it == buffer_ids.end()) fail("undeclared buffer %" + buffer);
    int b = it->second;
    const DfgBuffer& decl = dfg.buffers[static_cast<size_t>(b)];
    const BufferState& bs = state[static_cast<size_t>(b)];
    if (indices.size() != decl.shape.dims.size())
      fail("buffer %" + buffer + " accessed with wrong rank");
    int64_t flat = 0;
    for (size_t i = 0; i < indices.size(); ++i) {
      int64_t v = eval_index_expr(indices[i]);
      if (v < 0 || v >= decl.shape.dims[i]) {
        std::ostringstream os;
        os << "out-of-bounds access to %" << buffer << " dim " << i << ": "
           << v << " not in [0, " << decl.shape.dims[i] << ")";
        fail(os.str());
      }
      flat += v * bs.strides[i];
    }
    return {b, flat};
  }

  // True iff the two contexts are distinct instances of a common parallel
  // loop execution.
  bool sibling_conflict(uint32_t writer, uint32_t reader) const {
    for (uint32_t w = writer; w != 0; w = contexts[w].parent)
      for (uint32_t r = reader; r != 0; r = contexts[r].parent)
        if (contexts[w].epoch == contexts[r].epoch)
          return contexts[w].instance != contexts[r].instance;
    return false;
  }

  uint32_t make_value(ValueInfo info) {
    dfg.values.push_back(info);
    return static_cast<uint32_t>(dfg.values.size() - 1);
  }

  void exec_load(const Load& l) {
    auto [b, flat] = resolve_cell(l.buffer, l.indices);
    BufferState& bs = state[static_cast<size_t>(b)];
    uint32_t cell = bs.cells[static_cast<size_t>(flat)];
    if (cell == kNoValue) {
      BufferKind kind = dfg.buffers[static_cast<size_t>(b)].kind;
      if (kind == BufferKind::input || kind == BufferKind::weight) {
        ValueInfo info;
        info.kind = ValueKind::input_element;
        info.buffer = static_cast<uint32_t>(b);
        info.flat_index = flat;
        cell = make_value(info);
        bs.cells[static_cast<size_t>(flat)] = cell;  // memoize the leaf
      } else {
        std::ostringstream os;
        os << "uninitialized read of %" << dfg.buffers[static_cast<size_t>(b)].id
           << "[" << flat << "]";
        fail(os.str());
      }
    } else if (bs.write_count[static_cast<size_t>(flat)] > 0 &&
               sibling_conflict(bs.writer_ctx[static_cast<size_t>(flat)],
                                current_ctx)) {
      std::ostringstream os;
      os << "parallel dependence violation: %"
         << dfg.buffers[static_cast<size_t>(b)].id << "[" << flat
         << "] was written by a sibling instance of the same parallel loop";
      fail(os.str());
    }
    value_env[l.result] = cell;
  }

  void exec_store(const Store& s) {
    uint32_t v = lookup_value(s.operand);
    auto [b, flat] = resolve_cell(s.buffer, s.indices);
    BufferState& bs = state[static_cast<size_t>(b)];
    bs.cells[static_cast<size_t>(flat)] = v;
    bs.writer_ctx[static_cast<size_t>(flat)] = current_ctx;
    ++bs.write_count[static_cast<size_t>(flat)];
  }

  void exec_arith(const Arith& a) {
    DfgNode node;
    node.kind = a.kind;
    node.operand_count = static_cast<uint8_t>(a.operands.size());
    if (a.operands.size() > 3) fail("arith with more than 3 operands");
    for (size_t i = 0; i < a.operands.size(); ++i)
      node.operands[i] = lookup_value(a.operands[i]);
    uint32_t node_id = static_cast<uint32_t>(dfg.nodes.size());
    ValueInfo info;
    info.kind = ValueKind::op_result;
    info.node = node_id;
    node.result = make_value(info);
    dfg.nodes.push_back(node);
    value_env[a.result] = node.result;

    if (a.reduction) {
      std::vector<int64_t> key;
      key.reserve(iv_stack.size());
      for (const auto& iv : iv_stack) {
        bool reduced = false;
        for (const auto& riv : a.reduction->ivs)
          if (riv == iv) {
            reduced = true;
            break;
          }
        if (!reduced) key.push_back(index_env[iv]);
      }
      auto mk = std::make_pair(a.reduction->id, std::move(key));
      auto it = chain_keys.find(mk);
      if (it == chain_keys.end()) {
        it = chain_keys.emplace(std::move(mk), dfg.chains.size()).first;
        dfg.chains.push_back({a.reduction->id, {}});
      }
      dfg.chains[it->second].nodes.push_back(node_id);
    }
  }

  void exec_const(const ConstF& c) {
    uint64_t bits = std::bit_cast<uint64_t>(c.literal);
    auto it = const_pool.find(bits);
    if (it == const_pool.end()) {
      ValueInfo info;
      info.kind = ValueKind::constant;
      info.literal = c.literal;
      it = const_pool.emplace(bits, make_value(info)).first;
    }
    value_env[c.result] = it->second;
  }

  void exec_index_arith(const IndexArith& ia) {
    int64_t l = eval_term(ia.lhs);
    int64_t r = eval_term(ia.rhs);
    index_env[ia.result] = ia.kind == IndexOpKind::addi ? l + r : l * r;
  }

  void exec_block(const std::vector<Statement>& body) {
    for (const auto& st : body) exec_statement(st);
  }

  void exec_statement(const Statement& st) {
    if (st.is<Load>()) {
      exec_load(st.as<Load>());
    } else if (st.is<Store>()) {
      exec_store(st.as<Store>());
    } else if (st.is<Arith>()) {
      exec_arith(st.as<Arith>());
    } else if (st.is<ConstF>()) {
      exec_const(st.as<ConstF>());
    } else if (st.is<IndexArith>()) {
      exec_index_arith(st.as<IndexArith>());
    } else if (st.is<SequentialFor>()) {
      const auto& f = st.as<SequentialFor>();
      if (f.step <= 0) fail("loop %" + f.iv + " has non-positive step");
      iv_stack.push_back(f.iv);
      for (int64_t v = f.lower; v < f.upper; v += f.step) {
        index_env[f.iv] = v;
        exec_block(f.body);
      }
      iv_stack.pop_back();
      index_env.erase(f.iv);
    } else if (st.is<ParallelFor>()) {
      exec_parallel(st.as<ParallelFor>());
    }
  }

  void exec_parallel(const ParallelFor& f) {
    size_t n = f.ivs.size();
    for (size_t i = 0; i < n; ++i)
      if (f.steps[i] <= 0) fail("parallel loop has non-positive step");
    uint64_t epoch = next_epoch++;
    std::vector<int64_t> iv(n);
    for (size_t i = 0; i < n; ++i) iv[i] = f.lowers[i];
    bool empty = false;
    for (size_t i = 0; i < n; ++i)
      if (f.lowers[i] >= f.uppers[i]) empty = true;
    if (empty) return;

    for (const auto& name : f.ivs) iv_stack.push_back(name);
    uint32_t saved_ctx = current_ctx;
    uint64_t instance = 0;
    for (;;) {
      for (size_t i = 0; i < n; ++i) index_env[f.ivs[i]] = iv[i];
      contexts.push_back({saved_ctx, epoch, instance});
      current_ctx = static_cast<uint32_t>(contexts.size() - 1);
      exec_block(f.body);
      ++instance;
      // odometer over the cartesian iteration space, last iv fastest
      size_t i = n;
      for (;;) {
        if (i == 0) goto done;
        --i;
        iv[i] += f.steps[i];
        if (iv[i] < f.uppers[i]) break;
        iv[i] = f.lowers[i];
      }
    }
  done:
    current_ctx = saved_ctx;
    for (size_t i = 0; i < n; ++i) {
      iv_stack.pop_back();
      index_env.erase(f.ivs[n - 1 - i]);
    }
  }

  DataflowGraph run() {
    auto t0 = std::chrono::steady_clock::now();
    exec_block(program.body);
    // collect outputs; every output cell must be defined
    for (size_t b = 0; b < dfg.buffers.size(); ++b) {
      if (dfg.buffers[b].kind != BufferKind::output) continue;
      const BufferState& bs = state[b];
      for (size_t i = 0; i < bs.cells.size(); ++i) {
        if (bs.cells[i] == kNoValue) {
          std::ostringstream os;
          os << "output cell %" << dfg.buffers[b].id << "[" << i
             << "] is never written";
          fail(os.str());
        }
        dfg.outputs.push_back({static_cast<uint32_t>(b),
                               static_cast<int64_t>(i), bs.cells[i]});
      }
    }
    auto t1 = std::chrono::steady_clock::now();
    dfg.trace_seconds = std::chrono::duration<double>(t1 - t0).count();
    return std::move(dfg);
  }
};

}  // namespace

DataflowGraph trace(const LoopNestProgram& program) {
  return Tracer(program).run();
}

EvalResult evaluate_numeric(
    const DataflowGraph& dfg,
    const std::map<std::string, std::vector<double>>& inputs,
    const EvaluationRules& rules) {
  // Resolve the input tensor for every buffer that owns leaves.
  std::vector<const std::vector<double>*> tensors(dfg.buffers.size(), nullptr);
  for (size_t b = 0; b < dfg.buffers.size(); ++b) {
    auto it = inputs.find(dfg.buffers[b].id);
    if (it == inputs.end()) continue;
    if (static_cast<int64_t>(it->second.size()) !=
        dfg.buffers[b].shape.num_elements())
      throw TraceError("input tensor %" + dfg.buffers[b].id +
                       " has wrong element count");
    tensors[b] = &it->second;
  }
  auto leaf_value = [&](const ValueInfo& v) -> double {
    if (!tensors[v.buffer])
      throw TraceError("missing input tensor %" + dfg.buffers[v.buffer].id);
    return (*tensors[v.buffer])[static_cast<size_t>(v.flat_index)];
  };

  EvalResult result;
  if (!rules.use_fp) {
    std::vector<double> vals(dfg.values.size(), 0.0);
    for (size_t i = 0; i < dfg.values.size(); ++i) {
      const ValueInfo& v = dfg.values[i];
      if (v.kind == ValueKind::constant) vals[i] = v.literal;
      else if (v.kind == ValueKind::input_element) vals[i] = leaf_value(v);
    }
    for (const auto& n : dfg.nodes) {
      const double a = vals[n.operands[0]];
      const double b = n.operand_count > 1 ? vals[n.operands[1]] : 0.0;
      const double c = n.operand_count > 2 ? vals[n.operands[2]] : 0.0;
      double r = 0.0;
      switch (n.kind) {
        case ArithKind::mulf: r = a * b; break;
        case ArithKind::divf: r = a / b; break;
        case ArithKind::addf: r = a + b; break;
        case ArithKind::subf: r = a - b; break;
        case ArithKind::sqrtf: r = std::sqrt(a); break;
        case ArithKind::cmpfugt:
          r = (std::isnan(a) || std::isnan(b) || a > b) ? 1.0 : 0.0;
          break;
        case ArithKind::select: r = a != 0.0 ? b : c; break;
        case ArithKind::max:
          if (std::isnan(a) || std::isnan(b))
            r = std::numeric_limits<double>::quiet_NaN();
          else if (a > b)
            r = a;
          else if (b > a)
            r = b;
          else
            r = std::signbit(a) ? b : a;  // +-0 tie: positive wins
          break;
        case ArithKind::neg: r = -a; break;
        case ArithKind::relu:
          r = std::isnan(a) ? a : (a > 0.0 ? a : 0.0);
          break;
        case ArithKind::fmac: r = std::fma(a, b, c); break;
      }
      vals[n.result] = r;
    }
    for (const auto& out : dfg.outputs) {
      auto& t = result.tensors[dfg.buffers[out.buffer].id];
      if (t.empty())
        t.resize(static_cast<size_t>(
            dfg.buffers[out.buffer].shape.num_elements()));
      t[static_cast<size_t>(out.flat_index)] = vals[out.value];
    }
    return result;
  }

  const FloatFormat fmt = rules.fmt;
  std::vector<FPValue> vals(dfg.values.size());
  for (size_t i = 0; i < dfg.values.size(); ++i) {
    const ValueInfo& v = dfg.values[i];
    if (v.kind == ValueKind::constant) vals[i] = encode(v.literal, fmt);
    else if (v.kind == ValueKind::input_element)
      vals[i] = encode(leaf_value(v), fmt);
  }
  for (const auto& n : dfg.nodes) {
    FPValue ops[3];
    for (int i = 0; i < n.operand_count; ++i) ops[i] = vals[n.operands[i]];
    vals[n.result] = fp_apply(n.kind, ops, n.operand_count, fmt);
  }
  for (const auto& out : dfg.outputs) {
    const std::string& id = dfg.buffers[out.buffer].id;
    auto& t = result.tensors[id];
    auto& bits = result.bits[id];
    if (t.empty()) {
      size_t n = static_cast<size_t>(
          dfg.buffers[out.buffer].shape.num_elements());
      t.resize(n);
      bits.resize(n);
    }
    t[static_cast<size_t>(out.flat_index)] = decode(vals[out.value], fmt);
    bits[static_cast<size_t>(out.flat_index)] = vals[out.value];
  }
  return result;
}

TraceStats trace_stats(const DataflowGraph& dfg) {
  TraceStats s;
  s.trace_seconds = dfg.trace_seconds;
  s.total_nodes = dfg.nodes.size();
  for (const auto& n : dfg.nodes) ++s.node_counts[n.kind];
  for (const auto& v : dfg.values) {
    if (v.kind != ValueKind::input_element) continue;
    if (dfg.buffers[v.buffer].kind == BufferKind::weight)
      ++s.weight_elements;
    else
      ++s.input_elements;
  }
  s.output_elements = dfg.outputs.size();
  return s;
}

std::string dump_dfg(const DataflowGraph& dfg) {
  std::ostringstream os;
  for (size_t i = 0; i < dfg.values.size(); ++i) {
    const ValueInfo& v = dfg.values[i];
    if (v.kind == ValueKind::constant) {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%.17g", v.literal);
      os << "value " << i << " const " << buf << "\n";
    } else if (v.kind == ValueKind::input_element) {
      os << "value " << i << " leaf %" << dfg.buffers[v.buffer].id << "["
         << v.flat_index << "]\n";
    }
  }
  for (size_t i = 0; i < dfg.nodes.size(); ++i) {
    const DfgNode& n = dfg.nodes[i];
    os << "node " << i << " " << kind_name(n.kind);
    for (int k = 0; k < n.operand_count; ++k) os << " " << n.operands[k];
    os << " -> " << n.result << "\n";
  }
  for (const auto& out : dfg.outputs)
    os << "output %" << dfg.buffers[out.buffer].id << "[" << out.flat_index
       << "] = " << out.value << "\n";
  return os.str();
}

std::vector<Diagnostic> check_dfg(const DataflowGraph& dfg) {
  std::vector<Diagnostic> diags;
  std::vector<int64_t> ready(dfg.values.size(), -1);  // defining node position
  for (size_t i = 0; i < dfg.values.size(); ++i) {
    const ValueInfo& v = dfg.values[i];
    if (v.kind != ValueKind::op_result) ready[i] = 0;
    if (v.kind == ValueKind::op_result && v.node >= dfg.nodes.size())
      diags.push_back({"", "value " + std::to_string(i) +
                               " references missing node"});
    if (v.kind == ValueKind::input_element && v.buffer >= dfg.buffers.size())
      diags.push_back({"", "value " + std::to_string(i) +
                               " references missing buffer"});
  }
  for (size_t i = 0; i < dfg.nodes.size(); ++i) {
    const DfgNode& n = dfg.nodes[i];
    if (n.operand_count != arity(n.kind))
      diags.push_back({"", "node " + std::to_string(i) + " has bad arity"});
    if (n.result >= dfg.values.size() ||
        dfg.values[n.result].kind != ValueKind::op_result ||
        dfg.values[n.result].node != i) {
      diags.push_back({"", "node " + std::to_string(i) +
                               " result value does not point back"});
      continue;
    }
    for (int k = 0; k < n.operand_count; ++k) {
      uint32_t op = n.operands[k];
      if (op >= dfg.values.size()) {
        diags.push_back({"", "node " + std::to_string(i) +
                                 " has dangling operand id"});
        continue;
      }
      if (ready[op] < 0)
        diags.push_back({"", "node " + std::to_string(i) +
                                 " uses value not yet defined in trace order"});
    }
    ready[n.result] = static_cast<int64_t>(i) + 1;
  }
  std::set<std::pair<uint32_t, int64_t>> seen_cells;
  for (const auto& out : dfg.outputs) {
    if (out.value >= dfg.values.size() || ready[out.value] < 0)
      diags.push_back({"", "output cell references undefined value"});
    if (out.buffer >= dfg.buffers.size())
      diags.push_back({"", "output cell references missing buffer"});
    if (!seen_cells.insert({out.buffer, out.flat_index}).second)
      diags.push_back({"", "output cell mapped to more than one value"});
  }
  return diags;
}

}  // namespace thls
