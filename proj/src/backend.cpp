// SPDX-License-Identifier: Apache-2.0
#include "tracehls/backend.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <random>
#include <set>
#include <sstream>

namespace thls {

std::vector<double> random_inputs(uint64_t seed, size_t count) {
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
  std::vector<double> out(count);
  for (size_t i = 0; i < count; ++i) {
    // 53 uniform bits -> [0,1) -> [-2,2); bit-exact across platforms
    double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    out[i] = u * 4.0 - 2.0;
  }
  return out;
}

std::string sanitize_name(const std::string& id) {
  std::string out;
  for (char c : id)
    out.push_back(std::isalnum(static_cast<unsigned char>(c)) ? c : '_');
  if (out.empty() || std::isdigit(static_cast<unsigned char>(out[0])))
    out.insert(out.begin(), 'b');
  return out;
}

namespace {

std::string hex_word(uint64_t bits, int width) {
  int digits = (width + 3) / 4;
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%0*llx", digits,
                static_cast<unsigned long long>(bits));
  return buf;
}

std::string hex_literal(uint64_t bits, int width) {
  return std::to_string(width) + "'h" + hex_word(bits, width);
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Per-buffer sanitized names with collision suffixes.
std::map<std::string, std::string> buffer_net_names(const DataflowGraph& dfg) {
  std::map<std::string, std::string> names;
  std::set<std::string> used;
  for (const auto& b : dfg.buffers) {
    std::string base = sanitize_name(b.id);
    std::string name = base;
    int suffix = 2;
    while (!used.insert(name).second) name = base + "_" + std::to_string(suffix++);
    names[b.id] = name;
  }
  return names;
}

}  // namespace

std::string emit_rtl(const DataflowGraph& dfg, const Schedule& sched,
                     const Binding& binding, const ResourceModel& model,
                     const FloatFormat& fmt,
                     const std::map<std::string, std::vector<double>>& weights,
                     const std::string& top_name) {
  const int W = fmt.total_width();
  const size_t n_nodes = dfg.nodes.size();
  if (sched.start.size() != n_nodes || binding.instance.size() != n_nodes)
    throw BackendError("emit_rtl: schedule/binding do not match the graph");

  // capacity audit
  for (const auto& [kind, used] : binding.instances_used) {
    auto cap = model.capacity(kind);
    if (cap && used > *cap)
      throw BackendError("emit_rtl: instance count for " +
                         std::string(kind_name(kind)) + " exceeds capacity");
  }

  std::map<std::string, std::string> net = buffer_net_names(dfg);

  // weight tensors must cover every weight leaf
  std::vector<const std::vector<double>*> weight_data(dfg.buffers.size(),
                                                      nullptr);
  for (size_t b = 0; b < dfg.buffers.size(); ++b) {
    if (dfg.buffers[b].kind != BufferKind::weight) continue;
    auto it = weights.find(dfg.buffers[b].id);
    if (it == weights.end())
      throw BackendError("emit_rtl: missing weight tensor %" +
                         dfg.buffers[b].id);
    if (static_cast<int64_t>(it->second.size()) !=
        dfg.buffers[b].shape.num_elements())
      throw BackendError("emit_rtl: weight tensor %" + dfg.buffers[b].id +
                         " has wrong element count");
    weight_data[b] = &it->second;
  }

  // node timing
  std::vector<int64_t> completion(n_nodes, 0);
  for (size_t i = 0; i < n_nodes; ++i)
    completion[i] = sched.start[i] + model.spec(dfg.nodes[i].kind).latency;

  // per (kind, instance): bound nodes in issue order
  std::map<std::pair<ArithKind, uint32_t>, std::vector<uint32_t>> instances;
  for (size_t i = 0; i < n_nodes; ++i)
    instances[{dfg.nodes[i].kind, binding.instance[i]}].push_back(
        static_cast<uint32_t>(i));
  size_t bound_nodes = 0;
  for (auto& [key, nodes] : instances) {
    (void)key;
    std::stable_sort(nodes.begin(), nodes.end(), [&](uint32_t a, uint32_t b) {
      return sched.start[a] < sched.start[b];
    });
    bound_nodes += nodes.size();
  }
  if (bound_nodes != n_nodes)
    throw BackendError("emit_rtl: node/instance audit failed");

  // consumers per value and crossing sets per boundary
  std::vector<std::vector<uint32_t>> consumers(dfg.values.size());
  for (size_t i = 0; i < n_nodes; ++i)
    for (int k = 0; k < dfg.nodes[i].operand_count; ++k)
      consumers[dfg.nodes[i].operands[k]].push_back(static_cast<uint32_t>(i));

  std::vector<std::vector<uint32_t>> crossing;  // per boundary, sorted value ids
  for (int64_t b : sched.stage_boundaries)
    crossing.push_back(crossing_values(dfg, sched, model, b));
  // boundaries crossed per value
  std::vector<std::vector<int>> crossed_by(dfg.values.size());
  for (size_t q = 0; q < crossing.size(); ++q)
    for (uint32_t v : crossing[q]) crossed_by[v].push_back(static_cast<int>(q));

  // produced cycle per value (leaves at 0)
  std::vector<int64_t> produced(dfg.values.size(), 0);
  for (size_t i = 0; i < n_nodes; ++i)
    produced[dfg.nodes[i].result] = completion[i];

  auto instance_wire = [&](uint32_t node, char port) {
    const DfgNode& nd = dfg.nodes[node];
    return std::string("u_") + std::string(kind_name(nd.kind)) + "_" +
           std::to_string(binding.instance[node]) + "_" + port;
  };

  // Textual source of a value when read during cycle `at`.
  auto value_source = [&](uint32_t value, int64_t at) -> std::string {
    const ValueInfo& v = dfg.values[value];
    if (v.kind == ValueKind::constant ||
        (v.kind == ValueKind::input_element &&
         dfg.buffers[v.buffer].kind == BufferKind::weight))
      return "c_" + std::to_string(value);
    // pick the latest stage register latched strictly before `at`
    int best = -1;
    for (int q : crossed_by[value])
      if (sched.stage_boundaries[static_cast<size_t>(q)] < at) best = q;
    if (best >= 0)
      return "v" + std::to_string(value) + "_p" + std::to_string(best);
    if (v.kind == ValueKind::input_element)
      return "r_in_" + net.at(dfg.buffers[v.buffer].id) + "_" +
             std::to_string(v.flat_index);
    if (produced[value] == at) return instance_wire(v.node, 'y');
    return "v" + std::to_string(value);
  };

  std::ostringstream os;
  os << "// " << top_name << ": statically scheduled datapath, "
     << sched.total_intervals << " intervals, fp(" << fmt.we << "," << fmt.wf
     << ") W=" << W << "\n";
  os << "module " << top_name << "(\n";
  os << "  input wire clk,\n  input wire rst,\n  input wire in_valid";

  struct PortCell {
    std::string name;
    uint32_t value;  // for inputs: leaf value id; for outputs: source value
    int64_t cycle;   // outputs: latch cycle
  };
  std::vector<PortCell> in_ports;
  // input leaves in (buffer, flat) order for stable port layout
  {
    std::vector<std::pair<std::pair<uint32_t, int64_t>, uint32_t>> leaves;
    for (size_t i = 0; i < dfg.values.size(); ++i) {
      const ValueInfo& v = dfg.values[i];
      if (v.kind != ValueKind::input_element) continue;
      if (dfg.buffers[v.buffer].kind != BufferKind::input) continue;
      leaves.push_back({{v.buffer, v.flat_index}, static_cast<uint32_t>(i)});
    }
    std::sort(leaves.begin(), leaves.end());
    for (const auto& [cell, value] : leaves)
      in_ports.push_back({"in_" + net.at(dfg.buffers[cell.first].id) + "_" +
                              std::to_string(cell.second),
                          value, 0});
  }
  std::vector<PortCell> out_ports;
  for (const auto& out : dfg.outputs)
    out_ports.push_back({"out_" + net.at(dfg.buffers[out.buffer].id) + "_" +
                             std::to_string(out.flat_index),
                         out.value, produced[out.value]});

  for (const auto& p : in_ports)
    os << ",\n  input wire [" << W - 1 << ":0] " << p.name;
  for (const auto& p : out_ports)
    os << ",\n  output reg [" << W - 1 << ":0] " << p.name;
  os << ",\n  output wire done\n);\n\n";

  os << "  localparam TOTAL = 32'd" << sched.total_intervals << ";\n";
  os << "  reg running;\n  reg [31:0] cycle;\n";
  os << "  always @(posedge clk) begin\n"
     << "    if (rst) begin\n"
     << "      running <= 1'b0;\n"
     << "      cycle <= 32'd0;\n"
     << "    end else if (!running) begin\n"
     << "      if (in_valid) begin\n"
     << "        running <= 1'b1;\n"
     << "        cycle <= 32'd0;\n"
     << "      end\n"
     << "    end else if (cycle <= TOTAL) begin\n"
     << "      cycle <= cycle + 32'd1;\n"
     << "    end\n"
     << "  end\n";
  os << "  assign done = running && (cycle >= TOTAL);\n\n";

  // input capture registers
  if (!in_ports.empty()) {
    os << "  // input registers, latched when the design accepts in_valid\n";
    for (const auto& p : in_ports)
      os << "  reg [" << W - 1 << ":0] r_" << p.name << ";\n";
    os << "  always @(posedge clk) begin\n"
       << "    if (!running && in_valid) begin\n";
    for (const auto& p : in_ports)
      os << "      r_" << p.name << " <= " << p.name << ";\n";
    os << "    end\n  end\n\n";
  }

  // registered constants: literal constants and weight elements
  bool any_const = false;
  for (const auto& v : dfg.values)
    if (v.kind == ValueKind::constant ||
        (v.kind == ValueKind::input_element &&
         dfg.buffers[v.buffer].kind == BufferKind::weight))
      any_const = true;
  if (any_const) os << "  // registered constants (weights and literals)\n";
  for (size_t i = 0; i < dfg.values.size(); ++i) {
    const ValueInfo& v = dfg.values[i];
    if (v.kind == ValueKind::constant) {
      FPValue enc = encode(v.literal, fmt);
      os << "  wire [" << W - 1 << ":0] c_" << i << " = "
         << hex_literal(enc.bits, W) << ";  // " << fmt_double(v.literal)
         << "\n";
    } else if (v.kind == ValueKind::input_element &&
               dfg.buffers[v.buffer].kind == BufferKind::weight) {
      double w = (*weight_data[v.buffer])[static_cast<size_t>(v.flat_index)];
      FPValue enc = encode(w, fmt);
      os << "  wire [" << W - 1 << ":0] c_" << i << " = "
         << hex_literal(enc.bits, W) << ";  // %" << dfg.buffers[v.buffer].id
         << "[" << v.flat_index << "] = " << fmt_double(w) << "\n";
    }
  }
  if (any_const) os << "\n";

  // result registers for op values consumed after their completion cycle
  std::vector<bool> needs_reg(dfg.values.size(), false);
  for (size_t i = 0; i < dfg.values.size(); ++i) {
    const ValueInfo& v = dfg.values[i];
    if (v.kind != ValueKind::op_result) continue;
    for (uint32_t c : consumers[i])
      if (sched.start[c] > produced[i]) needs_reg[i] = true;
    if (!crossed_by[i].empty()) needs_reg[i] = true;
  }
  bool any_reg = false;
  for (size_t i = 0; i < dfg.values.size(); ++i)
    if (needs_reg[i] || !crossed_by[i].empty()) any_reg = true;
  if (any_reg) {
    os << "  // value registers\n";
    for (size_t i = 0; i < dfg.values.size(); ++i) {
      if (needs_reg[i]) os << "  reg [" << W - 1 << ":0] v" << i << ";\n";
      for (int q : crossed_by[i])
        os << "  reg [" << W - 1 << ":0] v" << i << "_p" << q << ";\n";
    }
    os << "\n";
  }

  // operator instances and operand muxes
  os << "  // operator instances\n";
  for (const auto& [key, nodes] : instances) {
    const auto& [kind, inst] = key;
    std::string base =
        "u_" + std::string(kind_name(kind)) + "_" + std::to_string(inst);
    int ar = arity(kind);
    const char* port_letters = kind == ArithKind::select ? "sab" : "abc";
    for (int k = 0; k < ar; ++k) {
      os << "  wire [" << W - 1 << ":0] " << base << "_" << port_letters[k]
         << " = ";
      for (uint32_t node : nodes) {
        os << "(cycle == 32'd" << sched.start[node] << ") ? "
           << value_source(dfg.nodes[node].operands[k], sched.start[node])
           << " :\n      ";
      }
      os << hex_literal(0, W) << ";\n";
    }
    os << "  wire [" << W - 1 << ":0] " << base << "_y;\n";
    os << "  fp_" << kind_name(kind) << " " << base << " (.clk(clk)";
    for (int k = 0; k < ar; ++k)
      os << ", ." << port_letters[k] << "(" << base << "_" << port_letters[k]
         << ")";
    os << ", .y(" << base << "_y));\n";
  }
  os << "\n";

  // schedule-driven result capture
  {
    std::vector<uint32_t> order(n_nodes);
    for (size_t i = 0; i < n_nodes; ++i) order[i] = static_cast<uint32_t>(i);
    std::stable_sort(order.begin(), order.end(), [&](uint32_t a, uint32_t b) {
      return completion[a] < completion[b];
    });
    std::ostringstream captures;
    for (uint32_t i : order) {
      uint32_t value = dfg.nodes[i].result;
      if (!needs_reg[value]) continue;
      captures << "      if (cycle == 32'd" << completion[i] << ") v" << value
               << " <= " << instance_wire(i, 'y') << ";\n";
    }
    if (!captures.str().empty()) {
      os << "  // result capture per the static schedule\n";
      os << "  always @(posedge clk) begin\n    if (running) begin\n";
      os << captures.str();
      os << "    end\n  end\n\n";
    }
  }

  // stage registers: launch/latch pairs across each boundary
  if (!sched.stage_boundaries.empty()) {
    os << "  // stage registers at pipeline boundaries\n";
    os << "  always @(posedge clk) begin\n    if (running) begin\n";
    for (size_t q = 0; q < crossing.size(); ++q) {
      int64_t b = sched.stage_boundaries[q];
      for (uint32_t v : crossing[q])
        os << "      if (cycle == 32'd" << b << ") v" << v << "_p" << q
           << " <= " << value_source(v, b) << ";\n";
    }
    os << "    end\n  end\n\n";
  }

  // output latches at producer completion
  os << "  // output latches\n";
  os << "  always @(posedge clk) begin\n    if (running) begin\n";
  for (const auto& p : out_ports)
    os << "      if (cycle == 32'd" << p.cycle << ") " << p.name << " <= "
       << value_source(p.value, p.cycle) << ";\n";
  os << "    end\n  end\n\n";
  os << "endmodule\n";
  return os.str();
}

namespace {

// Shared Verilog helper functions, emitted once per operator module.
std::string fp_helper_functions(const FloatFormat& fmt) {
  const int W = fmt.total_width();
  const int we = fmt.we, wf = fmt.wf;
  std::ostringstream os;
  auto wrange = [&](int hi, int lo) {
    return "[" + std::to_string(hi) + ":" + std::to_string(lo) + "]";
  };
  const int exc_hi = W - 1, exc_lo = W - 2;
  const int sign_bit = W - 3;
  const int exp_hi = W - 4, exp_lo = wf;
  const int frac_hi = wf - 1;

  os << "  function [1:0] cls;\n"
     << "    input [" << W - 1 << ":0] x;\n"
     << "    cls = x" << wrange(exc_hi, exc_lo) << ";\n"
     << "  endfunction\n\n";
  os << "  function sgn;\n"
     << "    input [" << W - 1 << ":0] x;\n"
     << "    sgn = x[" << sign_bit << "];\n"
     << "  endfunction\n\n";
  os << "  function [" << W - 1 << ":0] canon;\n"
     << "    input [" << W - 1 << ":0] x;\n"
     << "    if (x" << wrange(exc_hi, exc_lo) << " == 2'd1) canon = x;\n"
     << "    else if (x" << wrange(exc_hi, exc_lo) << " == 2'd3) canon = {2'd3, "
     << std::to_string(W - 2) << "'d0};\n"
     << "    else canon = {x" << wrange(exc_hi, exc_lo) << ", x[" << sign_bit
     << "], " << std::to_string(W - 3) << "'d0};\n"
     << "  endfunction\n\n";
  os << "  function [" << W - 1 << ":0] special;\n"
     << "    input [1:0] cv;\n"
     << "    input sv;\n"
     << "    special = {cv, sv, " << std::to_string(W - 3) << "'d0};\n"
     << "  endfunction\n\n";
  // format value -> ieee double bits
  os << "  function real to_real;\n"
     << "    input [" << W - 1 << ":0] x;\n"
     << "    reg [63:0] db;\n"
     << "    reg [10:0] de;\n"
     << "    begin\n"
     << "      if (x" << wrange(exc_hi, exc_lo) << " == 2'd0)\n"
     << "        db = {x[" << sign_bit << "], 63'd0};\n"
     << "      else if (x" << wrange(exc_hi, exc_lo) << " == 2'd2)\n"
     << "        db = {x[" << sign_bit << "], 11'h7ff, 52'd0};\n"
     << "      else if (x" << wrange(exc_hi, exc_lo) << " == 2'd3)\n"
     << "        db = {1'b0, 11'h7ff, 52'h8000000000000};\n"
     << "      else begin\n"
     << "        de = x" << wrange(exp_hi, exp_lo) << " + 11'd"
     << (1023 - fmt.bias()) << ";\n"
     << "        db = {x[" << sign_bit << "], de, x" << wrange(frac_hi, 0)
     << ", " << (52 - wf) << "'d0};\n"
     << "      end\n"
     << "      to_real = $bitstoreal(db);\n"
     << "    end\n"
     << "  endfunction\n\n";
  // ieee double -> round-to-nearest-even format value
  os << "  function [" << W - 1 << ":0] from_real;\n"
     << "    input real r;\n"
     << "    reg [63:0] db;\n"
     << "    reg sb;\n"
     << "    integer de;\n"
     << "    reg [" << wf + 1 << ":0] sig;\n"
     << "    reg [" << we - 1 << ":0] ef;\n"
     << "    reg guard, sticky;\n"
     << "    begin\n"
     << "      db = $realtobits(r);\n"
     << "      sb = db[63];\n"
     << "      de = db[62:52] - 1023;\n"
     << "      if (db[62:52] == 11'd0) from_real = special(2'd0, sb);\n"
     << "      else if (db[62:52] == 11'h7ff)\n"
     << "        from_real = (db[51:0] != 52'd0) ? special(2'd3, 1'b0) : "
        "special(2'd2, sb);\n"
     << "      else if (de < " << fmt.min_exp() << ") from_real = special(2'd0, "
        "sb);\n"
     << "      else begin\n"
     << "        sig = {2'b01, db[51:" << 52 - wf << "]};\n"
     << "        guard = db[" << 51 - wf << "];\n"
     << "        sticky = (db[" << 50 - wf << ":0] != " << 51 - wf << "'d0);\n"
     << "        if (guard && (sticky || sig[0])) sig = sig + 1;\n"
     << "        if (sig[" << wf + 1 << "]) begin\n"
     << "          sig = sig >> 1;\n"
     << "          de = de + 1;\n"
     << "        end\n"
     << "        if (de > " << fmt.max_exp() << ") from_real = special(2'd2, "
        "sb);\n"
     << "        else begin\n"
     << "          ef = de + " << fmt.bias() << ";\n"
     << "          from_real = {2'd1, sb, ef, sig[" << wf - 1 << ":0]};\n"
     << "        end\n"
     << "      end\n"
     << "    end\n"
     << "  endfunction\n\n";
  // strict greater-than on non-NaN values
  os << "  function gt;\n"
     << "    input [" << W - 1 << ":0] x;\n"
     << "    input [" << W - 1 << ":0] y;\n"
     << "    reg bz, xneg, yneg;\n"
     << "    reg [" << we + wf - 1 << ":0] mx, my;\n"
     << "    begin\n"
     << "      bz = (cls(x) == 2'd0) && (cls(y) == 2'd0);\n"
     << "      xneg = sgn(x) && (cls(x) != 2'd0);\n"
     << "      yneg = sgn(y) && (cls(y) != 2'd0);\n"
     << "      mx = {x" << wrange(exp_hi, exp_lo) << ", x" << wrange(frac_hi, 0)
     << "};\n"
     << "      my = {y" << wrange(exp_hi, exp_lo) << ", y" << wrange(frac_hi, 0)
     << "};\n"
     << "      if (bz) gt = 1'b0;\n"
     << "      else if (xneg != yneg) gt = yneg;\n"
     << "      else if (cls(x) == 2'd0) gt = yneg;  // 0 vs nonzero\n"
     << "      else if (cls(y) == 2'd0) gt = !xneg;\n"
     << "      else if (cls(x) == 2'd2 && cls(y) == 2'd2) gt = 1'b0;\n"
     << "      else if (cls(x) == 2'd2) gt = !xneg;\n"
     << "      else if (cls(y) == 2'd2) gt = yneg;\n"
     << "      else if (mx == my) gt = 1'b0;\n"
     << "      else gt = xneg ? (mx < my) : (mx > my);\n"
     << "    end\n"
     << "  endfunction\n\n";
  return os.str();
}

std::string pipeline_stage_text(const FloatFormat& fmt, int64_t latency) {
  const int W = fmt.total_width();
  std::ostringstream os;
  if (latency == 0) {
    os << "  assign y = res;\n";
    return os.str();
  }
  for (int64_t i = 0; i < latency; ++i)
    os << "  reg [" << W - 1 << ":0] p" << i << ";\n";
  os << "  always @(posedge clk) begin\n";
  os << "    p0 <= res;\n";
  for (int64_t i = 1; i < latency; ++i) os << "    p" << i << " <= p" << i - 1
                                           << ";\n";
  os << "  end\n";
  os << "  assign y = p" << latency - 1 << ";\n";
  return os.str();
}

}  // namespace

std::string emit_operator_library(const FloatFormat& fmt,
                                  const ResourceModel& model) {
  const int W = fmt.total_width();
  std::ostringstream os;
  os << "// behavioral operator library for fp(" << fmt.we << "," << fmt.wf
     << "), W=" << W << "\n"
     << "// simulation models: bit-exact against the compiler's functional "
        "float semantics\n\n";

  auto open_module = [&](ArithKind kind) {
    int ar = arity(kind);
    const char* ports = kind == ArithKind::select ? "sab" : "abc";
    os << "module fp_" << kind_name(kind) << "(\n  input wire clk";
    for (int i = 0; i < ar; ++i)
      os << ",\n  input wire [" << W - 1 << ":0] " << ports[i];
    os << ",\n  output wire [" << W - 1 << ":0] y\n);\n";
  };
  auto close_module = [&](ArithKind kind) {
    os << pipeline_stage_text(fmt, model.spec(kind).latency);
    os << "endmodule\n\n";
  };

  // addf / subf
  for (ArithKind kind : {ArithKind::addf, ArithKind::subf}) {
    bool sub = kind == ArithKind::subf;
    open_module(kind);
    os << fp_helper_functions(fmt);
    os << "  function [" << W - 1 << ":0] op_fn;\n"
       << "    input [" << W - 1 << ":0] x;\n"
       << "    input [" << W - 1 << ":0] yy;\n"
       << "    reg sy;\n"
       << "    begin\n"
       << "      sy = " << (sub ? "!sgn(yy)" : "sgn(yy)") << ";\n"
       << "      if (cls(x) == 2'd3 || cls(yy) == 2'd3) op_fn = special(2'd3, "
          "1'b0);\n"
       << "      else if (cls(x) == 2'd2 && cls(yy) == 2'd2)\n"
       << "        op_fn = (sgn(x) != sy) ? special(2'd3, 1'b0) : "
          "special(2'd2, sgn(x));\n"
       << "      else if (cls(x) == 2'd2) op_fn = special(2'd2, sgn(x));\n"
       << "      else if (cls(yy) == 2'd2) op_fn = special(2'd2, sy);\n"
       << "      else if (cls(x) == 2'd0 && cls(yy) == 2'd0)\n"
       << "        op_fn = special(2'd0, sgn(x) & sy);\n"
       << "      else op_fn = from_real(to_real(x) " << (sub ? "-" : "+")
       << " to_real(yy));\n"
       << "    end\n"
       << "  endfunction\n"
       << "  wire [" << W - 1 << ":0] res = op_fn(a, b);\n";
    close_module(kind);
  }

  // mulf
  open_module(ArithKind::mulf);
  os << fp_helper_functions(fmt);
  os << "  function [" << W - 1 << ":0] op_fn;\n"
     << "    input [" << W - 1 << ":0] x;\n"
     << "    input [" << W - 1 << ":0] yy;\n"
     << "    reg so;\n"
     << "    begin\n"
     << "      so = sgn(x) ^ sgn(yy);\n"
     << "      if (cls(x) == 2'd3 || cls(yy) == 2'd3) op_fn = special(2'd3, "
        "1'b0);\n"
     << "      else if ((cls(x) == 2'd2 && cls(yy) == 2'd0) || (cls(x) == 2'd0 "
        "&& cls(yy) == 2'd2)) op_fn = special(2'd3, 1'b0);\n"
     << "      else if (cls(x) == 2'd2 || cls(yy) == 2'd2) op_fn = "
        "special(2'd2, so);\n"
     << "      else if (cls(x) == 2'd0 || cls(yy) == 2'd0) op_fn = "
        "special(2'd0, so);\n"
     << "      else op_fn = from_real(to_real(x) * to_real(yy));\n"
     << "    end\n"
     << "  endfunction\n"
     << "  wire [" << W - 1 << ":0] res = op_fn(a, b);\n";
  close_module(ArithKind::mulf);

  // divf
  open_module(ArithKind::divf);
  os << fp_helper_functions(fmt);
  os << "  function [" << W - 1 << ":0] op_fn;\n"
     << "    input [" << W - 1 << ":0] x;\n"
     << "    input [" << W - 1 << ":0] yy;\n"
     << "    reg so;\n"
     << "    begin\n"
     << "      so = sgn(x) ^ sgn(yy);\n"
     << "      if (cls(x) == 2'd3 || cls(yy) == 2'd3) op_fn = special(2'd3, "
        "1'b0);\n"
     << "      else if (cls(x) == 2'd2 && cls(yy) == 2'd2) op_fn = "
        "special(2'd3, 1'b0);\n"
     << "      else if (cls(x) == 2'd0 && cls(yy) == 2'd0) op_fn = "
        "special(2'd3, 1'b0);\n"
     << "      else if (cls(x) == 2'd2) op_fn = special(2'd2, so);\n"
     << "      else if (cls(yy) == 2'd2) op_fn = special(2'd0, so);\n"
     << "      else if (cls(x) == 2'd0) op_fn = special(2'd0, so);\n"
     << "      else if (cls(yy) == 2'd0) op_fn = special(2'd2, so);\n"
     << "      else op_fn = from_real(to_real(x) / to_real(yy));\n"
     << "    end\n"
     << "  endfunction\n"
     << "  wire [" << W - 1 << ":0] res = op_fn(a, b);\n";
  close_module(ArithKind::divf);

  // sqrtf
  open_module(ArithKind::sqrtf);
  os << fp_helper_functions(fmt);
  os << "  function [" << W - 1 << ":0] op_fn;\n"
     << "    input [" << W - 1 << ":0] x;\n"
     << "    begin\n"
     << "      if (cls(x) == 2'd3) op_fn = special(2'd3, 1'b0);\n"
     << "      else if (cls(x) == 2'd0) op_fn = special(2'd0, sgn(x));\n"
     << "      else if (sgn(x)) op_fn = special(2'd3, 1'b0);\n"
     << "      else if (cls(x) == 2'd2) op_fn = special(2'd2, 1'b0);\n"
     << "      else op_fn = from_real($sqrt(to_real(x)));\n"
     << "    end\n"
     << "  endfunction\n"
     << "  wire [" << W - 1 << ":0] res = op_fn(a);\n";
  close_module(ArithKind::sqrtf);

  // cmpfugt
  open_module(ArithKind::cmpfugt);
  os << fp_helper_functions(fmt);
  os << "  function [" << W - 1 << ":0] op_fn;\n"
     << "    input [" << W - 1 << ":0] x;\n"
     << "    input [" << W - 1 << ":0] yy;\n"
     << "    begin\n"
     << "      if (cls(x) == 2'd3 || cls(yy) == 2'd3 || gt(x, yy))\n"
     << "        op_fn = {2'd1, 1'b0, " << fmt.we << "'d" << fmt.bias() << ", "
     << fmt.wf << "'d0};\n"
     << "      else op_fn = special(2'd0, 1'b0);\n"
     << "    end\n"
     << "  endfunction\n"
     << "  wire [" << W - 1 << ":0] res = op_fn(a, b);\n";
  close_module(ArithKind::cmpfugt);

  // select
  open_module(ArithKind::select);
  os << fp_helper_functions(fmt);
  os << "  wire [" << W - 1 << ":0] res = (cls(s) != 2'd0) ? canon(a) : "
        "canon(b);\n";
  close_module(ArithKind::select);

  // max
  open_module(ArithKind::max);
  os << fp_helper_functions(fmt);
  os << "  function [" << W - 1 << ":0] op_fn;\n"
     << "    input [" << W - 1 << ":0] x;\n"
     << "    input [" << W - 1 << ":0] yy;\n"
     << "    begin\n"
     << "      if (cls(x) == 2'd3 || cls(yy) == 2'd3) op_fn = special(2'd3, "
        "1'b0);\n"
     << "      else if (gt(x, yy)) op_fn = canon(x);\n"
     << "      else if (gt(yy, x)) op_fn = canon(yy);\n"
     << "      else if (sgn(x) != sgn(yy)) op_fn = canon(sgn(x) ? yy : x);\n"
     << "      else op_fn = canon(x);\n"
     << "    end\n"
     << "  endfunction\n"
     << "  wire [" << W - 1 << ":0] res = op_fn(a, b);\n";
  close_module(ArithKind::max);

  // neg
  open_module(ArithKind::neg);
  os << fp_helper_functions(fmt);
  os << "  function [" << W - 1 << ":0] op_fn;\n"
     << "    input [" << W - 1 << ":0] x;\n"
     << "    reg [" << W - 1 << ":0] t;\n"
     << "    begin\n"
     << "      if (cls(x) == 2'd3) op_fn = special(2'd3, 1'b0);\n"
     << "      else begin\n"
     << "        t = canon(x);\n"
     << "        op_fn = {t[" << W - 1 << ":" << W - 2 << "], !t[" << W - 3
     << "], t[" << W - 4 << ":0]};\n"
     << "      end\n"
     << "    end\n"
     << "  endfunction\n"
     << "  wire [" << W - 1 << ":0] res = op_fn(a);\n";
  close_module(ArithKind::neg);

  // relu
  open_module(ArithKind::relu);
  os << fp_helper_functions(fmt);
  os << "  function [" << W - 1 << ":0] op_fn;\n"
     << "    input [" << W - 1 << ":0] x;\n"
     << "    begin\n"
     << "      if (cls(x) == 2'd3) op_fn = special(2'd3, 1'b0);\n"
     << "      else if (!sgn(x) && cls(x) != 2'd0) op_fn = canon(x);\n"
     << "      else op_fn = special(2'd0, 1'b0);\n"
     << "    end\n"
     << "  endfunction\n"
     << "  wire [" << W - 1 << ":0] res = op_fn(a);\n";
  close_module(ArithKind::relu);

  // fmac: single rounding of a*b+c
  open_module(ArithKind::fmac);
  os << fp_helper_functions(fmt);
  os << "  function [" << W - 1 << ":0] op_fn;\n"
     << "    input [" << W - 1 << ":0] x;\n"
     << "    input [" << W - 1 << ":0] yy;\n"
     << "    input [" << W - 1 << ":0] z;\n"
     << "    reg [1:0] pc;\n"
     << "    reg ps;\n"
     << "    begin\n"
     << "      ps = sgn(x) ^ sgn(yy);\n"
     << "      if (cls(x) == 2'd3 || cls(yy) == 2'd3 || cls(z) == 2'd3) pc = "
        "2'd3;\n"
     << "      else if ((cls(x) == 2'd2 && cls(yy) == 2'd0) || (cls(x) == "
        "2'd0 && cls(yy) == 2'd2)) pc = 2'd3;\n"
     << "      else if (cls(x) == 2'd2 || cls(yy) == 2'd2) pc = 2'd2;\n"
     << "      else if (cls(x) == 2'd0 || cls(yy) == 2'd0) pc = 2'd0;\n"
     << "      else pc = 2'd1;\n"
     << "      if (pc == 2'd3) op_fn = special(2'd3, 1'b0);\n"
     << "      else if (pc == 2'd2 && cls(z) == 2'd2)\n"
     << "        op_fn = (ps != sgn(z)) ? special(2'd3, 1'b0) : special(2'd2, "
        "ps);\n"
     << "      else if (pc == 2'd2) op_fn = special(2'd2, ps);\n"
     << "      else if (cls(z) == 2'd2) op_fn = special(2'd2, sgn(z));\n"
     << "      else if (pc == 2'd0 && cls(z) == 2'd0)\n"
     << "        op_fn = special(2'd0, ps & sgn(z));\n"
     << "      else op_fn = from_real(to_real(x) * to_real(yy) + "
        "to_real(z));\n"
     << "    end\n"
     << "  endfunction\n"
     << "  wire [" << W - 1 << ":0] res = op_fn(a, b, c);\n";
  close_module(ArithKind::fmac);

  return os.str();
}

TestbenchFiles emit_testbench(const DataflowGraph& dfg, const FloatFormat& fmt,
                              int n_vectors, uint64_t seed,
                              const std::map<std::string, std::vector<double>>& weights,
                              const std::string& top_name) {
  const int W = fmt.total_width();
  if (n_vectors < 0) throw BackendError("emit_testbench: negative vector count");
  std::map<std::string, std::string> net = buffer_net_names(dfg);

  // stable input port order (matches emit_rtl)
  struct Cell {
    uint32_t buffer;
    int64_t flat;
  };
  std::vector<Cell> in_cells;
  {
    std::vector<std::pair<uint32_t, int64_t>> leaves;
    for (const auto& v : dfg.values)
      if (v.kind == ValueKind::input_element &&
          dfg.buffers[v.buffer].kind == BufferKind::input)
        leaves.push_back({v.buffer, v.flat_index});
    std::sort(leaves.begin(), leaves.end());
    for (auto& [b, f] : leaves) in_cells.push_back({b, f});
  }
  std::vector<Cell> out_cells;
  for (const auto& out : dfg.outputs)
    out_cells.push_back({out.buffer, out.flat_index});

  const size_t ni = in_cells.size(), no = out_cells.size();

  // vectors: random inputs per input buffer, expectations via fp evaluation
  std::ostringstream in_hex, exp_hex;
  std::map<std::string, std::vector<double>> tensors = weights;
  for (int v = 0; v < n_vectors; ++v) {
    for (size_t b = 0; b < dfg.buffers.size(); ++b) {
      if (dfg.buffers[b].kind != BufferKind::input) continue;
      tensors[dfg.buffers[b].id] = random_inputs(
          seed * 1000003ull + v * 7919ull + b,
          static_cast<size_t>(dfg.buffers[b].shape.num_elements()));
    }
    for (const auto& cell : in_cells) {
      double x = tensors[dfg.buffers[cell.buffer].id]
                        [static_cast<size_t>(cell.flat)];
      in_hex << hex_word(encode(x, fmt).bits, W) << "\n";
    }
    EvalResult res =
        evaluate_numeric(dfg, tensors, EvaluationRules::fp_format(fmt));
    for (const auto& cell : out_cells) {
      FPValue bits = res.bits.at(dfg.buffers[cell.buffer].id)
                         [static_cast<size_t>(cell.flat)];
      exp_hex << hex_word(bits.bits, W) << "\n";
    }
  }

  std::ostringstream os;
  os << "`timescale 1ns/1ps\n";
  os << "// self-checking testbench: " << n_vectors
     << " seeded random vectors, bitwise compare\n";
  os << "module tb_" << top_name << ";\n";
  os << "  reg clk;\n  reg rst;\n  reg in_valid;\n";
  for (size_t i = 0; i < ni; ++i)
    os << "  reg [" << W - 1 << ":0] din_" << i << ";\n";
  for (size_t i = 0; i < no; ++i)
    os << "  wire [" << W - 1 << ":0] dout_" << i << ";\n";
  os << "  wire done;\n\n";
  os << "  " << top_name << " dut (\n    .clk(clk), .rst(rst), "
     << ".in_valid(in_valid)";
  for (size_t i = 0; i < ni; ++i)
    os << ",\n    .in_" << net.at(dfg.buffers[in_cells[i].buffer].id) << "_"
       << in_cells[i].flat << "(din_" << i << ")";
  for (size_t i = 0; i < no; ++i)
    os << ",\n    .out_" << net.at(dfg.buffers[out_cells[i].buffer].id) << "_"
       << out_cells[i].flat << "(dout_" << i << ")";
  os << ",\n    .done(done)\n  );\n\n";
  os << "  localparam NV = " << n_vectors << ";\n";
  os << "  localparam NI = " << ni << ";\n";
  os << "  localparam NO = " << no << ";\n";
  size_t in_words = std::max<size_t>(1, ni * static_cast<size_t>(n_vectors));
  size_t out_words = std::max<size_t>(1, no * static_cast<size_t>(n_vectors));
  os << "  reg [" << W - 1 << ":0] vin [0:" << in_words - 1 << "];\n";
  os << "  reg [" << W - 1 << ":0] vexp [0:" << out_words - 1 << "];\n";
  os << "  integer v;\n  integer errors;\n  integer pass_count;\n\n";
  os << "  always #5 clk = ~clk;\n\n";
  os << "  initial begin\n";
  os << "    clk = 1'b0;\n    rst = 1'b1;\n    in_valid = 1'b0;\n";
  os << "    pass_count = 0;\n";
  if (n_vectors > 0) {
    os << "    $readmemh(\"vectors/inputs.hex\", vin);\n";
    os << "    $readmemh(\"vectors/expected.hex\", vexp);\n";
  }
  os << "    for (v = 0; v < NV; v = v + 1) begin\n";
  os << "      rst = 1'b1;\n      in_valid = 1'b0;\n";
  os << "      @(posedge clk);\n      @(posedge clk);\n";
  os << "      rst = 1'b0;\n";
  for (size_t i = 0; i < ni; ++i)
    os << "      din_" << i << " = vin[v * NI + " << i << "];\n";
  os << "      @(negedge clk);\n      in_valid = 1'b1;\n";
  os << "      @(posedge clk);\n      @(negedge clk);\n      in_valid = "
        "1'b0;\n";
  os << "      wait (done);\n      @(posedge clk);\n      #1;\n";
  os << "      errors = 0;\n";
  for (size_t i = 0; i < no; ++i) {
    os << "      if (dout_" << i << " !== vexp[v * NO + " << i << "]) begin\n";
    os << "        errors = errors + 1;\n";
    os << "        $display(\"FAIL vector %0d output " << i
       << ": got %h want %h\", v, dout_" << i << ", vexp[v * NO + " << i
       << "]);\n";
    os << "      end\n";
  }
  os << "      if (errors == 0) begin\n";
  os << "        pass_count = pass_count + 1;\n";
  os << "        $display(\"PASS vector %0d\", v);\n";
  os << "      end\n";
  os << "    end\n";
  os << "    $display(\"PASS %0d / %0d vectors\", pass_count, NV);\n";
  os << "    $finish;\n";
  os << "  end\nendmodule\n";

  TestbenchFiles out;
  out.testbench = os.str();
  out.files.push_back({"vectors/inputs.hex", in_hex.str()});
  out.files.push_back({"vectors/expected.hex", exp_hex.str()});
  return out;
}

}  // namespace thls
