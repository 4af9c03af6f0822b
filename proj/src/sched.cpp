// SPDX-License-Identifier: Apache-2.0
#include "tracehls/sched.hpp"

#include <algorithm>
#include <limits>
#include <sstream>

#include "json.hpp"

namespace thls {

const OperatorSpec& ResourceModel::spec(ArithKind k) const {
  auto it = specs.find(k);
  if (it == specs.end())
    throw ScheduleError("no operator spec for kind " +
                        std::string(kind_name(k)));
  return it->second;
}

std::optional<uint64_t> ResourceModel::capacity(ArithKind k) const {
  auto it = capacities.find(k);
  if (it == capacities.end()) return std::nullopt;
  return it->second;
}

ResourceModel ResourceModel::defaults() {
  ResourceModel m;
  m.specs[ArithKind::addf] = {2, 1};
  m.specs[ArithKind::subf] = {2, 1};
  m.specs[ArithKind::mulf] = {2, 1};
  m.specs[ArithKind::fmac] = {3, 1};
  m.specs[ArithKind::divf] = {8, 1};
  m.specs[ArithKind::sqrtf] = {8, 1};
  m.specs[ArithKind::cmpfugt] = {0, 1};
  m.specs[ArithKind::select] = {0, 1};
  m.specs[ArithKind::max] = {0, 1};
  m.specs[ArithKind::neg] = {0, 1};
  m.specs[ArithKind::relu] = {0, 1};
  return m;
}

void ResourceModel::apply_config(const std::string& json_text) {
  nlohmann::json doc = nlohmann::json::parse(json_text);
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    auto kind = kind_from_name(it.key());
    if (!kind)
      throw ScheduleError("resource config: unknown operation '" + it.key() +
                          "'");
    const nlohmann::json& entry = it.value();
    OperatorSpec& spec = specs[*kind];
    if (entry.contains("latency")) spec.latency = entry["latency"].get<int64_t>();
    if (entry.contains("ii"))
      spec.initiation_interval = entry["ii"].get<int64_t>();
    if (entry.contains("capacity")) {
      if (entry["capacity"].is_null())
        capacities.erase(*kind);
      else
        capacities[*kind] = entry["capacity"].get<uint64_t>();
    }
    if (spec.latency < 0 || spec.initiation_interval < 1)
      throw ScheduleError("resource config: bad spec for '" + it.key() + "'");
  }
}

namespace {

void accumulate_counts(const std::vector<Statement>& body, uint64_t parallel_k,
                       std::map<ArithKind, uint64_t>& counts) {
  for (const auto& st : body) {
    if (st.is<Arith>()) {
      counts[st.as<Arith>().kind] += parallel_k;
    } else if (st.is<SequentialFor>()) {
      accumulate_counts(st.as<SequentialFor>().body, parallel_k, counts);
    } else if (st.is<ParallelFor>()) {
      const auto& f = st.as<ParallelFor>();
      uint64_t k = 1;
      for (size_t i = 0; i < f.ivs.size(); ++i)
        k *= static_cast<uint64_t>(range_size(f.lowers[i], f.uppers[i], f.steps[i]));
      accumulate_counts(f.body, parallel_k * k, counts);
    }
  }
}

}  // namespace

std::map<ArithKind, uint64_t> compute_resource_bound(
    const LoopNestProgram& program) {
  std::map<ArithKind, uint64_t> bound;
  for (const auto& st : program.body) {
    std::map<ArithKind, uint64_t> nest_counts;
    std::vector<Statement> one{st};
    accumulate_counts(one, 1, nest_counts);
    for (const auto& [kind, count] : nest_counts)
      bound[kind] = std::max(bound[kind], count);
  }
  // Capacity for fused multiply-accumulates follows the multiplier bound.
  if (!bound.count(ArithKind::fmac) && bound.count(ArithKind::mulf))
    bound[ArithKind::fmac] = bound[ArithKind::mulf];
  for (auto it = bound.begin(); it != bound.end();)
    it = it->second == 0 ? bound.erase(it) : std::next(it);
  return bound;
}

Binding bind(const DataflowGraph& dfg, const ResourceModel& model) {
  Binding b;
  b.instance.resize(dfg.nodes.size());
  std::map<ArithKind, uint64_t> counters;
  for (size_t i = 0; i < dfg.nodes.size(); ++i) {
    ArithKind kind = dfg.nodes[i].kind;
    uint64_t n = counters[kind]++;
    auto cap = model.capacity(kind);
    uint64_t inst = cap ? n % *cap : n;
    b.instance[i] = static_cast<uint32_t>(inst);
    b.instances_used[kind] = std::max(b.instances_used[kind], inst + 1);
  }
  return b;
}

std::vector<int64_t> Schedule::stage_lengths() const {
  std::vector<int64_t> lengths;
  int64_t prev = 0;
  for (int64_t b : stage_boundaries) {
    lengths.push_back(b - prev);
    prev = b;
  }
  lengths.push_back(total_intervals - prev);
  return lengths;
}

int64_t Schedule::longest_stage() const {
  int64_t best = 0;
  for (int64_t l : stage_lengths()) best = std::max(best, l);
  return best;
}

namespace {

constexpr int kMaxCombChain = 4;

struct InstanceKey {
  ArithKind kind;
  uint32_t instance;
  bool operator<(const InstanceKey& o) const {
    return kind != o.kind ? kind < o.kind : instance < o.instance;
  }
};

}  // namespace

Schedule schedule(const DataflowGraph& dfg, const Binding& binding,
                  const ResourceModel& model,
                  const std::vector<ReductionSubtree>& subtrees) {
  const size_t n = dfg.nodes.size();
  Schedule sched;
  sched.start.assign(n, 0);

  std::vector<int64_t> value_ready(dfg.values.size(), 0);
  std::vector<int> comb_depth(n, 0);
  std::map<InstanceKey, int64_t> last_issue;

  for (size_t i = 0; i < n; ++i) {
    const DfgNode& node = dfg.nodes[i];
    const OperatorSpec& spec = model.spec(node.kind);
    int64_t est = 0;
    for (int k = 0; k < node.operand_count; ++k)
      est = std::max(est, value_ready[node.operands[k]]);
    InstanceKey key{node.kind, binding.instance[i]};
    auto it = last_issue.find(key);
    if (it != last_issue.end())
      est = std::max(est, it->second + spec.initiation_interval);

    int depth = 0;
    if (spec.latency == 0) {
      // combinational chaining depth at the candidate cycle
      for (;;) {
        depth = 1;
        for (int k = 0; k < node.operand_count; ++k) {
          uint32_t op = node.operands[k];
          const ValueInfo& v = dfg.values[op];
          if (v.kind != ValueKind::op_result) continue;
          uint32_t p = v.node;
          if (comb_depth[p] > 0 && sched.start[p] == est)
            depth = std::max(depth, comb_depth[p] + 1);
        }
        if (depth <= kMaxCombChain) break;
        ++est;  // force a register: restart the chain in the next cycle
      }
    }
    comb_depth[i] = spec.latency == 0 ? depth : 0;
    sched.start[i] = est;
    value_ready[node.result] = est + spec.latency;
    last_issue[key] = est;
    sched.total_intervals = std::max(sched.total_intervals, est + spec.latency);
  }

  if (!subtrees.empty()) {
    // Consumers per value, and the trace-order successor on each instance.
    std::vector<std::vector<uint32_t>> consumers(dfg.values.size());
    for (size_t i = 0; i < n; ++i)
      for (int k = 0; k < dfg.nodes[i].operand_count; ++k)
        consumers[dfg.nodes[i].operands[k]].push_back(static_cast<uint32_t>(i));
    std::vector<int64_t> next_issue_bound(n, -1);
    {
      std::map<InstanceKey, int64_t> prev_node;
      for (size_t i = 0; i < n; ++i) {
        InstanceKey key{dfg.nodes[i].kind, binding.instance[i]};
        auto it = prev_node.find(key);
        if (it != prev_node.end())
          next_issue_bound[static_cast<size_t>(it->second)] =
              static_cast<int64_t>(i);
        prev_node[key] = static_cast<int64_t>(i);
      }
    }

    for (const auto& sub : subtrees) {
      // Interior nodes in reverse trace order; the root stays pinned so the
      // subtree's completion cycle is unchanged. Zero-latency ops also stay
      // put: sinking them has no register cost and would re-tangle the
      // combinational chain limit.
      std::vector<uint32_t> members = sub.nodes;
      std::sort(members.begin(), members.end(), std::greater<>());
      for (uint32_t node_id : members) {
        if (node_id == sub.root) continue;
        const DfgNode& node = dfg.nodes[node_id];
        const OperatorSpec& spec = model.spec(node.kind);
        if (spec.latency == 0) continue;
        int64_t bound = std::numeric_limits<int64_t>::max();
        for (uint32_t c : consumers[node.result])
          bound = std::min(bound, sched.start[c] - spec.latency);
        if (bound == std::numeric_limits<int64_t>::max()) continue;
        int64_t succ = next_issue_bound[node_id];
        if (succ >= 0)
          bound = std::min(bound, sched.start[static_cast<size_t>(succ)] -
                                      spec.initiation_interval);
        if (bound > sched.start[node_id]) sched.start[node_id] = bound;
      }
    }
  }
  return sched;
}

std::vector<Diagnostic> validate_schedule(const DataflowGraph& dfg,
                                          const Binding& binding,
                                          const Schedule& sched,
                                          const ResourceModel& model) {
  std::vector<Diagnostic> diags;
  const size_t n = dfg.nodes.size();
  if (sched.start.size() != n || binding.instance.size() != n) {
    diags.push_back({"", "schedule or binding does not cover every node"});
    return diags;
  }
  for (size_t i = 0; i < n; ++i) {
    const DfgNode& node = dfg.nodes[i];
    if (sched.start[i] < 0)
      diags.push_back({"node " + std::to_string(i), "negative start cycle"});
    for (int k = 0; k < node.operand_count; ++k) {
      const ValueInfo& v = dfg.values[node.operands[k]];
      if (v.kind != ValueKind::op_result) continue;
      uint32_t p = v.node;
      int64_t ready = sched.start[p] + model.spec(dfg.nodes[p].kind).latency;
      if (ready > sched.start[i]) {
        std::ostringstream os;
        os << "precedence violated on edge " << p << " -> " << i << ": "
           << ready << " > " << sched.start[i];
        diags.push_back({"node " + std::to_string(i), os.str()});
      }
    }
    auto cap = model.capacity(node.kind);
    if (cap && binding.instance[i] >= *cap)
      diags.push_back({"node " + std::to_string(i),
                       "instance index exceeds capacity of " +
                           std::string(kind_name(node.kind))});
    int64_t end = sched.start[i] + model.spec(node.kind).latency;
    if (end > sched.total_intervals)
      diags.push_back({"node " + std::to_string(i),
                       "completes after total_intervals"});
  }
  // per-instance issue spacing, in trace order
  std::map<InstanceKey, std::pair<int64_t, size_t>> last;
  for (size_t i = 0; i < n; ++i) {
    InstanceKey key{dfg.nodes[i].kind, binding.instance[i]};
    const OperatorSpec& spec = model.spec(dfg.nodes[i].kind);
    auto it = last.find(key);
    if (it != last.end() &&
        sched.start[i] < it->second.first + spec.initiation_interval) {
      std::ostringstream os;
      os << kind_name(dfg.nodes[i].kind) << " instance "
         << binding.instance[i] << ": nodes " << it->second.second << " and "
         << i << " issue closer than the initiation interval";
      diags.push_back({"node " + std::to_string(i), os.str()});
    }
    last[key] = {sched.start[i], i};
  }
  return diags;
}

int64_t critical_path_length(const DataflowGraph& dfg,
                             const ResourceModel& model) {
  int64_t total = 0;
  std::vector<int64_t> ready(dfg.values.size(), 0);
  for (const auto& node : dfg.nodes) {
    int64_t est = 0;
    for (int k = 0; k < node.operand_count; ++k)
      est = std::max(est, ready[node.operands[k]]);
    int64_t end = est + model.spec(node.kind).latency;
    ready[node.result] = end;
    total = std::max(total, end);
  }
  return total;
}

namespace {

struct BruteForce {
  const DataflowGraph& dfg;
  const Binding& binding;
  const ResourceModel& model;
  size_t n;
  std::vector<int64_t> starts;
  std::vector<int64_t> best_starts;
  int64_t best_total;
  std::vector<int64_t> tail;  // longest latency path from node to any sink
  int64_t lower_bound = 0;

  BruteForce(const DataflowGraph& g, const Binding& b, const ResourceModel& m,
             int64_t incumbent)
      : dfg(g), binding(b), model(m), n(g.nodes.size()), best_total(incumbent) {
    starts.assign(n, -1);
    best_starts.assign(n, 0);
    tail.assign(n, 0);
    std::vector<std::vector<uint32_t>> consumers(dfg.values.size());
    for (size_t i = 0; i < n; ++i)
      for (int k = 0; k < dfg.nodes[i].operand_count; ++k)
        consumers[dfg.nodes[i].operands[k]].push_back(static_cast<uint32_t>(i));
    for (size_t i = n; i-- > 0;) {
      int64_t t = 0;
      for (uint32_t c : consumers[dfg.nodes[i].result])
        t = std::max(t, tail[c]);
      tail[i] = t + model.spec(dfg.nodes[i].kind).latency;
      lower_bound = std::max(lower_bound, tail[i]);
    }
  }

  void search(size_t i, int64_t makespan) {
    if (makespan >= best_total) return;  // cannot improve
    if (i == n) {
      best_total = makespan;
      best_starts = starts;
      return;
    }
    const DfgNode& node = dfg.nodes[i];
    const OperatorSpec& spec = model.spec(node.kind);
    int64_t est = 0;
    for (int k = 0; k < node.operand_count; ++k) {
      const ValueInfo& v = dfg.values[node.operands[k]];
      if (v.kind != ValueKind::op_result) continue;
      est = std::max(est, starts[v.node] +
                              model.spec(dfg.nodes[v.node].kind).latency);
    }
    // latest useful start: finishing by best_total - 1 overall
    for (int64_t s = est; s + tail[i] < best_total; ++s) {
      bool ok = true;
      for (size_t j = 0; j < i; ++j) {
        if (dfg.nodes[j].kind != node.kind ||
            binding.instance[j] != binding.instance[i])
          continue;
        int64_t d = s - starts[j];
        if (d < 0) d = -d;
        if (d < spec.initiation_interval) {
          ok = false;
          break;
        }
      }
      if (!ok) continue;
      starts[i] = s;
      search(i + 1, std::max(makespan, s + spec.latency));
      starts[i] = -1;
      if (best_total == lower_bound) return;  // provably optimal already
    }
  }
};

}  // namespace

Schedule brute_force_schedule(const DataflowGraph& dfg, const Binding& binding,
                              const ResourceModel& model) {
  if (dfg.nodes.size() > 12)
    throw ScheduleError("brute_force_schedule: instance too large (" +
                        std::to_string(dfg.nodes.size()) + " nodes)");
  Schedule incumbent = schedule(dfg, binding, model, {});
  BruteForce bf(dfg, binding, model, incumbent.total_intervals + 1);
  bf.search(0, 0);
  Schedule out;
  out.start = bf.best_starts;
  out.total_intervals = bf.best_total;
  if (bf.best_total > incumbent.total_intervals) {
    // incumbent was already optimal
    out = incumbent;
  }
  return out;
}

void assign_stages(Schedule& sched, const std::vector<int64_t>& boundaries) {
  int64_t prev = -1;
  for (int64_t b : boundaries) {
    if (b < 0 || b > sched.total_intervals)
      throw ScheduleError("stage boundary " + std::to_string(b) +
                          " outside [0, " +
                          std::to_string(sched.total_intervals) + "]");
    if (b <= prev)
      throw ScheduleError("stage boundaries must be strictly increasing");
    prev = b;
  }
  sched.stage_boundaries = boundaries;
}

void assign_stages(Schedule& sched, int count) {
  if (count < 1) throw ScheduleError("stage count must be at least 1");
  std::vector<int64_t> boundaries;
  for (int i = 1; i < count; ++i) {
    int64_t b = sched.total_intervals * i / count;
    if (boundaries.empty() || b > boundaries.back()) boundaries.push_back(b);
  }
  assign_stages(sched, boundaries);
}

}  // namespace thls
