// SPDX-License-Identifier: Apache-2.0
#include "tracehls/pipeline.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "json.hpp"

namespace thls {

namespace fs = std::filesystem;
using nlohmann::json;

CompiledDesign run_pipeline(const ModelGraph& graph,
                            const CompileConfig& config) {
  CompiledDesign d;
  d.fmt = config.precision;
  d.name = graph.name;

  LoweredModel lowered =
      lower_model(graph, ExpApprox{config.exp_order}, config.precision);
  d.weights = std::move(lowered.weights);

  TransformPipeline transforms{config.transforms, {}};
  d.program = transforms.run_program(lowered.program);

  std::vector<Diagnostic> diags = validate(d.program);
  if (!diags.empty()) {
    std::string msg = "ir: lowered program failed validation:";
    for (const auto& diag : diags)
      msg += "\n  " + diag.path + ": " + diag.message;
    throw FrontendError(msg);
  }

  d.dfg = transforms.run_graph(trace(d.program));
  d.transform_stats = transforms.stats;

  d.model = ResourceModel::defaults();
  if (!config.resources_path.empty())
    d.model.apply_config(read_file_text(config.resources_path));
  for (const auto& [kind, cap] : compute_resource_bound(d.program))
    if (!d.model.capacities.count(kind)) d.model.capacities[kind] = cap;

  d.binding = bind(d.dfg, d.model);
  d.sched = schedule(d.dfg, d.binding, d.model, d.dfg.subtrees);
  if (!d.dfg.subtrees.empty()) {
    // ALAP placement inside reduction subtrees only shifts slack; it must
    // never change the interval count.
    Schedule asap = schedule(d.dfg, d.binding, d.model, {});
    if (asap.total_intervals != d.sched.total_intervals)
      throw ScheduleError("sched: ALAP placement changed total_intervals (" +
                          std::to_string(asap.total_intervals) + " -> " +
                          std::to_string(d.sched.total_intervals) + ")");
  }
  assign_stages(d.sched, config.stage_boundaries);

  diags = validate_schedule(d.dfg, d.binding, d.sched, d.model);
  if (!diags.empty()) {
    std::string msg = "sched: schedule failed validation:";
    for (const auto& diag : diags)
      msg += "\n  " + diag.path + ": " + diag.message;
    throw ScheduleError(msg);
  }
  return d;
}

CompiledDesign run_pipeline(const CompileConfig& config) {
  ModelGraph graph = load_model(read_file_text(config.model_path),
                                read_file_bytes(config.weights_path));
  return run_pipeline(graph, config);
}

std::map<std::string, std::vector<double>> vector_inputs(
    const CompiledDesign& design, uint64_t seed, int index) {
  std::map<std::string, std::vector<double>> tensors = design.weights;
  for (size_t b = 0; b < design.dfg.buffers.size(); ++b) {
    const DfgBuffer& buf = design.dfg.buffers[b];
    if (buf.kind != BufferKind::input) continue;
    tensors[buf.id] = random_inputs(seed * 1000003ull + index * 7919ull + b,
                                    static_cast<size_t>(buf.shape.num_elements()));
  }
  return tensors;
}

namespace {

json latency_to_json(const LatencyReport& lat) {
  json j;
  j["total_intervals"] = lat.total_intervals;
  j["clock_period_ns"] = lat.clock_period_ns;
  j["end_to_end_ns"] = lat.end_to_end_ns;
  j["stage_lengths"] = lat.stage_lengths;
  j["throughput_us_per_sample"] = lat.throughput_us_per_sample;
  return j;
}

}  // namespace

std::string report_json(const CompiledDesign& design, double clock_ns) {
  json j;
  j["design"] = design.name;
  j["precision"] = design.fmt.str();
  j["total_width"] = design.fmt.total_width();

  j["latency"] = latency_to_json(latency_report(design.sched, clock_ns));
  j["stage_boundaries"] = design.sched.stage_boundaries;

  TraceStats stats = trace_stats(design.dfg);
  json counts = json::object();
  for (const auto& [kind, count] : stats.node_counts)
    counts[std::string(kind_name(kind))] = count;
  j["node_counts"] = counts;
  j["total_nodes"] = stats.total_nodes;
  j["input_elements"] = stats.input_elements;
  j["weight_elements"] = stats.weight_elements;
  j["output_elements"] = stats.output_elements;

  json caps = json::object();
  for (const auto& [kind, cap] : design.model.capacities)
    caps[std::string(kind_name(kind))] = cap;
  j["capacities"] = caps;
  json used = json::object();
  for (const auto& [kind, n] : design.binding.instances_used)
    used[std::string(kind_name(kind))] = n;
  j["instances_used"] = used;

  json bus = json::array();
  for (const auto& r :
       bus_width_report(design.dfg, design.sched, design.model, design.fmt)) {
    json e;
    e["boundary"] = r.boundary;
    e["crossing_values"] = r.crossing_values;
    e["wires"] = r.wires;
    bus.push_back(e);
  }
  j["bus_width"] = bus;

  WeightHistogram hist = weight_histogram(design.weights, design.fmt);
  json buckets = json::object();
  for (const auto& [exp, count] : hist.buckets)
    buckets[std::to_string(exp)] = count;
  j["weight_exponent_histogram"] = {{"buckets", buckets},
                                    {"overflow", hist.overflow},
                                    {"underflow", hist.underflow},
                                    {"zeros", hist.zeros}};

  j["transforms"] = {{"hoisted_weights", design.transform_stats.hoisted_weights},
                     {"relu_recomposed", design.transform_stats.relu_recomposed},
                     {"macs_fused", design.transform_stats.macs_fused},
                     {"chains_reduced", design.transform_stats.chains_reduced}};
  return j.dump(2) + "\n";
}

std::string report_text(const CompiledDesign& design, double clock_ns) {
  std::ostringstream os;
  LatencyReport lat = latency_report(design.sched, clock_ns);
  os << "design " << design.name << "\n";
  os << "  precision        fp(" << design.fmt.str() << "), total width "
     << design.fmt.total_width() << " bits\n";
  os << "  intervals        " << lat.total_intervals << "\n";
  os << "  clock            " << lat.clock_period_ns << " ns\n";
  os << "  end-to-end       " << lat.end_to_end_ns / 1000.0 << " us\n";
  os << "  stages          ";
  for (int64_t l : lat.stage_lengths) os << " " << l;
  os << "\n";
  os << "  throughput       " << lat.throughput_us_per_sample
     << " us/sample\n";
  TraceStats stats = trace_stats(design.dfg);
  os << "  nodes            " << stats.total_nodes << "\n";
  for (const auto& [kind, count] : stats.node_counts) {
    auto cap = design.model.capacity(kind);
    uint64_t used = design.binding.instances_used.count(kind)
                        ? design.binding.instances_used.at(kind)
                        : 0;
    os << "    " << kind_name(kind) << ": " << count << " ops on " << used
       << " instances (capacity "
       << (cap ? std::to_string(*cap) : std::string("unbounded")) << ")\n";
  }
  for (const auto& r :
       bus_width_report(design.dfg, design.sched, design.model, design.fmt))
    os << "  boundary @" << r.boundary << "  " << r.crossing_values
       << " values, " << r.wires << " wires\n";
  return os.str();
}

std::string schedule_json(const CompiledDesign& design) {
  json j;
  j["design"] = design.name;
  j["total_intervals"] = design.sched.total_intervals;
  j["stage_boundaries"] = design.sched.stage_boundaries;
  json nodes = json::array();
  for (size_t i = 0; i < design.dfg.nodes.size(); ++i) {
    json n;
    n["id"] = i;
    n["kind"] = std::string(kind_name(design.dfg.nodes[i].kind));
    n["start"] = design.sched.start[i];
    n["instance"] = design.binding.instance[i];
    nodes.push_back(n);
  }
  j["nodes"] = nodes;
  return j.dump() + "\n";
}

namespace {

void write_file(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << content;
}

}  // namespace

int cmd_compile(const CompileConfig& config) {
  try {
    CompiledDesign design = run_pipeline(config);
    fs::path out(config.out_dir);
    write_file(out / "top.v",
               emit_rtl(design.dfg, design.sched, design.binding, design.model,
                        design.fmt, design.weights));
    write_file(out / "ops.v", emit_operator_library(design.fmt, design.model));
    TestbenchFiles tb =
        emit_testbench(design.dfg, design.fmt, 16, config.seed, design.weights);
    write_file(out / "tb_top.v", tb.testbench);
    for (const auto& [rel, content] : tb.files) write_file(out / rel, content);
    write_file(out / "report.json", report_json(design, config.clock_ns));
    write_file(out / "report.txt", report_text(design, config.clock_ns));
    write_file(out / "schedule.json", schedule_json(design));
    {
      // exponent histogram as CSV for external plotting
      WeightHistogram hist = weight_histogram(design.weights, design.fmt);
      std::ostringstream csv;
      csv << "exponent,count\n";
      for (const auto& [exp, count] : hist.buckets)
        csv << exp << "," << count << "\n";
      csv << "overflow," << hist.overflow << "\n";
      csv << "underflow," << hist.underflow << "\n";
      csv << "zero," << hist.zeros << "\n";
      write_file(out / "histogram.csv", csv.str());
    }
    if (config.emit_ir)
      write_file(out / "design.ir", pretty_print(design.program));
    if (config.emit_dfg) write_file(out / "design.dfg", dump_dfg(design.dfg));
    std::cout << report_text(design, config.clock_ns);
    std::cout << "wrote " << (out / "top.v").string() << ", ops.v, tb_top.v, "
              << "vectors/, report.{json,txt}, schedule.json\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "compile failed: " << e.what() << "\n";
    return 1;
  }
}

int cmd_verify(const CompileConfig& config, int n_vectors) {
  try {
    CompiledDesign design = run_pipeline(config);
    // Reload the schedule artifact so tampering is caught here.
    fs::path sched_path = fs::path(config.out_dir) / "schedule.json";
    if (fs::exists(sched_path)) {
      json doc = json::parse(read_file_text(sched_path.string()));
      Schedule loaded;
      loaded.total_intervals = doc.at("total_intervals").get<int64_t>();
      for (const auto& b : doc.at("stage_boundaries"))
        loaded.stage_boundaries.push_back(b.get<int64_t>());
      loaded.start.assign(design.dfg.nodes.size(), 0);
      if (doc.at("nodes").size() != design.dfg.nodes.size())
        throw ScheduleError("schedule.json does not match the design (" +
                            std::to_string(doc.at("nodes").size()) + " vs " +
                            std::to_string(design.dfg.nodes.size()) +
                            " nodes)");
      for (const auto& n : doc.at("nodes")) {
        size_t id = n.at("id").get<size_t>();
        if (id >= loaded.start.size() ||
            n.at("kind").get<std::string>() !=
                kind_name(design.dfg.nodes[id].kind))
          throw ScheduleError("schedule.json node table is corrupted");
        loaded.start[id] = n.at("start").get<int64_t>();
      }
      std::vector<Diagnostic> diags =
          validate_schedule(design.dfg, design.binding, loaded, design.model);
      if (!diags.empty())
        throw ScheduleError("schedule.json fails validation: " +
                            diags.front().message);
      design.sched = std::move(loaded);
    }

    if (n_vectors == 0)
      std::cout << "warning: 0 vectors requested, vacuous PASS\n";
    int passed = 0;
    for (int v = 0; v < n_vectors; ++v) {
      auto tensors = vector_inputs(design, config.seed, v);
      EvalResult expect = evaluate_numeric(
          design.dfg, tensors, EvaluationRules::fp_format(design.fmt));
      CycleTrace trace = simulate(design.dfg, design.sched, design.binding,
                                  design.fmt, tensors, design.model);
      bool ok = true;
      for (const auto& [buffer, bits] : expect.bits) {
        const auto& got = trace.outputs.at(buffer);
        for (size_t i = 0; i < bits.size() && ok; ++i) {
          if (got[i] == bits[i]) continue;
          ok = false;
          std::cout << "vector " << v << " FAIL: %" << buffer << "[" << i
                    << "] cosim=0x" << std::hex << got[i].bits << " numeric=0x"
                    << bits[i].bits << std::dec << "\n";
        }
      }
      if (ok) ++passed;
    }
    std::cout << passed << "/" << n_vectors << " PASS\n";
    return passed == n_vectors ? 0 : 1;
  } catch (const std::exception& e) {
    std::cerr << "verify failed: " << e.what() << "\n";
    return 2;
  }
}

int cmd_report(const CompileConfig& config) {
  try {
    CompiledDesign design = run_pipeline(config);
    std::cout << report_text(design, config.clock_ns);
    std::cout << report_json(design, config.clock_ns);
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "report failed: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace thls
