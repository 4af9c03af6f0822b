// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "tracehls/ir.hpp"

namespace thls {

// Layer parameter blocks. addmm optionally reads its a/b operands through a
// transposed layout and may omit the additive c input (zero-initialized
// accumulation), which is how attention-style products between layer
// outputs are expressed. reshape is a layout-preserving regrouping of dims.
struct AddMM {
  int64_t m = 0, n = 0, p = 0;
  bool trans_a = false;
  bool trans_b = false;
  bool has_c = true;
  bool operator==(const AddMM&) const = default;
};
struct Linear {
  int64_t in_features = 0, out_features = 0;
  bool bias = true;
  bool operator==(const Linear&) const = default;
};
struct Conv2d {
  int64_t c_in = 0, c_out = 0, k = 0;
  int64_t stride = 1, padding = 0;
  bool bias = true;
  bool operator==(const Conv2d&) const = default;
};
struct BatchNorm2d {
  int64_t num_features = 0;
  double eps = 1e-5;
  bool operator==(const BatchNorm2d&) const = default;
};
struct MaxPool2d {
  int64_t k = 0, stride = 0;
  bool operator==(const MaxPool2d&) const = default;
};
struct Softmax {
  int axis = -1;
  bool operator==(const Softmax&) const = default;
};
struct ReLU {
  bool operator==(const ReLU&) const = default;
};
struct Reshape {
  TensorShape shape;
  bool operator==(const Reshape&) const = default;
};

using LayerSpec = std::variant<AddMM, Linear, Conv2d, BatchNorm2d, MaxPool2d,
                               Softmax, ReLU, Reshape>;

struct Tensor {
  TensorShape shape;
  std::vector<double> data;
};

struct Port {
  std::string name;
  TensorShape shape;
};

struct LayerNode {
  std::string id;
  LayerSpec spec;
  std::vector<std::string> inputs;  // producer layer ids or input port names
};

struct ModelGraph {
  std::string name = "model";
  std::vector<Port> inputs;
  std::vector<std::string> outputs;  // layer ids or input port names
  std::vector<LayerNode> layers;     // stored in file order
  std::map<std::string, Tensor> weights;       // "<layer>.<tensor>"
  std::map<std::string, TensorShape> shapes;   // refined shape per id/port
  std::vector<std::string> topo_order;         // layer ids, topologically sorted
};

struct FrontendError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Parses the JSON model description, reads the raw little-endian f64 weight
// blob through the embedded manifest, checks the graph is a DAG and refines
// every intermediate shape.
ModelGraph load_model(const std::string& model_json,
                      const std::vector<uint8_t>& weight_blob);

// Taylor truncation order for exp.
struct ExpApprox {
  int order = 6;
};

struct LayerInput {
  std::string buffer;
  TensorShape shape;
};

struct LoweredLayer {
  std::vector<Statement> statements;
  std::vector<BufferDecl> buffers;  // new buffers incl. the layer output
  std::map<std::string, std::vector<double>> weights;  // values per weight buffer
  TensorShape out_shape;
};

// Lowers one layer to loop nests writing `out_buffer` (declared by the
// callee with the given kind). `weights` is consulted for tensors folded at
// compile time (batch norm). `name_counter` feeds fresh value/iv names.
LoweredLayer lower_layer(const std::string& layer_id, const LayerSpec& spec,
                         const std::vector<LayerInput>& inputs,
                         const std::string& out_buffer, BufferKind out_kind,
                         const std::map<std::string, Tensor>& weights,
                         FloatFormat fmt, ExpApprox exp, int& name_counter);

struct LoweredModel {
  LoopNestProgram program;
  // Values for every weight buffer referenced by the program (manifest
  // tensors plus compile-time-folded derivations).
  std::map<std::string, std::vector<double>> weights;
};

LoweredModel lower_model(const ModelGraph& graph, ExpApprox exp,
                         FloatFormat fmt);

// Output shape refinement for a single layer (also used by load_model).
TensorShape infer_output_shape(const std::string& layer_id,
                               const LayerSpec& spec,
                               const std::vector<TensorShape>& input_shapes);

std::vector<uint8_t> read_file_bytes(const std::string& path);
std::string read_file_text(const std::string& path);

}  // namespace thls
