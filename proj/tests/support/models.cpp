// SPDX-License-Identifier: Apache-2.0
#include "models.hpp"

#include <sstream>

#include "oracles.hpp"
#include "tracehls/backend.hpp"

namespace thls::testing {

namespace {

std::string shape_json(const std::vector<int64_t>& dims) {
  std::string s = "[";
  for (size_t i = 0; i < dims.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(dims[i]);
  }
  return s + "]";
}

std::vector<double> rand_tensor(uint64_t seed, int64_t count) {
  return random_inputs(seed, static_cast<size_t>(count));
}

}  // namespace

BuiltModel addmm_16x16(uint64_t seed) {
  (void)seed;
  BuiltModel m;
  m.json = R"({
    "name": "addmm",
    "inputs": [
      {"name": "a", "shape": [16,16]},
      {"name": "b", "shape": [16,16]},
      {"name": "c", "shape": [16,16]}
    ],
    "outputs": ["mm"],
    "layers": [
      {"id": "mm", "type": "addmm", "params": {"m":16,"n":16,"p":16},
       "inputs": ["a","b","c"]}
    ],
    "weights_manifest": {}
  })";
  return m;
}

BuiltModel batch_norm_10x2x3x3(uint64_t seed) {
  BlobBuilder blob;
  blob.add("bn.weight", {2}, rand_tensor(seed + 1, 2));
  blob.add("bn.bias", {2}, rand_tensor(seed + 2, 2));
  blob.add("bn.running_mean", {2}, rand_tensor(seed + 3, 2));
  // variances must be positive
  std::vector<double> var = rand_tensor(seed + 4, 2);
  for (double& v : var) v = 0.05 + (v + 2.0) * 0.5;
  blob.add("bn.running_var", {2}, var);
  BuiltModel m;
  m.json = R"({
    "name": "batch_norm_2d",
    "inputs": [{"name": "x", "shape": [10,2,3,3]}],
    "outputs": ["bn"],
    "layers": [
      {"id": "bn", "type": "batch_norm_2d",
       "params": {"num_features": 2, "eps": 1e-5}, "inputs": ["x"]}
    ],
    "weights_manifest": )" + blob.manifest() + "\n  }";
  m.blob = blob.blob;
  return m;
}

BuiltModel conv_model(int64_t b, int64_t c_in, int64_t c_out, int64_t k,
                      int64_t h, int64_t w, int64_t stride, int64_t padding,
                      bool bias, uint64_t seed) {
  BlobBuilder blob;
  blob.add("conv.weight", {c_out, c_in, k, k},
           rand_tensor(seed + 11, c_out * c_in * k * k));
  if (bias) blob.add("conv.bias", {c_out}, rand_tensor(seed + 12, c_out));
  std::ostringstream os;
  os << "{\"name\": \"conv_2d\",\n"
     << " \"inputs\": [{\"name\": \"x\", \"shape\": "
     << shape_json({b, c_in, h, w}) << "}],\n"
     << " \"outputs\": [\"conv\"],\n"
     << " \"layers\": [{\"id\": \"conv\", \"type\": \"conv_2d\", \"params\": "
     << "{\"c_in\": " << c_in << ", \"c_out\": " << c_out << ", \"k\": " << k
     << ", \"stride\": " << stride << ", \"padding\": " << padding
     << ", \"bias\": " << (bias ? "true" : "false")
     << "}, \"inputs\": [\"x\"]}],\n"
     << " \"weights_manifest\": " << blob.manifest() << "}";
  BuiltModel m;
  m.json = os.str();
  m.blob = blob.blob;
  return m;
}

BuiltModel conv_1x1x16x16_c3k3(uint64_t seed) {
  // padding floor(k/2) = 1, stride 1 keeps the spatial extent
  return conv_model(1, 1, 3, 3, 16, 16, 1, 1, true, seed);
}

BuiltModel max_pool_model(int64_t b, int64_t c, int64_t h, int64_t w,
                          int64_t k, int64_t stride) {
  std::ostringstream os;
  os << "{\"name\": \"max_pool_2d\",\n"
     << " \"inputs\": [{\"name\": \"x\", \"shape\": "
     << shape_json({b, c, h, w}) << "}],\n"
     << " \"outputs\": [\"pool\"],\n"
     << " \"layers\": [{\"id\": \"pool\", \"type\": \"max_pool_2d\", "
     << "\"params\": {\"k\": " << k << ", \"stride\": " << stride
     << "}, \"inputs\": [\"x\"]}],\n"
     << " \"weights_manifest\": {}}";
  BuiltModel m;
  m.json = os.str();
  return m;
}

BuiltModel soft_max_model(const std::vector<int64_t>& shape) {
  std::ostringstream os;
  os << "{\"name\": \"soft_max\",\n"
     << " \"inputs\": [{\"name\": \"x\", \"shape\": " << shape_json(shape)
     << "}],\n"
     << " \"outputs\": [\"soft\"],\n"
     << " \"layers\": [{\"id\": \"soft\", \"type\": \"soft_max\", "
     << "\"params\": {\"axis\": -1}, \"inputs\": [\"x\"]}],\n"
     << " \"weights_manifest\": {}}";
  BuiltModel m;
  m.json = os.str();
  return m;
}

BuiltModel batch_norm_model(int64_t b, int64_t c, int64_t h, int64_t w,
                            uint64_t seed) {
  BlobBuilder blob;
  blob.add("bn.weight", {c}, rand_tensor(seed + 1, c));
  blob.add("bn.bias", {c}, rand_tensor(seed + 2, c));
  blob.add("bn.running_mean", {c}, rand_tensor(seed + 3, c));
  std::vector<double> var = rand_tensor(seed + 4, c);
  for (double& v : var) v = 0.05 + (v + 2.0) * 0.5;
  blob.add("bn.running_var", {c}, var);
  std::ostringstream os;
  os << "{\"name\": \"batch_norm_2d\",\n"
     << " \"inputs\": [{\"name\": \"x\", \"shape\": "
     << shape_json({b, c, h, w}) << "}],\n"
     << " \"outputs\": [\"bn\"],\n"
     << " \"layers\": [{\"id\": \"bn\", \"type\": \"batch_norm_2d\", "
     << "\"params\": {\"num_features\": " << c
     << ", \"eps\": 1e-5}, \"inputs\": [\"x\"]}],\n"
     << " \"weights_manifest\": " << blob.manifest() << "}";
  BuiltModel m;
  m.json = os.str();
  m.blob = blob.blob;
  return m;
}

BuiltModel addmm_model(int64_t mm, int64_t n, int64_t p, bool with_c) {
  std::ostringstream os;
  os << "{\"name\": \"addmm\",\n"
     << " \"inputs\": [{\"name\": \"a\", \"shape\": " << shape_json({mm, n})
     << "}, {\"name\": \"b\", \"shape\": " << shape_json({n, p}) << "}";
  if (with_c)
    os << ", {\"name\": \"c\", \"shape\": " << shape_json({mm, p}) << "}";
  os << "],\n"
     << " \"outputs\": [\"mm\"],\n"
     << " \"layers\": [{\"id\": \"mm\", \"type\": \"addmm\", "
     << "\"params\": {\"m\": " << mm << ", \"n\": " << n << ", \"p\": "
     << p << "}, \"inputs\": [\"a\", \"b\""
     << (with_c ? ", \"c\"" : "") << "]}],\n"
     << " \"weights_manifest\": {}}";
  BuiltModel m;
  m.json = os.str();
  return m;
}

BuiltModel max_pool_1x3x16x16_k3s2() {
  BuiltModel m;
  m.json = R"({
    "name": "max_pool_2d",
    "inputs": [{"name": "x", "shape": [1,3,16,16]}],
    "outputs": ["pool"],
    "layers": [
      {"id": "pool", "type": "max_pool_2d",
       "params": {"k": 3, "stride": 2}, "inputs": ["x"]}
    ],
    "weights_manifest": {}
  })";
  return m;
}

BuiltModel soft_max_1x3x16x16() {
  BuiltModel m;
  m.json = R"({
    "name": "soft_max",
    "inputs": [{"name": "x", "shape": [1,3,16,16]}],
    "outputs": ["soft"],
    "layers": [
      {"id": "soft", "type": "soft_max", "params": {"axis": -1},
       "inputs": ["x"]}
    ],
    "weights_manifest": {}
  })";
  return m;
}

BuiltModel relu_model(const std::vector<int64_t>& shape) {
  BuiltModel m;
  m.json = R"({
    "name": "relu",
    "inputs": [{"name": "x", "shape": )" + shape_json(shape) + R"(}],
    "outputs": ["act"],
    "layers": [{"id": "act", "type": "relu", "inputs": ["x"]}],
    "weights_manifest": {}
  })";
  return m;
}

BuiltModel linear_model(int64_t batch, int64_t in, int64_t out, uint64_t seed) {
  BlobBuilder blob;
  blob.add("fc.weight", {out, in}, rand_tensor(seed + 21, out * in));
  blob.add("fc.bias", {out}, rand_tensor(seed + 22, out));
  std::ostringstream os;
  os << "{\"name\": \"linear\",\n"
     << " \"inputs\": [{\"name\": \"x\", \"shape\": " << shape_json({batch, in})
     << "}],\n"
     << " \"outputs\": [\"fc\"],\n"
     << " \"layers\": [{\"id\": \"fc\", \"type\": \"linear\", \"params\": "
     << "{\"in_features\": " << in << ", \"out_features\": " << out
     << "}, \"inputs\": [\"x\"]}],\n"
     << " \"weights_manifest\": " << blob.manifest() << "}";
  BuiltModel m;
  m.json = os.str();
  m.blob = blob.blob;
  return m;
}

BuiltModel identity_model(const std::vector<int64_t>& shape) {
  BuiltModel m;
  m.json = R"({
    "name": "identity",
    "inputs": [{"name": "x", "shape": )" + shape_json(shape) + R"(}],
    "outputs": ["x"],
    "layers": [],
    "weights_manifest": {}
  })";
  return m;
}

BuiltModel braggnn_s1(uint64_t seed) {
  BlobBuilder blob;
  auto conv_w = [&](const std::string& id, int64_t co, int64_t ci, int64_t k,
                    uint64_t s) {
    blob.add(id + ".weight", {co, ci, k, k}, rand_tensor(s, co * ci * k * k));
    blob.add(id + ".bias", {co}, rand_tensor(s + 1, co));
  };
  auto fc_w = [&](const std::string& id, int64_t out, int64_t in, uint64_t s) {
    blob.add(id + ".weight", {out, in}, rand_tensor(s, out * in));
    blob.add(id + ".bias", {out}, rand_tensor(s + 1, out));
  };
  conv_w("cnn1", 16, 1, 3, seed + 100);
  conv_w("theta", 8, 16, 1, seed + 110);
  conv_w("phi", 8, 16, 1, seed + 120);
  conv_w("g", 8, 16, 1, seed + 130);
  conv_w("out_cnn", 16, 8, 1, seed + 140);
  conv_w("cnn2", 8, 16, 3, seed + 150);
  conv_w("cnn3", 2, 8, 3, seed + 160);
  fc_w("fc1", 16, 50, seed + 170);
  fc_w("fc2", 8, 16, seed + 180);
  fc_w("fc3", 4, 8, seed + 190);
  fc_w("fc4", 2, 4, seed + 200);

  // 11x11 input patch; cnn1 (k=3, no padding) -> (1,16,9,9); the non-local
  // block works on (8,81) projections; soft(theta^T x phi) x g feeds out_cnn.
  std::string json = R"({
    "name": "braggnn_s1",
    "inputs": [{"name": "x", "shape": [1,1,11,11]}],
    "outputs": ["relu7"],
    "layers": [
      {"id": "cnn1", "type": "conv_2d",
       "params": {"c_in":1,"c_out":16,"k":3}, "inputs": ["x"]},
      {"id": "theta", "type": "conv_2d",
       "params": {"c_in":16,"c_out":8,"k":1}, "inputs": ["cnn1"]},
      {"id": "phi", "type": "conv_2d",
       "params": {"c_in":16,"c_out":8,"k":1}, "inputs": ["cnn1"]},
      {"id": "g", "type": "conv_2d",
       "params": {"c_in":16,"c_out":8,"k":1}, "inputs": ["cnn1"]},
      {"id": "theta_r", "type": "reshape", "params": {"shape": [8,81]},
       "inputs": ["theta"]},
      {"id": "phi_r", "type": "reshape", "params": {"shape": [8,81]},
       "inputs": ["phi"]},
      {"id": "g_r", "type": "reshape", "params": {"shape": [8,81]},
       "inputs": ["g"]},
      {"id": "scores", "type": "addmm",
       "params": {"m":81,"n":8,"p":81,"transpose_a":true},
       "inputs": ["theta_r","phi_r"]},
      {"id": "soft", "type": "soft_max", "params": {"axis": -1},
       "inputs": ["scores"]},
      {"id": "attn", "type": "addmm",
       "params": {"m":8,"n":81,"p":81,"transpose_b":true},
       "inputs": ["g_r","soft"]},
      {"id": "attn_r", "type": "reshape", "params": {"shape": [1,8,9,9]},
       "inputs": ["attn"]},
      {"id": "out_cnn", "type": "conv_2d",
       "params": {"c_in":8,"c_out":16,"k":1}, "inputs": ["attn_r"]},
      {"id": "relu1", "type": "relu", "inputs": ["out_cnn"]},
      {"id": "cnn2", "type": "conv_2d",
       "params": {"c_in":16,"c_out":8,"k":3}, "inputs": ["relu1"]},
      {"id": "relu2", "type": "relu", "inputs": ["cnn2"]},
      {"id": "cnn3", "type": "conv_2d",
       "params": {"c_in":8,"c_out":2,"k":3}, "inputs": ["relu2"]},
      {"id": "relu3", "type": "relu", "inputs": ["cnn3"]},
      {"id": "flat", "type": "reshape", "params": {"shape": [1,50]},
       "inputs": ["relu3"]},
      {"id": "fc1", "type": "linear",
       "params": {"in_features":50,"out_features":16}, "inputs": ["flat"]},
      {"id": "relu4", "type": "relu", "inputs": ["fc1"]},
      {"id": "fc2", "type": "linear",
       "params": {"in_features":16,"out_features":8}, "inputs": ["relu4"]},
      {"id": "relu5", "type": "relu", "inputs": ["fc2"]},
      {"id": "fc3", "type": "linear",
       "params": {"in_features":8,"out_features":4}, "inputs": ["relu5"]},
      {"id": "relu6", "type": "relu", "inputs": ["fc3"]},
      {"id": "fc4", "type": "linear",
       "params": {"in_features":4,"out_features":2}, "inputs": ["relu6"]},
      {"id": "relu7", "type": "relu", "inputs": ["fc4"]}
    ],
    "weights_manifest": )" + blob.manifest() + "\n  }";
  BuiltModel m;
  m.json = std::move(json);
  m.blob = blob.blob;
  return m;
}

ModelGraph load_built(const BuiltModel& m) {
  return load_model(m.json, m.blob);
}

}  // namespace thls::testing
