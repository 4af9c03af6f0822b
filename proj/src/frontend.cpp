// SPDX-License-Identifier: Apache-2.0
#include "tracehls/frontend.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "json.hpp"

namespace thls {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& msg) { throw FrontendError(msg); }

std::string shape_str(const TensorShape& s) {
  std::string out = "(";
  for (size_t i = 0; i < s.dims.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s.dims[i]);
  }
  return out + ")";
}

int64_t req_int(const json& params, const char* key, const std::string& id) {
  if (!params.contains(key))
    fail("layer '" + id + "' is missing parameter '" + key + "'");
  return params[key].get<int64_t>();
}

LayerSpec parse_layer_spec(const std::string& id, const std::string& type,
                           const json& params) {
  if (type == "addmm") {
    AddMM l;
    l.m = req_int(params, "m", id);
    l.n = req_int(params, "n", id);
    l.p = req_int(params, "p", id);
    l.trans_a = params.value("transpose_a", false);
    l.trans_b = params.value("transpose_b", false);
    return l;
  }
  if (type == "linear") {
    Linear l;
    l.in_features = req_int(params, "in_features", id);
    l.out_features = req_int(params, "out_features", id);
    l.bias = params.value("bias", true);
    return l;
  }
  if (type == "conv_2d") {
    Conv2d l;
    l.c_in = req_int(params, "c_in", id);
    l.c_out = req_int(params, "c_out", id);
    l.k = req_int(params, "k", id);
    l.stride = params.value("stride", int64_t{1});
    l.padding = params.value("padding", int64_t{0});
    l.bias = params.value("bias", true);
    return l;
  }
  if (type == "batch_norm_2d") {
    BatchNorm2d l;
    l.num_features = req_int(params, "num_features", id);
    l.eps = params.value("eps", 1e-5);
    return l;
  }
  if (type == "max_pool_2d") {
    MaxPool2d l;
    l.k = req_int(params, "k", id);
    l.stride = params.value("stride", l.k);
    return l;
  }
  if (type == "soft_max") {
    Softmax l;
    l.axis = static_cast<int>(params.value("axis", int64_t{-1}));
    return l;
  }
  if (type == "relu") return ReLU{};
  if (type == "reshape") {
    Reshape l;
    if (!params.contains("shape"))
      fail("layer '" + id + "' is missing parameter 'shape'");
    for (const auto& d : params["shape"]) l.shape.dims.push_back(d.get<int64_t>());
    return l;
  }
  fail("layer '" + id + "' has unknown type '" + type + "'");
}

// Common refinement of two shapes with equal element counts, such that the
// dims of each are products of consecutive refinement dims. Empty result
// means the regrouping is not expressible (e.g. (4,6) -> (3,8)).
std::vector<int64_t> reshape_refinement(const TensorShape& src,
                                        const TensorShape& dst) {
  std::vector<int64_t> ref;
  size_t i = 0, j = 0;
  int64_t a = 0, b = 0;
  auto next = [](const TensorShape& s, size_t& idx, int64_t& residual) {
    while (residual == 1 && idx < s.dims.size())
      residual = s.dims[idx++];
  };
  a = 1;
  b = 1;
  for (;;) {
    next(src, i, a);
    next(dst, j, b);
    if (a == 1 && b == 1 && i >= src.dims.size() && j >= dst.dims.size())
      break;
    int64_t g = std::gcd(a, b);
    if (g == 1) {
      if (a == 1 && b == 1) {
        ref.push_back(1);
        continue;
      }
      return {};
    }
    ref.push_back(g);
    a /= g;
    b /= g;
  }
  if (ref.empty()) ref.push_back(1);
  return ref;
}

struct Emitter {
  int& counter;
  FloatFormat fmt;
  std::vector<Statement>* block;  // current statement list

  std::string fresh(const char* prefix) {
    return std::string(prefix) + std::to_string(counter++);
  }

  // Opens a parallel loop over `extents` and returns the iv names.
  std::vector<std::string> parallel(std::vector<int64_t> extents,
                                    std::vector<Statement>** inner) {
    ParallelFor f;
    for (int64_t e : extents) {
      f.ivs.push_back(fresh("i"));
      f.lowers.push_back(0);
      f.uppers.push_back(e);
      f.steps.push_back(1);
    }
    block->push_back(Statement{std::move(f)});
    auto& pf = block->back().as<ParallelFor>();
    *inner = &pf.body;
    return pf.ivs;
  }

  std::string seq_for(std::vector<Statement>* outer, int64_t lower,
                      int64_t upper, std::vector<Statement>** inner) {
    SequentialFor f;
    f.iv = fresh("i");
    f.lower = lower;
    f.upper = upper;
    f.step = 1;
    outer->push_back(Statement{std::move(f)});
    auto& sf = outer->back().as<SequentialFor>();
    *inner = &sf.body;
    return sf.iv;
  }

  std::string load(std::vector<Statement>* b, const std::string& buffer,
                   std::vector<IndexExpr> idx) {
    Load l;
    l.result = fresh("v");
    l.buffer = buffer;
    l.indices = std::move(idx);
    b->push_back(Statement{std::move(l)});
    return b->back().as<Load>().result;
  }

  void store(std::vector<Statement>* b, const std::string& buffer,
             std::vector<IndexExpr> idx, const std::string& value) {
    Store s;
    s.buffer = buffer;
    s.indices = std::move(idx);
    s.operand = value;
    b->push_back(Statement{std::move(s)});
  }

  std::string constf(std::vector<Statement>* b, double literal) {
    ConstF c;
    c.result = fresh("v");
    c.literal = literal;
    b->push_back(Statement{std::move(c)});
    return b->back().as<ConstF>().result;
  }

  std::string arith(std::vector<Statement>* b, ArithKind kind,
                    std::vector<std::string> operands,
                    std::optional<ReductionMark> mark = std::nullopt) {
    Arith a;
    a.result = fresh("v");
    a.kind = kind;
    a.operands = std::move(operands);
    a.reduction = std::move(mark);
    b->push_back(Statement{std::move(a)});
    return b->back().as<Arith>().result;
  }

  std::string muli(std::vector<Statement>* b, const std::string& name,
                   int64_t factor) {
    IndexArith ia;
    ia.result = fresh("x");
    ia.kind = IndexOpKind::muli;
    ia.lhs = IndexTerm::var(name);
    ia.rhs = IndexTerm::lit(factor);
    b->push_back(Statement{std::move(ia)});
    return b->back().as<IndexArith>().result;
  }

  // Index expression `iv * factor` without a redundant muli when factor==1.
  IndexExpr scaled(std::vector<Statement>* b, const std::string& iv,
                   int64_t factor) {
    if (factor == 1) return IndexExpr{{IndexTerm::var(iv)}};
    return IndexExpr{{IndexTerm::var(muli(b, iv, factor))}};
  }
};

IndexExpr ix(std::initializer_list<IndexTerm> terms) {
  return IndexExpr{std::vector<IndexTerm>(terms)};
}

IndexExpr iv(const std::string& name) { return ix({IndexTerm::var(name)}); }

// Grouped-reshape copy nest: iterates the common refinement of the two
// shapes and rebuilds each side's indices by merging refinement coords.
void emit_reshape_copy(Emitter& em, const std::string& src,
                       const TensorShape& src_shape, const std::string& dst,
                       const TensorShape& dst_shape) {
  std::vector<int64_t> ref = reshape_refinement(src_shape, dst_shape);
  if (ref.empty())
    fail("reshape from " + shape_str(src_shape) + " to " +
         shape_str(dst_shape) + " is not a dim regrouping");
  std::vector<Statement>* body = nullptr;
  std::vector<std::string> ivs = em.parallel(ref, &body);

  auto side_indices = [&](const TensorShape& shape) {
    std::vector<IndexExpr> idx;
    size_t r = 0;
    for (int64_t dim : shape.dims) {
      IndexExpr e;
      int64_t left = dim;
      std::vector<std::pair<std::string, int64_t>> parts;  // iv, extent
      while (left > 1) {
        parts.push_back({ivs[r], ref[r]});
        left /= ref[r];
        ++r;
      }
      while (r < ref.size() && ref[r] == 1) ++r;  // absorb unit dims
      if (parts.empty()) {
        e.terms.push_back(IndexTerm::lit(0));
      } else {
        int64_t stride = 1;
        for (size_t q = parts.size(); q-- > 0;) {
          if (stride == 1)
            e.terms.push_back(IndexTerm::var(parts[q].first));
          else
            e.terms.push_back(
                IndexTerm::var(em.muli(body, parts[q].first, stride)));
          stride *= parts[q].second;
        }
        std::reverse(e.terms.begin(), e.terms.end());
      }
      idx.push_back(std::move(e));
    }
    return idx;
  };
  std::vector<IndexExpr> src_idx = side_indices(src_shape);
  std::vector<IndexExpr> dst_idx = side_indices(dst_shape);
  std::string v = em.load(body, src, std::move(src_idx));
  em.store(body, dst, std::move(dst_idx), v);
}

}  // namespace

TensorShape infer_output_shape(const std::string& id, const LayerSpec& spec,
                               const std::vector<TensorShape>& in) {
  auto want_inputs = [&](size_t n) {
    if (in.size() != n)
      fail("layer '" + id + "' expects " + std::to_string(n) +
           " inputs, got " + std::to_string(in.size()));
  };
  if (const auto* l = std::get_if<AddMM>(&spec)) {
    if (in.size() != (l->has_c ? 3u : 2u))
      fail("layer '" + id + "' (addmm) has wrong input count");
    TensorShape a_want{{l->trans_a ? l->n : l->m, l->trans_a ? l->m : l->n}};
    TensorShape b_want{{l->trans_b ? l->p : l->n, l->trans_b ? l->n : l->p}};
    if (in[0] != a_want)
      fail("layer '" + id + "' operand a has shape " + shape_str(in[0]) +
           ", expected " + shape_str(a_want));
    if (in[1] != b_want)
      fail("layer '" + id + "' operand b has shape " + shape_str(in[1]) +
           ", expected " + shape_str(b_want));
    TensorShape out{{l->m, l->p}};
    if (l->has_c && in[2] != out)
      fail("layer '" + id + "' operand c has shape " + shape_str(in[2]) +
           ", expected " + shape_str(out));
    return out;
  }
  if (const auto* l = std::get_if<Linear>(&spec)) {
    want_inputs(1);
    if (in[0].rank() != 2 || in[0].dims[1] != l->in_features)
      fail("layer '" + id + "' expects input (batch," +
           std::to_string(l->in_features) + "), got " + shape_str(in[0]));
    return TensorShape{{in[0].dims[0], l->out_features}};
  }
  if (const auto* l = std::get_if<Conv2d>(&spec)) {
    want_inputs(1);
    if (in[0].rank() != 4 || in[0].dims[1] != l->c_in)
      fail("layer '" + id + "' expects input (b," + std::to_string(l->c_in) +
           ",h,w), got " + shape_str(in[0]));
    int64_t h = in[0].dims[2] + 2 * l->padding;
    int64_t w = in[0].dims[3] + 2 * l->padding;
    if (h < l->k || w < l->k)
      fail("layer '" + id + "' kernel " + std::to_string(l->k) +
           " larger than padded input " + shape_str(in[0]));
    return TensorShape{{in[0].dims[0], l->c_out, (h - l->k) / l->stride + 1,
                        (w - l->k) / l->stride + 1}};
  }
  if (const auto* l = std::get_if<BatchNorm2d>(&spec)) {
    want_inputs(1);
    if (in[0].rank() != 4 || in[0].dims[1] != l->num_features)
      fail("layer '" + id + "' expects input (b," +
           std::to_string(l->num_features) + ",h,w), got " + shape_str(in[0]));
    return in[0];
  }
  if (const auto* l = std::get_if<MaxPool2d>(&spec)) {
    want_inputs(1);
    if (in[0].rank() != 4)
      fail("layer '" + id + "' expects a rank-4 input, got " +
           shape_str(in[0]));
    if (in[0].dims[2] < l->k || in[0].dims[3] < l->k)
      fail("layer '" + id + "' kernel larger than input");
    return TensorShape{{in[0].dims[0], in[0].dims[1],
                        (in[0].dims[2] - l->k) / l->stride + 1,
                        (in[0].dims[3] - l->k) / l->stride + 1}};
  }
  if (const auto* l = std::get_if<Softmax>(&spec)) {
    want_inputs(1);
    if (in[0].rank() < 2)
      fail("layer '" + id + "' (soft_max) expects rank >= 2");
    if (l->axis != -1 && l->axis != in[0].rank() - 1)
      fail("layer '" + id + "': soft_max supports only the last axis");
    return in[0];
  }
  if (std::holds_alternative<ReLU>(spec)) {
    want_inputs(1);
    return in[0];
  }
  if (const auto* l = std::get_if<Reshape>(&spec)) {
    want_inputs(1);
    if (l->shape.num_elements() != in[0].num_elements())
      fail("layer '" + id + "' reshape changes element count");
    if (reshape_refinement(in[0], l->shape).empty())
      fail("layer '" + id + "' reshape from " + shape_str(in[0]) + " to " +
           shape_str(l->shape) + " is not a dim regrouping");
    return l->shape;
  }
  fail("layer '" + id + "': unhandled spec");
}

namespace {

const Tensor& need_weight(const std::map<std::string, Tensor>& weights,
                          const std::string& name) {
  auto it = weights.find(name);
  if (it == weights.end()) fail("missing weight tensor '" + name + "'");
  return it->second;
}

struct LayerLowering {
  const std::string& id;
  const std::vector<LayerInput>& in;
  const std::string& out;
  BufferKind out_kind;
  const std::map<std::string, Tensor>& model_weights;
  FloatFormat fmt;
  ExpApprox exp;
  Emitter em;
  LoweredLayer result;

  LayerLowering(const std::string& id_, const std::vector<LayerInput>& in_,
                const std::string& out_, BufferKind kind,
                const std::map<std::string, Tensor>& w, FloatFormat f,
                ExpApprox e, int& counter)
      : id(id_), in(in_), out(out_), out_kind(kind), model_weights(w), fmt(f),
        exp(e), em{counter, f, &result.statements} {}

  void declare(const std::string& name, TensorShape shape, BufferKind kind) {
    result.buffers.push_back({name, std::move(shape), fmt, kind});
  }

  // Declares a weight buffer and records its value tensor.
  void declare_weight(const std::string& name, const Tensor& t) {
    declare(name, t.shape, BufferKind::weight);
    result.weights[name] = t.data;
  }

  void init_output(const TensorShape& shape, const std::string& per_channel,
                   int channel_dim, double literal) {
    // Fills `out` with a per-channel weight value or a literal constant.
    std::vector<Statement>* body = nullptr;
    std::vector<std::string> ivs = em.parallel(shape.dims, &body);
    std::string v = per_channel.empty()
                        ? em.constf(body, literal)
                        : em.load(body, per_channel,
                                  {iv(ivs[static_cast<size_t>(channel_dim)])});
    std::vector<IndexExpr> idx;
    for (const auto& name : ivs) idx.push_back(iv(name));
    em.store(body, out, std::move(idx), v);
  }

  void lower(const AddMM& l) {
    declare(out, TensorShape{{l.m, l.p}}, out_kind);
    if (l.has_c) {
      std::vector<Statement>* body = nullptr;
      auto ivs = em.parallel({l.m, l.p}, &body);
      std::string v = em.load(body, in[2].buffer, {iv(ivs[0]), iv(ivs[1])});
      em.store(body, out, {iv(ivs[0]), iv(ivs[1])}, v);
    } else {
      init_output(TensorShape{{l.m, l.p}}, "", 0, 0.0);
    }
    std::vector<Statement>* body = nullptr;
    auto ivs = em.parallel({l.m, l.p}, &body);
    std::vector<Statement>* inner = nullptr;
    std::string k = em.seq_for(body, 0, l.n, &inner);
    std::string a =
        em.load(inner, in[0].buffer,
                l.trans_a ? std::vector<IndexExpr>{iv(k), iv(ivs[0])}
                          : std::vector<IndexExpr>{iv(ivs[0]), iv(k)});
    std::string b =
        em.load(inner, in[1].buffer,
                l.trans_b ? std::vector<IndexExpr>{iv(ivs[1]), iv(k)}
                          : std::vector<IndexExpr>{iv(k), iv(ivs[1])});
    std::string acc = em.load(inner, out, {iv(ivs[0]), iv(ivs[1])});
    std::string m = em.arith(inner, ArithKind::mulf, {a, b});
    std::string r = em.arith(inner, ArithKind::addf, {acc, m},
                             ReductionMark{id + ".acc", {k}});
    em.store(inner, out, {iv(ivs[0]), iv(ivs[1])}, r);
    result.out_shape = TensorShape{{l.m, l.p}};
  }

  void lower(const Linear& l) {
    int64_t batch = in[0].shape.dims[0];
    declare(out, TensorShape{{batch, l.out_features}}, out_kind);
    if (l.bias)
      declare_weight(id + ".bias", need_weight(model_weights, id + ".bias"));
    declare_weight(id + ".weight", need_weight(model_weights, id + ".weight"));
    init_output(TensorShape{{batch, l.out_features}},
                l.bias ? id + ".bias" : "", 1, 0.0);
    std::vector<Statement>* body = nullptr;
    auto ivs = em.parallel({batch, l.out_features}, &body);
    std::vector<Statement>* inner = nullptr;
    std::string k = em.seq_for(body, 0, l.in_features, &inner);
    std::string x = em.load(inner, in[0].buffer, {iv(ivs[0]), iv(k)});
    std::string w = em.load(inner, id + ".weight", {iv(ivs[1]), iv(k)});
    std::string acc = em.load(inner, out, {iv(ivs[0]), iv(ivs[1])});
    std::string m = em.arith(inner, ArithKind::mulf, {x, w});
    std::string r = em.arith(inner, ArithKind::addf, {acc, m},
                             ReductionMark{id + ".acc", {k}});
    em.store(inner, out, {iv(ivs[0]), iv(ivs[1])}, r);
    result.out_shape = TensorShape{{batch, l.out_features}};
  }

  void lower(const Conv2d& l) {
    const TensorShape& xs = in[0].shape;
    int64_t b = xs.dims[0], h = xs.dims[2], w = xs.dims[3];
    int64_t ph = h + 2 * l.padding, pw = w + 2 * l.padding;
    int64_t oh = (ph - l.k) / l.stride + 1, ow = (pw - l.k) / l.stride + 1;
    result.out_shape = TensorShape{{b, l.c_out, oh, ow}};
    declare(out, result.out_shape, out_kind);
    declare_weight(id + ".weight", need_weight(model_weights, id + ".weight"));
    if (l.bias)
      declare_weight(id + ".bias", need_weight(model_weights, id + ".bias"));

    std::string src = in[0].buffer;
    if (l.padding > 0) {
      // Materialized zero padding: pad ring cells become constant zeros in
      // the traced graph, keeping the loop bodies branch-free.
      std::string pad = out + "_pad";
      declare(pad, TensorShape{{b, l.c_in, ph, pw}}, BufferKind::intermediate);
      {
        std::vector<Statement>* body = nullptr;
        auto ivs = em.parallel({b, l.c_in, ph, pw}, &body);
        std::string z = em.constf(body, 0.0);
        em.store(body, pad, {iv(ivs[0]), iv(ivs[1]), iv(ivs[2]), iv(ivs[3])},
                 z);
      }
      {
        std::vector<Statement>* body = nullptr;
        auto ivs = em.parallel({b, l.c_in, h, w}, &body);
        std::string v = em.load(body, src,
                                {iv(ivs[0]), iv(ivs[1]), iv(ivs[2]), iv(ivs[3])});
        em.store(body, pad,
                 {iv(ivs[0]), iv(ivs[1]),
                  ix({IndexTerm::var(ivs[2]), IndexTerm::lit(l.padding)}),
                  ix({IndexTerm::var(ivs[3]), IndexTerm::lit(l.padding)})},
                 v);
      }
      src = pad;
    }

    init_output(result.out_shape, l.bias ? id + ".bias" : "", 1, 0.0);

    std::vector<Statement>* body = nullptr;
    auto ivs = em.parallel({b, l.c_out, oh, ow}, &body);
    IndexExpr ybase = em.scaled(body, ivs[2], l.stride);
    IndexExpr xbase = em.scaled(body, ivs[3], l.stride);
    std::vector<Statement>* ci_body = nullptr;
    std::string ci = em.seq_for(body, 0, l.c_in, &ci_body);
    std::vector<Statement>* kh_body = nullptr;
    std::string kh = em.seq_for(ci_body, 0, l.k, &kh_body);
    std::vector<Statement>* kw_body = nullptr;
    std::string kw = em.seq_for(kh_body, 0, l.k, &kw_body);
    IndexExpr ysrc = ybase;
    ysrc.terms.push_back(IndexTerm::var(kh));
    IndexExpr xsrc = xbase;
    xsrc.terms.push_back(IndexTerm::var(kw));
    std::string x = em.load(kw_body, src, {iv(ivs[0]), iv(ci), ysrc, xsrc});
    std::string wv = em.load(kw_body, id + ".weight",
                             {iv(ivs[1]), iv(ci), iv(kh), iv(kw)});
    std::string acc =
        em.load(kw_body, out, {iv(ivs[0]), iv(ivs[1]), iv(ivs[2]), iv(ivs[3])});
    std::string m = em.arith(kw_body, ArithKind::mulf, {x, wv});
    std::string r = em.arith(kw_body, ArithKind::addf, {acc, m},
                             ReductionMark{id + ".acc", {ci, kh, kw}});
    em.store(kw_body, out, {iv(ivs[0]), iv(ivs[1]), iv(ivs[2]), iv(ivs[3])}, r);
  }

  void lower(const BatchNorm2d& l) {
    const TensorShape& xs = in[0].shape;
    result.out_shape = xs;
    declare(out, xs, out_kind);
    const Tensor& gamma = need_weight(model_weights, id + ".weight");
    const Tensor& beta = need_weight(model_weights, id + ".bias");
    const Tensor& mean = need_weight(model_weights, id + ".running_mean");
    const Tensor& var = need_weight(model_weights, id + ".running_var");
    // Inference mode: fold gamma / sqrt(var + eps) at compile time.
    Tensor scale{gamma.shape, std::vector<double>(gamma.data.size())};
    for (size_t i = 0; i < gamma.data.size(); ++i)
      scale.data[i] = gamma.data[i] / std::sqrt(var.data[i] + l.eps);
    declare_weight(id + ".running_mean", mean);
    declare_weight(id + ".scale", scale);
    declare_weight(id + ".bias", beta);

    std::vector<Statement>* body = nullptr;
    auto ivs = em.parallel(xs.dims, &body);
    std::vector<IndexExpr> idx;
    for (const auto& name : ivs) idx.push_back(iv(name));
    std::string x = em.load(body, in[0].buffer, idx);
    std::string mu = em.load(body, id + ".running_mean", {iv(ivs[1])});
    std::string d = em.arith(body, ArithKind::subf, {x, mu});
    std::string s = em.load(body, id + ".scale", {iv(ivs[1])});
    std::string m = em.arith(body, ArithKind::mulf, {d, s});
    std::string be = em.load(body, id + ".bias", {iv(ivs[1])});
    std::string r = em.arith(body, ArithKind::addf, {m, be});
    em.store(body, out, idx, r);
  }

  void lower(const MaxPool2d& l) {
    const TensorShape& xs = in[0].shape;
    int64_t b = xs.dims[0], c = xs.dims[1];
    int64_t oh = (xs.dims[2] - l.k) / l.stride + 1;
    int64_t ow = (xs.dims[3] - l.k) / l.stride + 1;
    result.out_shape = TensorShape{{b, c, oh, ow}};
    declare(out, result.out_shape, out_kind);
    init_output(result.out_shape, "", 0, -HUGE_VAL);

    std::vector<Statement>* body = nullptr;
    auto ivs = em.parallel({b, c, oh, ow}, &body);
    IndexExpr ybase = em.scaled(body, ivs[2], l.stride);
    IndexExpr xbase = em.scaled(body, ivs[3], l.stride);
    std::vector<Statement>* kh_body = nullptr;
    std::string kh = em.seq_for(body, 0, l.k, &kh_body);
    std::vector<Statement>* kw_body = nullptr;
    std::string kw = em.seq_for(kh_body, 0, l.k, &kw_body);
    IndexExpr ysrc = ybase;
    ysrc.terms.push_back(IndexTerm::var(kh));
    IndexExpr xsrc = xbase;
    xsrc.terms.push_back(IndexTerm::var(kw));
    std::string x =
        em.load(kw_body, in[0].buffer, {iv(ivs[0]), iv(ivs[1]), ysrc, xsrc});
    std::string acc =
        em.load(kw_body, out, {iv(ivs[0]), iv(ivs[1]), iv(ivs[2]), iv(ivs[3])});
    std::string r = em.arith(kw_body, ArithKind::max, {acc, x},
                             ReductionMark{id + ".max", {kh, kw}});
    em.store(kw_body, out, {iv(ivs[0]), iv(ivs[1]), iv(ivs[2]), iv(ivs[3])}, r);
  }

  void lower(const Softmax&) {
    const TensorShape& xs = in[0].shape;
    int64_t batch = xs.dims[0];
    int64_t feat = xs.num_elements() / batch;
    result.out_shape = xs;
    declare(out, xs, out_kind);
    std::string flat = out + "_flat";
    std::string mx = out + "_max";
    std::string ex = out + "_exp";
    std::string sum = out + "_sum";
    declare(flat, TensorShape{{batch, feat}}, BufferKind::intermediate);
    declare(mx, TensorShape{{batch}}, BufferKind::intermediate);
    declare(ex, TensorShape{{batch, feat}}, BufferKind::intermediate);
    declare(sum, TensorShape{{batch}}, BufferKind::intermediate);

    emit_reshape_copy(em, in[0].buffer, xs, flat, TensorShape{{batch, feat}});

    // Max-subtraction stabilization bounds the Taylor inputs to (-inf, 0].
    {
      std::vector<Statement>* body = nullptr;
      auto ivs = em.parallel({batch}, &body);
      std::string v = em.load(body, flat, {iv(ivs[0]), ix({IndexTerm::lit(0)})});
      em.store(body, mx, {iv(ivs[0])}, v);
    }
    {
      std::vector<Statement>* body = nullptr;
      auto ivs = em.parallel({batch}, &body);
      std::vector<Statement>* inner = nullptr;
      std::string j = em.seq_for(body, 1, feat, &inner);
      std::string x = em.load(inner, flat, {iv(ivs[0]), iv(j)});
      std::string acc = em.load(inner, mx, {iv(ivs[0])});
      std::string r = em.arith(inner, ArithKind::max, {acc, x},
                               ReductionMark{id + ".max", {j}});
      em.store(inner, mx, {iv(ivs[0])}, r);
    }
    // Elementwise exp via a Horner-form Taylor polynomial: order k costs
    // k mulf + k addf with reciprocal-factorial constants.
    {
      std::vector<double> coeffs = exp_coefficients(exp.order);
      std::vector<Statement>* body = nullptr;
      auto ivs = em.parallel({batch, feat}, &body);
      std::string x = em.load(body, flat, {iv(ivs[0]), iv(ivs[1])});
      std::string m = em.load(body, mx, {iv(ivs[0])});
      std::string d = em.arith(body, ArithKind::subf, {x, m});
      std::string acc = em.constf(body, coeffs[static_cast<size_t>(exp.order)]);
      for (int n = exp.order - 1; n >= 0; --n) {
        std::string prod = em.arith(body, ArithKind::mulf, {d, acc});
        std::string coeff = em.constf(body, coeffs[static_cast<size_t>(n)]);
        acc = em.arith(body, ArithKind::addf, {coeff, prod});
      }
      em.store(body, ex, {iv(ivs[0]), iv(ivs[1])}, acc);
    }
    {
      std::vector<Statement>* body = nullptr;
      auto ivs = em.parallel({batch}, &body);
      std::string v = em.load(body, ex, {iv(ivs[0]), ix({IndexTerm::lit(0)})});
      em.store(body, sum, {iv(ivs[0])}, v);
    }
    {
      std::vector<Statement>* body = nullptr;
      auto ivs = em.parallel({batch}, &body);
      std::vector<Statement>* inner = nullptr;
      std::string j = em.seq_for(body, 1, feat, &inner);
      std::string e = em.load(inner, ex, {iv(ivs[0]), iv(j)});
      std::string acc = em.load(inner, sum, {iv(ivs[0])});
      std::string r = em.arith(inner, ArithKind::addf, {acc, e},
                               ReductionMark{id + ".sum", {j}});
      em.store(inner, sum, {iv(ivs[0])}, r);
    }
    // Elementwise divide back into the original layout.
    {
      std::vector<Statement>* body = nullptr;
      auto ivs = em.parallel(xs.dims, &body);
      IndexExpr fidx;
      int64_t stride = 1;
      std::vector<IndexExpr> out_idx;
      for (const auto& name : ivs) out_idx.push_back(iv(name));
      for (size_t i = xs.dims.size(); i-- > 1;) {
        if (stride == 1)
          fidx.terms.push_back(IndexTerm::var(ivs[i]));
        else
          fidx.terms.push_back(IndexTerm::var(em.muli(body, ivs[i], stride)));
        stride *= xs.dims[i];
      }
      std::reverse(fidx.terms.begin(), fidx.terms.end());
      std::string e = em.load(body, ex, {iv(ivs[0]), fidx});
      std::string s = em.load(body, sum, {iv(ivs[0])});
      std::string q = em.arith(body, ArithKind::divf, {e, s});
      em.store(body, out, out_idx, q);
    }
  }

  void lower(const ReLU&) {
    const TensorShape& xs = in[0].shape;
    result.out_shape = xs;
    declare(out, xs, out_kind);
    std::vector<Statement>* body = nullptr;
    auto ivs = em.parallel(xs.dims, &body);
    std::vector<IndexExpr> idx;
    for (const auto& name : ivs) idx.push_back(iv(name));
    std::string x = em.load(body, in[0].buffer, idx);
    std::string r = em.arith(body, ArithKind::relu, {x});
    em.store(body, out, idx, r);
  }

  void lower(const Reshape& l) {
    result.out_shape = l.shape;
    declare(out, l.shape, out_kind);
    emit_reshape_copy(em, in[0].buffer, in[0].shape, out, l.shape);
  }
};

}  // namespace

LoweredLayer lower_layer(const std::string& layer_id, const LayerSpec& spec,
                         const std::vector<LayerInput>& inputs,
                         const std::string& out_buffer, BufferKind out_kind,
                         const std::map<std::string, Tensor>& weights,
                         FloatFormat fmt, ExpApprox exp, int& name_counter) {
  std::vector<TensorShape> shapes;
  for (const auto& i : inputs) shapes.push_back(i.shape);
  infer_output_shape(layer_id, spec, shapes);  // validates
  LayerLowering ll(layer_id, inputs, out_buffer, out_kind, weights, fmt, exp,
                   name_counter);
  std::visit([&](const auto& s) { ll.lower(s); }, spec);
  return std::move(ll.result);
}

ModelGraph load_model(const std::string& model_json,
                      const std::vector<uint8_t>& weight_blob) {
  json doc;
  try {
    doc = json::parse(model_json);
  } catch (const std::exception& e) {
    fail(std::string("model JSON: ") + e.what());
  }
  ModelGraph g;
  g.name = doc.value("name", std::string("model"));
  if (!doc.contains("inputs") || !doc.contains("outputs") ||
      !doc.contains("layers"))
    fail("model JSON must contain inputs, outputs and layers");
  for (const auto& port : doc["inputs"]) {
    Port p;
    p.name = port.at("name").get<std::string>();
    for (const auto& d : port.at("shape")) p.shape.dims.push_back(d.get<int64_t>());
    if (p.shape.rank() < 1 || p.shape.num_elements() < 1)
      fail("input port '" + p.name + "' has a bad shape");
    g.shapes[p.name] = p.shape;
    g.inputs.push_back(std::move(p));
  }
  for (const auto& o : doc["outputs"]) g.outputs.push_back(o.get<std::string>());
  auto check_id = [](const std::string& id) {
    bool ok = !id.empty() && !std::isdigit(static_cast<unsigned char>(id[0]));
    for (char c : id)
      if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '.')
        ok = false;
    if (!ok)
      fail("id '" + id + "' must match [A-Za-z_][A-Za-z0-9_.]*");
  };
  std::set<std::string> ids;
  for (const auto& p : g.inputs) {
    check_id(p.name);
    ids.insert(p.name);
  }
  for (const auto& layer : doc["layers"]) {
    LayerNode node;
    node.id = layer.at("id").get<std::string>();
    check_id(node.id);
    if (!ids.insert(node.id).second)
      fail("duplicate id '" + node.id + "' in model");
    std::string type = layer.at("type").get<std::string>();
    node.spec = parse_layer_spec(node.id, type,
                                 layer.contains("params") ? layer["params"]
                                                          : json::object());
    for (const auto& i : layer.at("inputs"))
      node.inputs.push_back(i.get<std::string>());
    if (auto* mm = std::get_if<AddMM>(&node.spec))
      mm->has_c = node.inputs.size() == 3;
    g.layers.push_back(std::move(node));
  }
  for (const auto& name : g.outputs)
    if (!ids.count(name)) fail("output '" + name + "' is not a layer or input");

  // Weight manifest: name -> {offset (bytes), shape}, little-endian f64 blob.
  if (doc.contains("weights_manifest")) {
    const json& manifest = doc["weights_manifest"];
    for (auto it = manifest.begin(); it != manifest.end(); ++it) {
      Tensor t;
      uint64_t offset = it.value().at("offset").get<uint64_t>();
      for (const auto& d : it.value().at("shape"))
        t.shape.dims.push_back(d.get<int64_t>());
      uint64_t count = static_cast<uint64_t>(t.shape.num_elements());
      if (offset + count * 8 > weight_blob.size())
        fail("weight tensor '" + it.key() + "' overruns the weight blob (" +
             std::to_string(offset + count * 8) + " > " +
             std::to_string(weight_blob.size()) + " bytes)");
      t.data.resize(count);
      std::memcpy(t.data.data(), weight_blob.data() + offset, count * 8);
      g.weights.emplace(it.key(), std::move(t));
    }
  }

  // Topological order (Kahn, stable in file order); also detects cycles.
  std::map<std::string, const LayerNode*> by_id;
  for (const auto& l : g.layers) by_id[l.id] = &l;
  std::set<std::string> done;
  for (const auto& p : g.inputs) done.insert(p.name);
  std::vector<const LayerNode*> pending;
  for (const auto& l : g.layers) pending.push_back(&l);
  while (!pending.empty()) {
    size_t before = g.topo_order.size();
    std::vector<const LayerNode*> next;
    for (const LayerNode* l : pending) {
      bool ready = true;
      for (const auto& i : l->inputs) {
        if (!by_id.count(i) && !g.shapes.count(i))
          fail("layer '" + l->id + "' input '" + i + "' does not exist");
        if (!done.count(i)) ready = false;
      }
      if (ready) {
        g.topo_order.push_back(l->id);
        done.insert(l->id);
      } else {
        next.push_back(l);
      }
    }
    if (g.topo_order.size() == before)
      fail("model graph contains a cycle involving layer '" +
           pending.front()->id + "'");
    pending = std::move(next);
  }

  // Shape refinement + weight shape checks in topological order.
  for (const auto& id : g.topo_order) {
    const LayerNode& l = *by_id[id];
    std::vector<TensorShape> in_shapes;
    for (const auto& i : l.inputs) in_shapes.push_back(g.shapes.at(i));
    g.shapes[id] = infer_output_shape(id, l.spec, in_shapes);

    auto want = [&](const std::string& tensor, TensorShape shape) {
      auto it = g.weights.find(id + "." + tensor);
      if (it == g.weights.end())
        fail("missing weight tensor '" + id + "." + tensor + "'");
      if (!(it->second.shape == shape))
        fail("weight tensor '" + id + "." + tensor + "' has shape " +
             shape_str(it->second.shape) + ", expected " + shape_str(shape));
    };
    if (const auto* c = std::get_if<Conv2d>(&l.spec)) {
      want("weight", TensorShape{{c->c_out, c->c_in, c->k, c->k}});
      if (c->bias) want("bias", TensorShape{{c->c_out}});
    } else if (const auto* li = std::get_if<Linear>(&l.spec)) {
      want("weight", TensorShape{{li->out_features, li->in_features}});
      if (li->bias) want("bias", TensorShape{{li->out_features}});
    } else if (const auto* bn = std::get_if<BatchNorm2d>(&l.spec)) {
      TensorShape c{{bn->num_features}};
      want("weight", c);
      want("bias", c);
      want("running_mean", c);
      want("running_var", c);
      if (bn->eps <= 0) fail("layer '" + id + "' eps must be positive");
    }
  }
  return g;
}

LoweredModel lower_model(const ModelGraph& graph, ExpApprox exp,
                         FloatFormat fmt) {
  check_format(fmt);
  if (exp.order < 1) fail("exp order must be >= 1");
  LoweredModel out;
  out.program.name = graph.name;

  std::set<std::string> output_set(graph.outputs.begin(), graph.outputs.end());
  for (const auto& p : graph.inputs)
    out.program.params.push_back({p.name, p.shape, fmt, BufferKind::input});

  int counter = 0;
  std::map<std::string, std::string> buffer_of;  // id/port -> buffer name
  for (const auto& p : graph.inputs) buffer_of[p.name] = p.name;

  std::map<std::string, const LayerNode*> by_id;
  for (const auto& l : graph.layers) by_id[l.id] = &l;

  std::vector<BufferDecl> output_params;
  for (const auto& id : graph.topo_order) {
    const LayerNode& l = *by_id.at(id);
    std::vector<LayerInput> inputs;
    for (const auto& i : l.inputs)
      inputs.push_back({buffer_of.at(i), graph.shapes.at(i)});
    bool is_output = output_set.count(id) != 0;
    LoweredLayer lowered =
        lower_layer(id, l.spec, inputs, id,
                    is_output ? BufferKind::output : BufferKind::intermediate,
                    graph.weights, fmt, exp, counter);
    buffer_of[id] = id;
    for (auto& b : lowered.buffers) {
      if (b.kind == BufferKind::output)
        output_params.push_back(b);
      else
        out.program.locals.push_back(b);
    }
    for (auto& [name, data] : lowered.weights)
      out.weights.emplace(name, std::move(data));
    for (auto& st : lowered.statements)
      out.program.body.push_back(std::move(st));
  }

  // Model outputs that are input ports get an explicit copy nest.
  for (const auto& name : graph.outputs) {
    if (by_id.count(name)) continue;
    const TensorShape& shape = graph.shapes.at(name);
    std::string buf = name + "_out";
    output_params.push_back({buf, shape, fmt, BufferKind::output});
    Emitter em{counter, fmt, &out.program.body};
    std::vector<Statement>* body = nullptr;
    auto ivs = em.parallel(shape.dims, &body);
    std::vector<IndexExpr> idx;
    for (const auto& n : ivs) idx.push_back(iv(n));
    std::string v = em.load(body, buffer_of.at(name), idx);
    em.store(body, buf, idx, v);
  }

  // Output buffers surface as params in model output order.
  std::sort(output_params.begin(), output_params.end(),
            [&](const BufferDecl& a, const BufferDecl& b) {
              auto pos = [&](const std::string& id) {
                for (size_t i = 0; i < graph.outputs.size(); ++i)
                  if (graph.outputs[i] == id || graph.outputs[i] + "_out" == id)
                    return i;
                return graph.outputs.size();
              };
              return pos(a.id) < pos(b.id);
            });
  for (auto& b : output_params) out.program.params.push_back(std::move(b));
  return out;
}

std::vector<uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail("cannot open file '" + path + "'");
  return std::vector<uint8_t>(std::istreambuf_iterator<char>(f),
                              std::istreambuf_iterator<char>());
}

std::string read_file_text(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail("cannot open file '" + path + "'");
  return std::string(std::istreambuf_iterator<char>(f),
                     std::istreambuf_iterator<char>());
}

}  // namespace thls
