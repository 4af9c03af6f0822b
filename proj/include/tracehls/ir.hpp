// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "tracehls/fpformat.hpp"
#include "tracehls/ops.hpp"

namespace thls {

struct TensorShape {
  std::vector<int64_t> dims;

  int rank() const { return static_cast<int>(dims.size()); }
  int64_t num_elements() const {
    int64_t n = 1;
    for (int64_t d : dims) n *= d;
    return n;
  }
  bool operator==(const TensorShape&) const = default;
};

enum class BufferKind : uint8_t { input, output, weight, intermediate };

std::string_view buffer_kind_name(BufferKind k);
std::optional<BufferKind> buffer_kind_from_name(std::string_view name);

struct BufferDecl {
  std::string id;
  TensorShape shape;
  FloatFormat elem_format;
  BufferKind kind = BufferKind::intermediate;
  bool operator==(const BufferDecl&) const = default;
};

// One summand of an index expression: a named index value (loop iv or the
// result of an index op) or an integer constant.
struct IndexTerm {
  std::string name;  // empty means constant
  int64_t constant = 0;

  bool is_const() const { return name.empty(); }
  static IndexTerm var(std::string n) { return IndexTerm{std::move(n), 0}; }
  static IndexTerm lit(int64_t c) { return IndexTerm{{}, c}; }
  bool operator==(const IndexTerm&) const = default;
};

// Index expressions are sums of ivs and constants.
struct IndexExpr {
  std::vector<IndexTerm> terms;
  bool operator==(const IndexExpr&) const = default;
};

enum class IndexOpKind : uint8_t { addi, muli };

struct Statement;

struct SequentialFor {
  std::string iv;
  int64_t lower = 0;
  int64_t upper = 0;
  int64_t step = 1;
  std::vector<Statement> body;
  bool operator==(const SequentialFor&) const;
};

struct ParallelFor {
  std::vector<std::string> ivs;
  std::vector<int64_t> lowers;
  std::vector<int64_t> uppers;
  std::vector<int64_t> steps;
  std::vector<Statement> body;
  bool operator==(const ParallelFor&) const;
};

struct Load {
  std::string result;
  std::string buffer;
  std::vector<IndexExpr> indices;
  bool operator==(const Load&) const = default;
};

struct Store {
  std::string buffer;
  std::vector<IndexExpr> indices;
  std::string operand;
  bool operator==(const Store&) const = default;
};

// Tags an accumulation statement so the traced chain can later be rebuilt as
// a reduction tree; `ivs` names the sequential ivs being reduced over.
struct ReductionMark {
  std::string id;
  std::vector<std::string> ivs;
  bool operator==(const ReductionMark&) const = default;
};

struct Arith {
  std::string result;
  ArithKind kind = ArithKind::addf;
  std::vector<std::string> operands;
  std::optional<ReductionMark> reduction;
  bool operator==(const Arith&) const = default;
};

struct ConstF {
  std::string result;
  double literal = 0.0;
  bool operator==(const ConstF&) const = default;
};

struct IndexArith {
  std::string result;
  IndexOpKind kind = IndexOpKind::addi;
  IndexTerm lhs;
  IndexTerm rhs;
  bool operator==(const IndexArith&) const = default;
};

struct Statement {
  std::variant<SequentialFor, ParallelFor, Load, Store, Arith, ConstF,
               IndexArith>
      node;

  template <class T>
  bool is() const {
    return std::holds_alternative<T>(node);
  }
  template <class T>
  const T& as() const {
    return std::get<T>(node);
  }
  template <class T>
  T& as() {
    return std::get<T>(node);
  }
  bool operator==(const Statement&) const = default;
};

inline bool SequentialFor::operator==(const SequentialFor& o) const {
  return iv == o.iv && lower == o.lower && upper == o.upper && step == o.step &&
         body == o.body;
}
inline bool ParallelFor::operator==(const ParallelFor& o) const {
  return ivs == o.ivs && lowers == o.lowers && uppers == o.uppers &&
         steps == o.steps && body == o.body;
}

struct LoopNestProgram {
  std::string name;
  std::vector<BufferDecl> params;
  // Body declaration region; weight buffers start out here and are moved to
  // the param list by the hoist-globals transform.
  std::vector<BufferDecl> locals;
  std::vector<Statement> body;
  bool operator==(const LoopNestProgram&) const = default;

  const BufferDecl* find_buffer(std::string_view id) const;
};

struct Diagnostic {
  std::string path;  // statement path, e.g. "body[2].body[0]"
  std::string message;
};

// Total well-formedness check: type/arity/bound invariants, SSA-per-instance
// naming, declared-vs-referenced buffers. Returns an empty list iff valid.
std::vector<Diagnostic> validate(const LoopNestProgram& program);

// Round-trippable textual form: parse(pretty_print(p)) == p.
std::string pretty_print(const LoopNestProgram& program);

struct ParseError : std::runtime_error {
  int line;
  int col;
  ParseError(int line_, int col_, const std::string& msg)
      : std::runtime_error("parse error at " + std::to_string(line_) + ":" +
                           std::to_string(col_) + ": " + msg),
        line(line_),
        col(col_) {}
};

LoopNestProgram parse(const std::string& text);

// Iteration count of a (lower, upper, step) range with positive step.
inline int64_t range_size(int64_t lower, int64_t upper, int64_t step) {
  if (step <= 0 || upper <= lower) return 0;
  return (upper - lower + step - 1) / step;
}

}  // namespace thls
