// SPDX-License-Identifier: Apache-2.0
#include "tracehls/ir.hpp"

#include <cmath>
#include <map>
#include <set>

namespace thls {

std::string_view buffer_kind_name(BufferKind k) {
  switch (k) {
    case BufferKind::input: return "input";
    case BufferKind::output: return "output";
    case BufferKind::weight: return "weight";
    case BufferKind::intermediate: return "intermediate";
  }
  return "?";
}

std::optional<BufferKind> buffer_kind_from_name(std::string_view name) {
  if (name == "input") return BufferKind::input;
  if (name == "output") return BufferKind::output;
  if (name == "weight") return BufferKind::weight;
  if (name == "intermediate") return BufferKind::intermediate;
  return std::nullopt;
}

const BufferDecl* LoopNestProgram::find_buffer(std::string_view id) const {
  for (const auto& b : params)
    if (b.id == id) return &b;
  for (const auto& b : locals)
    if (b.id == id) return &b;
  return nullptr;
}

namespace {

enum class NameType { index, value };

struct Scope {
  std::map<std::string, NameType> names;
};

struct Validator {
  const LoopNestProgram& program;
  std::vector<Diagnostic> diags;
  std::map<std::string, const BufferDecl*> buffers;
  std::set<std::string> referenced;
  std::vector<Scope> scopes;

  explicit Validator(const LoopNestProgram& p) : program(p) {}

  void report(const std::string& path, std::string msg) {
    diags.push_back({path, std::move(msg)});
  }

  bool defined(const std::string& name, NameType t) const {
    for (auto it = scopes.rbegin(); it != scopes.rend(); ++it) {
      auto f = it->names.find(name);
      if (f != it->names.end()) return f->second == t;
    }
    return false;
  }

  bool defined_any(const std::string& name) const {
    for (auto it = scopes.rbegin(); it != scopes.rend(); ++it)
      if (it->names.count(name)) return true;
    return false;
  }

  void define(const std::string& path, const std::string& name, NameType t) {
    if (defined_any(name)) {
      report(path, "name %" + name + " is already defined in scope");
      return;
    }
    scopes.back().names.emplace(name, t);
  }

  void check_decls() {
    auto add = [&](const BufferDecl& b, const char* where) {
      if (b.id.empty()) report(where, "buffer with empty id");
      if (b.shape.rank() < 1)
        report(where, "buffer %" + b.id + " has rank 0");
      for (int64_t d : b.shape.dims)
        if (d < 1)
          report(where, "buffer %" + b.id + " has non-positive extent " +
                            std::to_string(d));
      try {
        check_format(b.elem_format);
      } catch (const std::exception& e) {
        report(where, "buffer %" + b.id + ": " + e.what());
      }
      if (!buffers.emplace(b.id, &b).second)
        report(where, "duplicate buffer id %" + b.id);
    };
    for (const auto& b : program.params) add(b, "params");
    for (const auto& b : program.locals) add(b, "locals");
  }

  void check_index_expr(const std::string& path, const IndexExpr& e) {
    if (e.terms.empty()) report(path, "empty index expression");
    for (const auto& t : e.terms) {
      if (t.is_const()) continue;
      if (!defined(t.name, NameType::index))
        report(path, "index expression references undefined or non-index "
                     "name %" + t.name);
    }
  }

  void check_buffer_access(const std::string& path, const std::string& buffer,
                           const std::vector<IndexExpr>& indices) {
    referenced.insert(buffer);
    auto it = buffers.find(buffer);
    if (it == buffers.end()) {
      report(path, "reference to undeclared buffer %" + buffer);
    } else if (static_cast<int>(indices.size()) != it->second->shape.rank()) {
      report(path, "buffer %" + buffer + " has rank " +
                       std::to_string(it->second->shape.rank()) + " but " +
                       std::to_string(indices.size()) + " indices given");
    }
    for (const auto& e : indices) check_index_expr(path, e);
  }

  void check_value_use(const std::string& path, const std::string& name) {
    if (!defined(name, NameType::value))
      report(path, "use of undefined value %" + name);
  }

  void check_block(const std::string& path, const std::vector<Statement>& body) {
    scopes.push_back({});
    for (size_t i = 0; i < body.size(); ++i)
      check_statement(path + ".body[" + std::to_string(i) + "]", body[i]);
    scopes.pop_back();
  }

  void check_statement(const std::string& path, const Statement& st) {
    if (st.is<SequentialFor>()) {
      const auto& f = st.as<SequentialFor>();
      if (f.step <= 0)
        report(path, "loop %" + f.iv + " has non-positive step " +
                         std::to_string(f.step) + " (does not terminate)");
      scopes.push_back({});
      define(path, f.iv, NameType::index);
      for (size_t i = 0; i < f.body.size(); ++i)
        check_statement(path + ".body[" + std::to_string(i) + "]", f.body[i]);
      scopes.pop_back();
    } else if (st.is<ParallelFor>()) {
      const auto& f = st.as<ParallelFor>();
      size_t n = f.ivs.size();
      if (n == 0) report(path, "parallel loop with no induction variables");
      if (f.lowers.size() != n || f.uppers.size() != n || f.steps.size() != n)
        report(path, "parallel loop bound lists disagree with iv count");
      for (size_t i = 0; i < f.steps.size(); ++i)
        if (f.steps[i] <= 0)
          report(path, "parallel iv %" + (i < n ? f.ivs[i] : "?") +
                           " has non-positive step " +
                           std::to_string(f.steps[i]) +
                           " (does not terminate)");
      scopes.push_back({});
      for (const auto& iv : f.ivs) define(path, iv, NameType::index);
      for (size_t i = 0; i < f.body.size(); ++i)
        check_statement(path + ".body[" + std::to_string(i) + "]", f.body[i]);
      scopes.pop_back();
    } else if (st.is<Load>()) {
      const auto& l = st.as<Load>();
      check_buffer_access(path, l.buffer, l.indices);
      define(path, l.result, NameType::value);
    } else if (st.is<Store>()) {
      const auto& s = st.as<Store>();
      check_buffer_access(path, s.buffer, s.indices);
      check_value_use(path, s.operand);
    } else if (st.is<Arith>()) {
      const auto& a = st.as<Arith>();
      if (static_cast<int>(a.operands.size()) != arity(a.kind))
        report(path, std::string(kind_name(a.kind)) + " expects " +
                         std::to_string(arity(a.kind)) + " operands, got " +
                         std::to_string(a.operands.size()));
      for (const auto& op : a.operands) check_value_use(path, op);
      if (a.reduction) {
        if (a.reduction->id.empty()) report(path, "reduction mark without id");
        for (const auto& iv : a.reduction->ivs)
          if (!defined(iv, NameType::index))
            report(path, "reduction mark references unknown iv %" + iv);
      }
      define(path, a.result, NameType::value);
    } else if (st.is<ConstF>()) {
      define(path, st.as<ConstF>().result, NameType::value);
    } else if (st.is<IndexArith>()) {
      const auto& ia = st.as<IndexArith>();
      for (const IndexTerm* t : {&ia.lhs, &ia.rhs}) {
        if (!t->is_const() && !defined(t->name, NameType::index))
          report(path, "index op references undefined or non-index name %" +
                           t->name);
      }
      define(path, ia.result, NameType::index);
    }
  }

  std::vector<Diagnostic> run() {
    check_decls();
    check_block("", program.body);
    for (const auto& [id, decl] : buffers) {
      (void)decl;
      if (!referenced.count(id))
        report("", "buffer %" + id + " is declared but never referenced");
    }
    return std::move(diags);
  }
};

}  // namespace

std::vector<Diagnostic> validate(const LoopNestProgram& program) {
  return Validator(program).run();
}

}  // namespace thls
