// SPDX-License-Identifier: Apache-2.0
//
// Line-oriented textual form of the loop-nest IR. The format is stable: it is
// used for golden tests and by the --emit-ir flag, and parse(pretty_print(p))
// reproduces the program structurally.
#include <cctype>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <string>

#include "tracehls/ir.hpp"

namespace thls {

namespace {

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v < 0 ? "-inf" : "inf";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct Printer {
  std::ostringstream out;
  int indent = 0;

  void line_start() {
    for (int i = 0; i < indent; ++i) out << "  ";
  }

  void print_type(const BufferDecl& b) {
    out << "memref<";
    for (size_t i = 0; i < b.shape.dims.size(); ++i) {
      if (i) out << " x ";
      out << b.shape.dims[i];
    }
    out << ", fp(" << b.elem_format.we << ", " << b.elem_format.wf << ")> "
        << buffer_kind_name(b.kind);
  }

  void print_term(const IndexTerm& t) {
    if (t.is_const())
      out << t.constant;
    else
      out << "%" << t.name;
  }

  void print_index_expr(const IndexExpr& e) {
    for (size_t i = 0; i < e.terms.size(); ++i) {
      if (i) out << " + ";
      print_term(e.terms[i]);
    }
  }

  void print_indices(const std::vector<IndexExpr>& indices) {
    out << "[";
    for (size_t i = 0; i < indices.size(); ++i) {
      if (i) out << ", ";
      print_index_expr(indices[i]);
    }
    out << "]";
  }

  void print_block(const std::vector<Statement>& body) {
    out << "{\n";
    ++indent;
    for (const auto& st : body) print_statement(st);
    --indent;
    line_start();
    out << "}\n";
  }

  void print_statement(const Statement& st) {
    line_start();
    if (st.is<SequentialFor>()) {
      const auto& f = st.as<SequentialFor>();
      out << "for %" << f.iv << " = " << f.lower << " to " << f.upper
          << " step " << f.step << " ";
      print_block(f.body);
    } else if (st.is<ParallelFor>()) {
      const auto& f = st.as<ParallelFor>();
      auto list = [&](const std::vector<int64_t>& v) {
        out << "(";
        for (size_t i = 0; i < v.size(); ++i) {
          if (i) out << ", ";
          out << v[i];
        }
        out << ")";
      };
      out << "parallel (";
      for (size_t i = 0; i < f.ivs.size(); ++i) {
        if (i) out << ", ";
        out << "%" << f.ivs[i];
      }
      out << ") = ";
      list(f.lowers);
      out << " to ";
      list(f.uppers);
      out << " step ";
      list(f.steps);
      out << " ";
      print_block(f.body);
    } else if (st.is<Load>()) {
      const auto& l = st.as<Load>();
      out << "%" << l.result << " = load %" << l.buffer;
      print_indices(l.indices);
      out << "\n";
    } else if (st.is<Store>()) {
      const auto& s = st.as<Store>();
      out << "store %" << s.buffer;
      print_indices(s.indices);
      out << ", %" << s.operand << "\n";
    } else if (st.is<Arith>()) {
      const auto& a = st.as<Arith>();
      out << "%" << a.result << " = " << kind_name(a.kind) << " ";
      for (size_t i = 0; i < a.operands.size(); ++i) {
        if (i) out << ", ";
        out << "%" << a.operands[i];
      }
      if (a.reduction) {
        out << " reduce @" << a.reduction->id << "(";
        for (size_t i = 0; i < a.reduction->ivs.size(); ++i) {
          if (i) out << ", ";
          out << "%" << a.reduction->ivs[i];
        }
        out << ")";
      }
      out << "\n";
    } else if (st.is<ConstF>()) {
      const auto& c = st.as<ConstF>();
      out << "%" << c.result << " = const " << format_double(c.literal) << "\n";
    } else if (st.is<IndexArith>()) {
      const auto& ia = st.as<IndexArith>();
      out << "%" << ia.result << " = "
          << (ia.kind == IndexOpKind::addi ? "addi" : "muli") << " ";
      print_term(ia.lhs);
      out << ", ";
      print_term(ia.rhs);
      out << "\n";
    }
  }
};

}  // namespace

std::string pretty_print(const LoopNestProgram& program) {
  Printer p;
  p.out << "func @" << program.name << "(";
  if (!program.params.empty()) {
    p.out << "\n";
    for (size_t i = 0; i < program.params.size(); ++i) {
      p.out << "  %" << program.params[i].id << ": ";
      p.print_type(program.params[i]);
      if (i + 1 < program.params.size()) p.out << ",";
      p.out << "\n";
    }
  }
  p.out << ") {\n";
  p.indent = 1;
  for (const auto& b : program.locals) {
    p.line_start();
    p.out << "local %" << b.id << ": ";
    p.print_type(b);
    p.out << "\n";
  }
  for (const auto& st : program.body) p.print_statement(st);
  p.out << "}\n";
  return p.out.str();
}

namespace {

enum class Tok { ident, pct_name, at_name, number, punct, end };

struct Token {
  Tok kind = Tok::end;
  std::string text;
  double num = 0.0;
  int64_t int_val = 0;
  bool is_integer = false;
  char punct = 0;
  int line = 1;
  int col = 1;
};

struct Lexer {
  const std::string& src;
  size_t pos = 0;
  int line = 1;
  int col = 1;

  explicit Lexer(const std::string& s) : src(s) {}

  [[noreturn]] void fail(const std::string& msg) const {
    throw ParseError(line, col, msg);
  }

  char peek(size_t off = 0) const {
    return pos + off < src.size() ? src[pos + off] : '\0';
  }

  void advance() {
    if (pos < src.size()) {
      if (src[pos] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
      ++pos;
    }
  }

  void skip_space() {
    for (;;) {
      while (std::isspace(static_cast<unsigned char>(peek()))) advance();
      if (peek() == '/' && peek(1) == '/') {
        while (peek() && peek() != '\n') advance();
        continue;
      }
      break;
    }
  }

  static bool name_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.';
  }

  Token next() {
    skip_space();
    Token t;
    t.line = line;
    t.col = col;
    char c = peek();
    if (c == '\0') {
      t.kind = Tok::end;
      return t;
    }
    if (c == '%' || c == '@') {
      advance();
      std::string name;
      while (name_char(peek())) {
        name.push_back(peek());
        advance();
      }
      if (name.empty()) fail("expected a name after '" + std::string(1, c) + "'");
      t.kind = c == '%' ? Tok::pct_name : Tok::at_name;
      t.text = std::move(name);
      return t;
    }
    bool negative = false;
    if (c == '-' &&
        (std::isdigit(static_cast<unsigned char>(peek(1))) || peek(1) == 'i' ||
         peek(1) == 'n' || peek(1) == '.')) {
      negative = true;
      advance();
      c = peek();
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.' ||
        (negative && (c == 'i' || c == 'n'))) {
      std::string text;
      if (negative) text.push_back('-');
      if (c == 'i' || c == 'n') {  // -inf / -nan
        while (std::isalpha(static_cast<unsigned char>(peek()))) {
          text.push_back(peek());
          advance();
        }
      } else {
        bool is_int = true;
        while (std::isdigit(static_cast<unsigned char>(peek())) ||
               peek() == '.' || peek() == 'e' || peek() == 'E' ||
               ((peek() == '+' || peek() == '-') &&
                (text.back() == 'e' || text.back() == 'E'))) {
          if (!std::isdigit(static_cast<unsigned char>(peek()))) is_int = false;
          text.push_back(peek());
          advance();
        }
        t.is_integer = is_int;
      }
      t.kind = Tok::number;
      if (text == "-inf") {
        t.num = -HUGE_VAL;
      } else if (text == "-nan") {
        t.num = std::nan("");
      } else {
        try {
          t.num = std::stod(text);
        } catch (const std::exception&) {
          fail("malformed number '" + text + "'");
        }
        if (t.is_integer) t.int_val = static_cast<int64_t>(std::stoll(text));
      }
      t.text = std::move(text);
      return t;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::string name;
      while (name_char(peek())) {
        name.push_back(peek());
        advance();
      }
      t.kind = Tok::ident;
      if (name == "inf" || name == "nan") {
        t.kind = Tok::number;
        t.num = name == "inf" ? HUGE_VAL : std::nan("");
      }
      t.text = std::move(name);
      return t;
    }
    if (std::string("(){}[]<>,:=+").find(c) != std::string::npos) {
      advance();
      t.kind = Tok::punct;
      t.punct = c;
      t.text = std::string(1, c);
      return t;
    }
    fail(std::string("unexpected character '") + c + "'");
  }
};

struct Parser {
  Lexer lex;
  Token tok;

  explicit Parser(const std::string& src) : lex(src) { tok = lex.next(); }

  [[noreturn]] void fail(const std::string& msg) const {
    throw ParseError(tok.line, tok.col, msg);
  }

  void bump() { tok = lex.next(); }

  bool at_punct(char c) const { return tok.kind == Tok::punct && tok.punct == c; }
  bool at_ident(std::string_view kw) const {
    return tok.kind == Tok::ident && tok.text == kw;
  }

  void expect_punct(char c) {
    if (!at_punct(c)) fail(std::string("expected '") + c + "'");
    bump();
  }

  void expect_ident(std::string_view kw) {
    if (!at_ident(kw)) fail("expected '" + std::string(kw) + "'");
    bump();
  }

  std::string expect_pct() {
    if (tok.kind != Tok::pct_name) fail("expected a %name");
    std::string s = tok.text;
    bump();
    return s;
  }

  std::string expect_at() {
    if (tok.kind != Tok::at_name) fail("expected an @name");
    std::string s = tok.text;
    bump();
    return s;
  }

  int64_t expect_int() {
    if (tok.kind != Tok::number || !tok.is_integer)
      fail("expected an integer");
    int64_t v = tok.int_val;
    bump();
    return v;
  }

  double expect_number() {
    if (tok.kind != Tok::number) fail("expected a number");
    double v = tok.num;
    bump();
    return v;
  }

  BufferDecl parse_decl(BufferKind default_kind) {
    BufferDecl b;
    b.id = expect_pct();
    expect_punct(':');
    expect_ident("memref");
    expect_punct('<');
    b.shape.dims.push_back(expect_int());
    while (at_ident("x")) {
      bump();
      b.shape.dims.push_back(expect_int());
    }
    expect_punct(',');
    expect_ident("fp");
    expect_punct('(');
    b.elem_format.we = static_cast<int>(expect_int());
    expect_punct(',');
    b.elem_format.wf = static_cast<int>(expect_int());
    expect_punct(')');
    expect_punct('>');
    if (tok.kind == Tok::ident) {
      auto k = buffer_kind_from_name(tok.text);
      if (!k) fail("unknown buffer kind '" + tok.text + "'");
      b.kind = *k;
      bump();
    } else {
      b.kind = default_kind;
    }
    return b;
  }

  IndexTerm parse_term() {
    if (tok.kind == Tok::pct_name) return IndexTerm::var(expect_pct());
    return IndexTerm::lit(expect_int());
  }

  IndexExpr parse_index_expr() {
    IndexExpr e;
    e.terms.push_back(parse_term());
    while (at_punct('+')) {
      bump();
      e.terms.push_back(parse_term());
    }
    return e;
  }

  std::vector<IndexExpr> parse_indices() {
    std::vector<IndexExpr> v;
    expect_punct('[');
    if (!at_punct(']')) {
      v.push_back(parse_index_expr());
      while (at_punct(',')) {
        bump();
        v.push_back(parse_index_expr());
      }
    }
    expect_punct(']');
    return v;
  }

  std::vector<int64_t> parse_int_tuple() {
    std::vector<int64_t> v;
    expect_punct('(');
    if (!at_punct(')')) {
      v.push_back(expect_int());
      while (at_punct(',')) {
        bump();
        v.push_back(expect_int());
      }
    }
    expect_punct(')');
    return v;
  }

  std::vector<Statement> parse_block() {
    expect_punct('{');
    std::vector<Statement> body;
    while (!at_punct('}')) body.push_back(parse_statement());
    expect_punct('}');
    return body;
  }

  Statement parse_statement() {
    if (at_ident("for")) {
      bump();
      SequentialFor f;
      f.iv = expect_pct();
      expect_punct('=');
      f.lower = expect_int();
      expect_ident("to");
      f.upper = expect_int();
      expect_ident("step");
      f.step = expect_int();
      f.body = parse_block();
      return Statement{std::move(f)};
    }
    if (at_ident("parallel")) {
      bump();
      ParallelFor f;
      expect_punct('(');
      f.ivs.push_back(expect_pct());
      while (at_punct(',')) {
        bump();
        f.ivs.push_back(expect_pct());
      }
      expect_punct(')');
      expect_punct('=');
      f.lowers = parse_int_tuple();
      expect_ident("to");
      f.uppers = parse_int_tuple();
      expect_ident("step");
      f.steps = parse_int_tuple();
      f.body = parse_block();
      return Statement{std::move(f)};
    }
    if (at_ident("store")) {
      bump();
      Store s;
      s.buffer = expect_pct();
      s.indices = parse_indices();
      expect_punct(',');
      s.operand = expect_pct();
      return Statement{std::move(s)};
    }
    // %name = <op> ...
    std::string result = expect_pct();
    expect_punct('=');
    if (tok.kind != Tok::ident) fail("expected an operation name");
    std::string op = tok.text;
    if (op == "load") {
      bump();
      Load l;
      l.result = std::move(result);
      l.buffer = expect_pct();
      l.indices = parse_indices();
      return Statement{std::move(l)};
    }
    if (op == "const") {
      bump();
      ConstF c;
      c.result = std::move(result);
      c.literal = expect_number();
      return Statement{std::move(c)};
    }
    if (op == "addi" || op == "muli") {
      bump();
      IndexArith ia;
      ia.result = std::move(result);
      ia.kind = op == "addi" ? IndexOpKind::addi : IndexOpKind::muli;
      ia.lhs = parse_term();
      expect_punct(',');
      ia.rhs = parse_term();
      return Statement{std::move(ia)};
    }
    auto kind = kind_from_name(op);
    if (!kind) fail("unknown operation '" + op + "'");
    bump();
    Arith a;
    a.result = std::move(result);
    a.kind = *kind;
    a.operands.push_back(expect_pct());
    while (at_punct(',')) {
      bump();
      a.operands.push_back(expect_pct());
    }
    if (at_ident("reduce")) {
      bump();
      ReductionMark m;
      m.id = expect_at();
      expect_punct('(');
      if (!at_punct(')')) {
        m.ivs.push_back(expect_pct());
        while (at_punct(',')) {
          bump();
          m.ivs.push_back(expect_pct());
        }
      }
      expect_punct(')');
      a.reduction = std::move(m);
    }
    return Statement{std::move(a)};
  }

  LoopNestProgram parse_program() {
    LoopNestProgram p;
    expect_ident("func");
    p.name = expect_at();
    expect_punct('(');
    if (!at_punct(')')) {
      p.params.push_back(parse_decl(BufferKind::input));
      while (at_punct(',')) {
        bump();
        p.params.push_back(parse_decl(BufferKind::input));
      }
    }
    expect_punct(')');
    expect_punct('{');
    while (at_ident("local")) {
      bump();
      p.locals.push_back(parse_decl(BufferKind::intermediate));
    }
    while (!at_punct('}')) p.body.push_back(parse_statement());
    expect_punct('}');
    if (tok.kind != Tok::end) fail("trailing input after program");
    return p;
  }
};

}  // namespace

LoopNestProgram parse(const std::string& text) {
  Parser p(text);
  return p.parse_program();
}

}  // namespace thls
