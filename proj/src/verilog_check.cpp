// SPDX-License-Identifier: Apache-2.0
//
// Minimal in-process check over the Verilog subset this backend emits:
// balanced block constructs, identifiers declared before use, instantiated
// modules known with matching port names. Not a general Verilog parser.
#include <cctype>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "tracehls/backend.hpp"

namespace thls {

namespace {

const std::set<std::string>& keywords() {
  static const std::set<std::string> kw = {
      "module", "endmodule", "input",    "output",   "inout",  "wire",
      "reg",    "assign",    "always",   "initial",  "begin",  "end",
      "if",     "else",      "case",     "endcase",  "default", "for",
      "while",  "posedge",   "negedge",  "function", "endfunction",
      "integer", "real",     "localparam", "parameter", "wait",
      "forever", "task",     "endtask",  "genvar",   "generate",
      "endgenerate", "signed"};
  return kw;
}

struct VToken {
  enum Kind { ident, sysname, number, str, punct, directive } kind;
  std::string text;
  int line;
};

std::vector<VToken> tokenize(const std::string& src,
                             std::vector<std::string>& diags) {
  std::vector<VToken> toks;
  int line = 1;
  size_t i = 0;
  auto peek = [&](size_t off = 0) {
    return i + off < src.size() ? src[i + off] : '\0';
  };
  while (i < src.size()) {
    char c = src[i];
    if (c == '\n') {
      ++line;
      ++i;
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    if (c == '/' && peek(1) == '/') {
      while (i < src.size() && src[i] != '\n') ++i;
      continue;
    }
    if (c == '/' && peek(1) == '*') {
      i += 2;
      while (i + 1 < src.size() && !(src[i] == '*' && src[i + 1] == '/')) {
        if (src[i] == '\n') ++line;
        ++i;
      }
      i += 2;
      continue;
    }
    if (c == '"') {
      size_t start = i++;
      while (i < src.size() && src[i] != '"') {
        if (src[i] == '\\') ++i;
        ++i;
      }
      ++i;
      toks.push_back({VToken::str, src.substr(start, i - start), line});
      continue;
    }
    if (c == '`') {
      size_t start = i++;
      while (i < src.size() && (std::isalnum(static_cast<unsigned char>(src[i])) ||
                                src[i] == '_' || src[i] == '/'))
        ++i;
      // directive argument (e.g. `timescale 1ns/1ps) consumed to end of line
      while (i < src.size() && src[i] != '\n') ++i;
      toks.push_back({VToken::directive, src.substr(start, i - start), line});
      continue;
    }
    if (c == '$') {
      size_t start = i++;
      while (i < src.size() && (std::isalnum(static_cast<unsigned char>(src[i])) ||
                                src[i] == '_'))
        ++i;
      toks.push_back({VToken::sysname, src.substr(start, i - start), line});
      continue;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) ||
        (c == '\'' && std::isalnum(static_cast<unsigned char>(peek(1))))) {
      size_t start = i;
      while (i < src.size() &&
             (std::isalnum(static_cast<unsigned char>(src[i])) ||
              src[i] == '\'' || src[i] == '_' || src[i] == '.'))
        ++i;
      toks.push_back({VToken::number, src.substr(start, i - start), line});
      continue;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      size_t start = i;
      while (i < src.size() &&
             (std::isalnum(static_cast<unsigned char>(src[i])) ||
              src[i] == '_'))
        ++i;
      toks.push_back({VToken::ident, src.substr(start, i - start), line});
      continue;
    }
    static const std::string puncts = "()[]{}<>,;:=+-*/!&|^?~#.@%";
    if (puncts.find(c) != std::string::npos) {
      toks.push_back({VToken::punct, std::string(1, c), line});
      ++i;
      continue;
    }
    diags.push_back("line " + std::to_string(line) +
                    ": unexpected character '" + std::string(1, c) + "'");
    ++i;
  }
  return toks;
}

struct ModuleInfo {
  std::set<std::string> ports;
  std::set<std::string> decls;
  size_t body_begin = 0, body_end = 0;  // token range
};

}  // namespace

std::vector<std::string> check_verilog(const std::vector<std::string>& sources) {
  std::vector<std::string> diags;
  std::vector<VToken> toks;
  for (const auto& src : sources) {
    std::vector<VToken> t = tokenize(src, diags);
    toks.insert(toks.end(), t.begin(), t.end());
  }

  // balance checks
  {
    std::vector<std::pair<std::string, int>> stack;
    std::map<std::string, std::string> closer = {{"endmodule", "module"},
                                                 {"end", "begin"},
                                                 {"endcase", "case"},
                                                 {"endfunction", "function"},
                                                 {"endtask", "task"},
                                                 {"endgenerate", "generate"}};
    std::set<std::string> openers = {"module", "begin", "case",
                                     "function", "task", "generate"};
    int paren = 0, bracket = 0, brace = 0;
    for (const auto& t : toks) {
      if (t.kind == VToken::punct) {
        if (t.text == "(") ++paren;
        if (t.text == ")") --paren;
        if (t.text == "[") ++bracket;
        if (t.text == "]") --bracket;
        if (t.text == "{") ++brace;
        if (t.text == "}") --brace;
        if (paren < 0 || bracket < 0 || brace < 0) {
          diags.push_back("line " + std::to_string(t.line) +
                          ": unbalanced bracket '" + t.text + "'");
          return diags;
        }
      } else if (t.kind == VToken::ident) {
        if (openers.count(t.text)) {
          stack.push_back({t.text, t.line});
        } else if (closer.count(t.text)) {
          if (stack.empty() || stack.back().first != closer.at(t.text)) {
            diags.push_back("line " + std::to_string(t.line) + ": '" + t.text +
                            "' without matching '" + closer.at(t.text) + "'");
            return diags;
          }
          stack.pop_back();
        }
      }
    }
    if (!stack.empty())
      diags.push_back("line " + std::to_string(stack.back().second) +
                      ": unclosed '" + stack.back().first + "'");
    if (paren || bracket || brace) diags.push_back("unbalanced brackets at EOF");
    if (!diags.empty()) return diags;
  }

  // collect modules, their ports and declarations
  std::map<std::string, ModuleInfo> modules;
  std::vector<std::string> module_order;
  for (size_t i = 0; i < toks.size(); ++i) {
    if (toks[i].kind != VToken::ident || toks[i].text != "module") continue;
    if (i + 1 >= toks.size() || toks[i + 1].kind != VToken::ident) {
      diags.push_back("line " + std::to_string(toks[i].line) +
                      ": module without a name");
      return diags;
    }
    std::string name = toks[i + 1].text;
    ModuleInfo info;
    size_t j = i + 2;
    // header port list (identifiers at paren depth >= 1 before ';')
    int depth = 0;
    for (; j < toks.size(); ++j) {
      if (toks[j].kind == VToken::punct && toks[j].text == "(") ++depth;
      else if (toks[j].kind == VToken::punct && toks[j].text == ")") --depth;
      else if (toks[j].kind == VToken::punct && toks[j].text == ";" && depth == 0)
        break;
      else if (toks[j].kind == VToken::ident && depth >= 1 &&
               !keywords().count(toks[j].text))
        info.ports.insert(toks[j].text);
    }
    info.body_begin = j + 1;
    int nesting = 1;
    for (++j; j < toks.size(); ++j) {
      if (toks[j].kind != VToken::ident) continue;
      if (toks[j].text == "module") ++nesting;
      if (toks[j].text == "endmodule" && --nesting == 0) break;
    }
    info.body_end = j;
    for (const auto& p : info.ports) info.decls.insert(p);
    modules[name] = info;
    module_order.push_back(name);
    i = j;
  }

  // declaration pass per module
  static const std::set<std::string> decl_kw = {
      "input", "output", "inout",      "wire",      "reg",   "integer",
      "real",  "genvar", "localparam", "parameter", "function", "task"};
  for (const auto& name : module_order) {
    ModuleInfo& m = modules[name];
    for (size_t j = m.body_begin; j < m.body_end; ++j) {
      if (toks[j].kind != VToken::ident || !decl_kw.count(toks[j].text))
        continue;
      // take every plain identifier up to ';' or '=' at bracket depth 0 as a
      // declared name (covers "reg [7:0] a, b;", "function [3:0] f;",
      // "input real r;")
      int bdepth = 0;
      bool stop = false;
      for (size_t k = j + 1; k < m.body_end && !stop; ++k) {
        const VToken& t = toks[k];
        if (t.kind == VToken::punct) {
          if (t.text == "[") ++bdepth;
          else if (t.text == "]") --bdepth;
          else if (bdepth == 0 && (t.text == ";" || t.text == "=")) stop = true;
        } else if (t.kind == VToken::ident && bdepth == 0 &&
                   !keywords().count(t.text)) {
          m.decls.insert(t.text);
        }
      }
    }
    // instance names declare themselves: IDENT IDENT ( ... ) ;
    for (size_t j = m.body_begin; j + 1 < m.body_end; ++j) {
      if (toks[j].kind == VToken::ident && modules.count(toks[j].text) &&
          toks[j + 1].kind == VToken::ident)
        m.decls.insert(toks[j + 1].text);
    }
  }

  // usage pass
  for (const auto& name : module_order) {
    const ModuleInfo& m = modules.at(name);
    for (size_t j = m.body_begin; j < m.body_end; ++j) {
      const VToken& t = toks[j];
      if (t.kind != VToken::ident) continue;
      if (keywords().count(t.text)) continue;
      // module instantiation: validate .port references
      if (modules.count(t.text) && j + 1 < m.body_end &&
          toks[j + 1].kind == VToken::ident) {
        const ModuleInfo& target = modules.at(t.text);
        size_t k = j + 2;
        if (k < m.body_end && toks[k].kind == VToken::punct &&
            toks[k].text == "(") {
          int depth = 0;
          for (; k < m.body_end; ++k) {
            if (toks[k].kind == VToken::punct && toks[k].text == "(") ++depth;
            else if (toks[k].kind == VToken::punct && toks[k].text == ")") {
              if (--depth == 0) break;
            } else if (toks[k].kind == VToken::punct && toks[k].text == "." &&
                       depth == 1 && k + 1 < m.body_end &&
                       toks[k + 1].kind == VToken::ident) {
              if (!target.ports.count(toks[k + 1].text))
                diags.push_back("line " + std::to_string(toks[k + 1].line) +
                                ": module '" + t.text + "' has no port '" +
                                toks[k + 1].text + "'");
            } else if (toks[k].kind == VToken::ident &&
                       !keywords().count(toks[k].text) && depth >= 1) {
              // connected nets are regular uses
              bool is_port_ref = k > 0 && toks[k - 1].kind == VToken::punct &&
                                 toks[k - 1].text == ".";
              if (!is_port_ref && !m.decls.count(toks[k].text))
                diags.push_back("line " + std::to_string(toks[k].line) +
                                ": use of undeclared identifier '" +
                                toks[k].text + "'");
            }
          }
          j = k;
          continue;
        }
      }
      if (!m.decls.count(t.text))
        diags.push_back("line " + std::to_string(t.line) +
                        ": use of undeclared identifier '" + t.text + "'");
    }
  }
  if (modules.empty()) diags.push_back("no modules found");
  return diags;
}

}  // namespace thls
