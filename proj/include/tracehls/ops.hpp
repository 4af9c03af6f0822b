// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string_view>

namespace thls {

// Scalar operation vocabulary shared by the IR, the functional float models,
// the scheduler and the RTL backend.
enum class ArithKind : uint8_t {
  mulf,
  divf,
  addf,
  subf,
  sqrtf,
  cmpfugt,
  select,
  max,
  neg,
  relu,
  fmac,
};

inline constexpr int kNumArithKinds = 11;

inline constexpr std::array<ArithKind, kNumArithKinds> all_arith_kinds() {
  return {ArithKind::mulf,    ArithKind::divf, ArithKind::addf,
          ArithKind::subf,    ArithKind::sqrtf, ArithKind::cmpfugt,
          ArithKind::select,  ArithKind::max,  ArithKind::neg,
          ArithKind::relu,    ArithKind::fmac};
}

constexpr int arity(ArithKind k) {
  switch (k) {
    case ArithKind::fmac:
    case ArithKind::select:
      return 3;
    case ArithKind::mulf:
    case ArithKind::divf:
    case ArithKind::addf:
    case ArithKind::subf:
    case ArithKind::cmpfugt:
    case ArithKind::max:
      return 2;
    case ArithKind::sqrtf:
    case ArithKind::neg:
    case ArithKind::relu:
      return 1;
  }
  return 0;
}

constexpr std::string_view kind_name(ArithKind k) {
  switch (k) {
    case ArithKind::mulf: return "mulf";
    case ArithKind::divf: return "divf";
    case ArithKind::addf: return "addf";
    case ArithKind::subf: return "subf";
    case ArithKind::sqrtf: return "sqrtf";
    case ArithKind::cmpfugt: return "cmpfugt";
    case ArithKind::select: return "select";
    case ArithKind::max: return "max";
    case ArithKind::neg: return "neg";
    case ArithKind::relu: return "relu";
    case ArithKind::fmac: return "fmac";
  }
  return "?";
}

inline std::optional<ArithKind> kind_from_name(std::string_view name) {
  for (ArithKind k : all_arith_kinds())
    if (kind_name(k) == name) return k;
  return std::nullopt;
}

}  // namespace thls
