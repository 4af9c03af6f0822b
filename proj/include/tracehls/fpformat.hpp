// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tracehls/ops.hpp"

namespace thls {

// Value class held in the two exception bits.
enum class FpClass : uint8_t { zero = 0, normal = 1, inf = 2, nan = 3 };

// Custom floating-point format: wf fraction bits, we exponent bits, one sign
// bit and a 2-bit exception field. No subnormals; every exponent field value
// is a valid normal exponent (bias 2^(we-1)-1).
struct FloatFormat {
  int we = 5;
  int wf = 11;

  constexpr int total_width() const { return we + wf + 3; }
  constexpr int bias() const { return (1 << (we - 1)) - 1; }
  constexpr int min_exp() const { return -bias(); }
  constexpr int max_exp() const { return ((1 << we) - 1) - bias(); }
  double min_normal() const;  // 2^min_exp
  double max_value() const;   // (2 - 2^-wf) * 2^max_exp

  bool operator==(const FloatFormat&) const = default;

  std::string str() const;  // "we,wf"
  // Parses "we,wf" (as given to --precision). Throws std::invalid_argument.
  static FloatFormat parse(const std::string& text);
};

// Supported range: we in [2,10] so every value decodes exactly to a finite
// f64, wf in [1,23] so f64 arithmetic is exact ahead of the final rounding.
void check_format(const FloatFormat& fmt);

// Bit container, layout (msb..lsb): exception(2) | sign(1) | exponent(we) |
// fraction(wf). Exponent/fraction are canonicalized to zero whenever the
// exception field is not "normal".
struct FPValue {
  uint64_t bits = 0;
  bool operator==(const FPValue&) const = default;
};

FpClass fp_class(FPValue v, const FloatFormat& fmt);
bool fp_sign(FPValue v, const FloatFormat& fmt);
uint64_t fp_exponent_field(FPValue v, const FloatFormat& fmt);
uint64_t fp_fraction_field(FPValue v, const FloatFormat& fmt);
FPValue fp_pack(FpClass cls, bool sign, uint64_t exp_field, uint64_t fraction,
                const FloatFormat& fmt);
// Zeroes the exponent/fraction payload of non-normal values.
FPValue fp_canon(FPValue v, const FloatFormat& fmt);

// Round-to-nearest-even into wf fraction bits. Overflow encodes infinity,
// magnitudes below the minimum normal encode (signed) zero, NaN stays NaN.
FPValue encode(double x, const FloatFormat& fmt);
double decode(FPValue v, const FloatFormat& fmt);

// Functional models for the operator set. Results are computed on the f64
// image of the operands and re-encoded, which is exact ahead of the final
// rounding for every supported format; fmac applies a single final rounding.
FPValue fp_binop(ArithKind kind, FPValue a, FPValue b, const FloatFormat& fmt);
FPValue fp_unop(ArithKind kind, FPValue a, const FloatFormat& fmt);
FPValue fp_fmac(FPValue a, FPValue b, FPValue c, const FloatFormat& fmt);
FPValue fp_select(FPValue sel, FPValue a, FPValue b, const FloatFormat& fmt);

// Dispatch helper used by the evaluators.
FPValue fp_apply(ArithKind kind, const FPValue* operands, int count,
                 const FloatFormat& fmt);

// Horner coefficients [1, 1, 1/2, ..., 1/order!] for the truncated Taylor
// expansion of exp. Throws for order < 1 or order > 20.
std::vector<double> exp_coefficients(int order);

}  // namespace thls
