// SPDX-License-Identifier: Apache-2.0
#include "tracehls/fpformat.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

namespace thls {

namespace {

void check_width(FPValue v, const FloatFormat& fmt) {
  if (fmt.total_width() < 64 && (v.bits >> fmt.total_width()) != 0)
    throw std::invalid_argument("fp value exceeds format width " +
                                std::to_string(fmt.total_width()));
}

FPValue make_special(FpClass cls, bool sign, const FloatFormat& fmt) {
  return fp_pack(cls, sign, 0, 0, fmt);
}

}  // namespace

double FloatFormat::min_normal() const { return std::ldexp(1.0, min_exp()); }

double FloatFormat::max_value() const {
  return std::ldexp(2.0 - std::ldexp(1.0, -wf), max_exp());
}

std::string FloatFormat::str() const {
  return std::to_string(we) + "," + std::to_string(wf);
}

FloatFormat FloatFormat::parse(const std::string& text) {
  int we = 0, wf = 0;
  char extra = 0;
  if (std::sscanf(text.c_str(), "%d,%d%c", &we, &wf, &extra) != 2)
    throw std::invalid_argument("precision must be given as \"we,wf\", got \"" +
                                text + "\"");
  FloatFormat fmt{we, wf};
  check_format(fmt);
  return fmt;
}

void check_format(const FloatFormat& fmt) {
  if (fmt.we < 2 || fmt.we > 10)
    throw std::invalid_argument("exponent width " + std::to_string(fmt.we) +
                                " outside supported range [2,10]");
  if (fmt.wf < 1 || fmt.wf > 23)
    throw std::invalid_argument("fraction width " + std::to_string(fmt.wf) +
                                " outside supported range [1,23]");
}

FpClass fp_class(FPValue v, const FloatFormat& fmt) {
  check_width(v, fmt);
  return static_cast<FpClass>((v.bits >> (fmt.we + fmt.wf + 1)) & 0x3);
}

bool fp_sign(FPValue v, const FloatFormat& fmt) {
  check_width(v, fmt);
  return ((v.bits >> (fmt.we + fmt.wf)) & 0x1) != 0;
}

uint64_t fp_exponent_field(FPValue v, const FloatFormat& fmt) {
  check_width(v, fmt);
  return (v.bits >> fmt.wf) & ((uint64_t{1} << fmt.we) - 1);
}

uint64_t fp_fraction_field(FPValue v, const FloatFormat& fmt) {
  check_width(v, fmt);
  return v.bits & ((uint64_t{1} << fmt.wf) - 1);
}

FPValue fp_pack(FpClass cls, bool sign, uint64_t exp_field, uint64_t fraction,
                const FloatFormat& fmt) {
  uint64_t bits = (uint64_t{static_cast<uint8_t>(cls)} << (fmt.we + fmt.wf + 1)) |
                  (uint64_t{sign ? 1u : 0u} << (fmt.we + fmt.wf)) |
                  ((exp_field & ((uint64_t{1} << fmt.we) - 1)) << fmt.wf) |
                  (fraction & ((uint64_t{1} << fmt.wf) - 1));
  return FPValue{bits};
}

FPValue fp_canon(FPValue v, const FloatFormat& fmt) {
  FpClass cls = fp_class(v, fmt);
  if (cls == FpClass::normal) return v;
  return make_special(cls, cls == FpClass::nan ? false : fp_sign(v, fmt), fmt);
}

FPValue encode(double x, const FloatFormat& fmt) {
  if (std::isnan(x)) return make_special(FpClass::nan, false, fmt);
  bool sign = std::signbit(x);
  if (std::isinf(x)) return make_special(FpClass::inf, sign, fmt);
  if (x == 0.0) return make_special(FpClass::zero, sign, fmt);

  double ax = std::fabs(x);
  if (ax < fmt.min_normal()) return make_special(FpClass::zero, sign, fmt);

  int e = std::ilogb(ax);
  // Significand scaled to [2^wf, 2^(wf+1)); exact power-of-two scaling, so
  // nearbyint performs the round-to-nearest-even on the true value.
  double scaled = std::ldexp(ax, fmt.wf - e);
  uint64_t sig = static_cast<uint64_t>(std::nearbyint(scaled));
  if (sig == (uint64_t{1} << (fmt.wf + 1))) {
    sig >>= 1;
    e += 1;
  }
  if (e > fmt.max_exp()) return make_special(FpClass::inf, sign, fmt);
  uint64_t fraction = sig & ((uint64_t{1} << fmt.wf) - 1);
  return fp_pack(FpClass::normal, sign, static_cast<uint64_t>(e + fmt.bias()),
                 fraction, fmt);
}

double decode(FPValue v, const FloatFormat& fmt) {
  switch (fp_class(v, fmt)) {
    case FpClass::zero:
      return fp_sign(v, fmt) ? -0.0 : 0.0;
    case FpClass::inf:
      return fp_sign(v, fmt) ? -HUGE_VAL : HUGE_VAL;
    case FpClass::nan:
      return std::numeric_limits<double>::quiet_NaN();
    case FpClass::normal:
      break;
  }
  int e = static_cast<int>(fp_exponent_field(v, fmt)) - fmt.bias();
  double sig = 1.0 + std::ldexp(static_cast<double>(fp_fraction_field(v, fmt)),
                                -fmt.wf);
  double mag = std::ldexp(sig, e);
  return fp_sign(v, fmt) ? -mag : mag;
}

namespace {

FPValue fp_max(FPValue a, FPValue b, const FloatFormat& fmt) {
  if (fp_class(a, fmt) == FpClass::nan || fp_class(b, fmt) == FpClass::nan)
    return make_special(FpClass::nan, false, fmt);
  double da = decode(a, fmt), db = decode(b, fmt);
  if (da > db) return fp_canon(a, fmt);
  if (db > da) return fp_canon(b, fmt);
  // Equal under f64 compare; the only sign-ambiguous case is +-0, where the
  // positive operand wins so that max commutes bitwise.
  if (fp_sign(a, fmt) != fp_sign(b, fmt))
    return fp_canon(fp_sign(a, fmt) ? b : a, fmt);
  return fp_canon(a, fmt);
}

FPValue fp_cmp_ugt(FPValue a, FPValue b, const FloatFormat& fmt) {
  bool unordered = fp_class(a, fmt) == FpClass::nan ||
                   fp_class(b, fmt) == FpClass::nan;
  bool truth = unordered || decode(a, fmt) > decode(b, fmt);
  return encode(truth ? 1.0 : 0.0, fmt);
}

FPValue fp_relu(FPValue a, const FloatFormat& fmt) {
  if (fp_class(a, fmt) == FpClass::nan)
    return make_special(FpClass::nan, false, fmt);
  if (!fp_sign(a, fmt) && fp_class(a, fmt) != FpClass::zero)
    return fp_canon(a, fmt);
  return make_special(FpClass::zero, false, fmt);
}

FPValue fp_neg(FPValue a, const FloatFormat& fmt) {
  if (fp_class(a, fmt) == FpClass::nan)
    return make_special(FpClass::nan, false, fmt);
  FPValue c = fp_canon(a, fmt);
  return fp_pack(fp_class(c, fmt), !fp_sign(c, fmt), fp_exponent_field(c, fmt),
                 fp_fraction_field(c, fmt), fmt);
}

}  // namespace

FPValue fp_binop(ArithKind kind, FPValue a, FPValue b, const FloatFormat& fmt) {
  check_width(a, fmt);
  check_width(b, fmt);
  switch (kind) {
    case ArithKind::addf:
      return encode(decode(a, fmt) + decode(b, fmt), fmt);
    case ArithKind::subf:
      return encode(decode(a, fmt) - decode(b, fmt), fmt);
    case ArithKind::mulf:
      return encode(decode(a, fmt) * decode(b, fmt), fmt);
    case ArithKind::divf:
      return encode(decode(a, fmt) / decode(b, fmt), fmt);
    case ArithKind::max:
      return fp_max(a, b, fmt);
    case ArithKind::cmpfugt:
      return fp_cmp_ugt(a, b, fmt);
    default:
      throw std::invalid_argument("fp_binop: not a binary kind: " +
                                  std::string(kind_name(kind)));
  }
}

FPValue fp_unop(ArithKind kind, FPValue a, const FloatFormat& fmt) {
  check_width(a, fmt);
  switch (kind) {
    case ArithKind::sqrtf:
      return encode(std::sqrt(decode(a, fmt)), fmt);
    case ArithKind::neg:
      return fp_neg(a, fmt);
    case ArithKind::relu:
      return fp_relu(a, fmt);
    default:
      throw std::invalid_argument("fp_unop: not a unary kind: " +
                                  std::string(kind_name(kind)));
  }
}

FPValue fp_fmac(FPValue a, FPValue b, FPValue c, const FloatFormat& fmt) {
  check_width(a, fmt);
  check_width(b, fmt);
  check_width(c, fmt);
  return encode(std::fma(decode(a, fmt), decode(b, fmt), decode(c, fmt)), fmt);
}

FPValue fp_select(FPValue sel, FPValue a, FPValue b, const FloatFormat& fmt) {
  check_width(sel, fmt);
  return fp_canon(fp_class(sel, fmt) != FpClass::zero ? a : b, fmt);
}

FPValue fp_apply(ArithKind kind, const FPValue* operands, int count,
                 const FloatFormat& fmt) {
  if (count != arity(kind))
    throw std::invalid_argument("fp_apply: wrong operand count for " +
                                std::string(kind_name(kind)));
  switch (arity(kind)) {
    case 1:
      return fp_unop(kind, operands[0], fmt);
    case 2:
      return fp_binop(kind, operands[0], operands[1], fmt);
    case 3:
      return kind == ArithKind::fmac
                 ? fp_fmac(operands[0], operands[1], operands[2], fmt)
                 : fp_select(operands[0], operands[1], operands[2], fmt);
  }
  throw std::logic_error("fp_apply: unreachable");
}

std::vector<double> exp_coefficients(int order) {
  if (order < 1 || order > 20)
    throw std::invalid_argument("exp order must be in [1,20], got " +
                                std::to_string(order));
  std::vector<double> coeffs(static_cast<size_t>(order) + 1);
  uint64_t factorial = 1;
  coeffs[0] = 1.0;
  for (int n = 1; n <= order; ++n) {
    factorial *= static_cast<uint64_t>(n);
    coeffs[static_cast<size_t>(n)] = 1.0 / static_cast<double>(factorial);
  }
  return coeffs;
}

}  // namespace thls
