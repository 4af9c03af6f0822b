// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <vector>

#include "doctest.h"
#include "tracehls/fpformat.hpp"

using namespace thls;

namespace {
const FloatFormat f54{5, 4};
const FloatFormat f511{5, 11};
const FloatFormat f53{5, 3};
}  // namespace

TEST_CASE("format widths") {
  CHECK(f54.total_width() == 12);
  CHECK(f511.total_width() == 19);
  CHECK(f53.total_width() == 11);
  CHECK(f54.bias() == 15);
  CHECK(f54.max_exp() == 16);
  CHECK(f54.min_exp() == -15);
  CHECK_THROWS(check_format(FloatFormat{1, 4}));
  CHECK_THROWS(check_format(FloatFormat{5, 24}));
  CHECK(FloatFormat::parse("5,4") == f54);
  CHECK_THROWS(FloatFormat::parse("five"));
}

TEST_CASE("encode 1.0 at (5,4)") {
  FPValue v = encode(1.0, f54);
  CHECK(fp_class(v, f54) == FpClass::normal);
  CHECK_FALSE(fp_sign(v, f54));
  CHECK(fp_exponent_field(v, f54) == 15);  // biased
  CHECK(fp_fraction_field(v, f54) == 0);
  CHECK(decode(v, f54) == 1.0);
}

TEST_CASE("encode zero keeps the sign, payload zero") {
  CHECK(encode(0.0, f54).bits == 0);
  FPValue nz = encode(-0.0, f54);
  CHECK(fp_class(nz, f54) == FpClass::zero);
  CHECK(fp_sign(nz, f54));
  CHECK(fp_exponent_field(nz, f54) == 0);
  CHECK(fp_fraction_field(nz, f54) == 0);
}

TEST_CASE("overflow to infinity at (5,4)") {
  // max representable = (2 - 2^-4) * 2^16 = 126976
  double max = (2.0 - std::ldexp(1.0, -4)) * std::ldexp(1.0, 16);
  CHECK(max == 126976.0);
  CHECK(f54.max_value() == max);
  FPValue vmax = encode(max, f54);
  CHECK(fp_class(vmax, f54) == FpClass::normal);
  CHECK(decode(vmax, f54) == max);
  CHECK(fp_class(encode(std::ldexp(1.0, 17), f54), f54) == FpClass::inf);
  // 129024 is exactly halfway between max and 2^17: ties-to-even rounds up
  CHECK(fp_class(encode(129024.0, f54), f54) == FpClass::inf);
  CHECK(decode(encode(129023.0, f54), f54) == max);
}

TEST_CASE("underflow below the minimum normal flushes to zero") {
  double mn = std::ldexp(1.0, -15);
  CHECK(f54.min_normal() == mn);
  CHECK(decode(encode(mn, f54), f54) == mn);
  CHECK(fp_class(encode(mn * 0.999, f54), f54) == FpClass::zero);
  CHECK(fp_class(encode(std::ldexp(1.0, -16), f54), f54) == FpClass::zero);
  FPValue neg = encode(-mn * 0.5, f54);
  CHECK(fp_class(neg, f54) == FpClass::zero);
  CHECK(fp_sign(neg, f54));
}

TEST_CASE("NaN and infinity round trips") {
  CHECK(fp_class(encode(std::nan(""), f54), f54) == FpClass::nan);
  CHECK(std::isnan(decode(encode(std::nan(""), f54), f54)));
  CHECK(decode(encode(HUGE_VAL, f54), f54) == HUGE_VAL);
  CHECK(decode(encode(-HUGE_VAL, f54), f54) == -HUGE_VAL);
}

TEST_CASE("exhaustive (5,4) canonicalization and idempotence") {
  for (uint64_t bits = 0; bits < 4096; ++bits) {
    FPValue v{bits};
    FPValue canon = encode(decode(v, f54), f54);
    CHECK(canon == fp_canon(v, f54));
    CHECK(encode(decode(canon, f54), f54) == canon);
    if (fp_class(v, f54) == FpClass::normal) CHECK(canon == v);
  }
}

TEST_CASE("monotonicity of encode over the representable range") {
  // all positive normals at (5,4), in increasing order
  double prev = 0.0;
  for (int e = f54.min_exp(); e <= f54.max_exp(); ++e)
    for (int frac = 0; frac < 16; ++frac) {
      double x = std::ldexp(1.0 + frac / 16.0, e);
      CHECK(decode(encode(x, f54), f54) == x);
      CHECK(x > prev);
      prev = x;
      // a value halfway to the next representable must round to one of them
      double mid = x * (1.0 + 1.0 / 64.0);
      double r = decode(encode(mid, f54), f54);
      CHECK(r >= x);
    }
}

TEST_CASE("basic arithmetic") {
  FPValue sum = fp_binop(ArithKind::addf, encode(1.0, f54), encode(-1.0, f54), f54);
  CHECK(fp_class(sum, f54) == FpClass::zero);
  CHECK_FALSE(fp_sign(sum, f54));  // exact cancellation gives +0

  CHECK(fp_fmac(encode(1.5, f54), encode(2.0, f54), encode(0.25, f54), f54) ==
        encode(3.25, f54));
  CHECK(fp_unop(ArithKind::relu, encode(-3.0, f54), f54) == encode(0.0, f54));
  CHECK(fp_unop(ArithKind::relu, encode(2.0, f54), f54) == encode(2.0, f54));
  CHECK(fp_class(fp_unop(ArithKind::relu, encode(std::nan(""), f54), f54),
                 f54) == FpClass::nan);
  CHECK(fp_unop(ArithKind::neg, encode(1.5, f54), f54) == encode(-1.5, f54));
  CHECK(fp_binop(ArithKind::divf, encode(1.0, f54), encode(0.0, f54), f54) ==
        encode(HUGE_VAL, f54));
  CHECK(fp_class(fp_binop(ArithKind::divf, encode(0.0, f54), encode(0.0, f54),
                          f54),
                 f54) == FpClass::nan);
  CHECK(fp_unop(ArithKind::sqrtf, encode(2.25, f54), f54) == encode(1.5, f54));
  CHECK(fp_class(fp_unop(ArithKind::sqrtf, encode(-1.0, f54), f54), f54) ==
        FpClass::nan);
}

TEST_CASE("max semantics") {
  CHECK(fp_binop(ArithKind::max, encode(0.0, f54), encode(-0.0, f54), f54) ==
        encode(0.0, f54));
  CHECK(fp_binop(ArithKind::max, encode(-0.0, f54), encode(0.0, f54), f54) ==
        encode(0.0, f54));
  CHECK(fp_binop(ArithKind::max, encode(-HUGE_VAL, f54), encode(-3.0, f54),
                 f54) == encode(-3.0, f54));
  CHECK(fp_class(fp_binop(ArithKind::max, encode(std::nan(""), f54),
                          encode(1.0, f54), f54),
                 f54) == FpClass::nan);
}

TEST_CASE("cmp and select") {
  FPValue t = fp_binop(ArithKind::cmpfugt, encode(2.0, f54), encode(1.0, f54), f54);
  CHECK(t == encode(1.0, f54));
  FPValue f = fp_binop(ArithKind::cmpfugt, encode(1.0, f54), encode(2.0, f54), f54);
  CHECK(fp_class(f, f54) == FpClass::zero);
  // unordered-greater-than is true when either side is NaN
  CHECK(fp_binop(ArithKind::cmpfugt, encode(std::nan(""), f54),
                 encode(5.0, f54), f54) == encode(1.0, f54));
  CHECK(fp_select(t, encode(3.0, f54), encode(4.0, f54), f54) ==
        encode(3.0, f54));
  CHECK(fp_select(f, encode(3.0, f54), encode(4.0, f54), f54) ==
        encode(4.0, f54));
}

TEST_CASE("exhaustive (5,3) commutativity and fmac identity") {
  const uint64_t n = uint64_t{1} << f53.total_width();
  for (uint64_t a = 0; a < n; ++a) {
    FPValue va{a};
    bool a_nan = fp_class(va, f53) == FpClass::nan;
    for (uint64_t b = 0; b < n; ++b) {
      FPValue vb{b};
      if (a_nan || fp_class(vb, f53) == FpClass::nan) continue;
      FPValue ab = fp_binop(ArithKind::addf, va, vb, f53);
      FPValue ba = fp_binop(ArithKind::addf, vb, va, f53);
      REQUIRE(ab == ba);
      FPValue m_ab = fp_binop(ArithKind::mulf, va, vb, f53);
      FPValue m_ba = fp_binop(ArithKind::mulf, vb, va, f53);
      REQUIRE(m_ab == m_ba);
      FPValue mx_ab = fp_binop(ArithKind::max, va, vb, f53);
      FPValue mx_ba = fp_binop(ArithKind::max, vb, va, f53);
      REQUIRE(mx_ab == mx_ba);
      // fmac(a, b, 0) == mulf(a, b) bitwise, except that the IEEE addition
      // of the +0 addend turns an exactly-zero negative product into +0
      // (underflowed -0 products keep their nonzero f64 value through the
      // fma and still flush to -0)
      FPValue fm = fp_fmac(va, vb, encode(0.0, f53), f53);
      bool exact_neg_zero =
          (fp_class(va, f53) == FpClass::zero ||
           fp_class(vb, f53) == FpClass::zero) &&
          fp_class(m_ab, f53) == FpClass::zero && fp_sign(m_ab, f53);
      if (exact_neg_zero)
        REQUIRE(fm == encode(0.0, f53));
      else
        REQUIRE(fm == m_ab);
      // with a -0 addend the identity is exact for every pair
      REQUIRE(fp_fmac(va, vb, encode(-0.0, f53), f53) == m_ab);
    }
  }
}

TEST_CASE("exp coefficients") {
  CHECK(exp_coefficients(1) == std::vector<double>{1.0, 1.0});
  std::vector<double> c4 = exp_coefficients(4);
  CHECK(c4.size() == 5);
  CHECK(c4[2] == 0.5);
  CHECK(c4[4] == 1.0 / 24.0);
  // Horner evaluation at x=1 approximates the exact sum 65/24; the f64
  // association lands one ulp below the correctly rounded rational
  double horner = c4[4];
  for (int n = 3; n >= 0; --n) horner = c4[static_cast<size_t>(n)] + 1.0 * horner;
  CHECK(horner == 2.708333333333333);
  double exact = 65.0 / 24.0;
  CHECK(exact == 2.7083333333333335);
  CHECK(std::abs(horner - exact) <= std::ldexp(1.0, -51));
  CHECK(exp_coefficients(6)[0] == 1.0);  // value at x=0 is the constant term
  CHECK_THROWS(exp_coefficients(0));
  CHECK_THROWS(exp_coefficients(21));
}

TEST_CASE("width mismatch is rejected") {
  FPValue wide{uint64_t{1} << 12};
  CHECK_THROWS(fp_binop(ArithKind::addf, wide, encode(1.0, f54), f54));
}
