#pragma once

#include <boost/multiprecision/gmp.hpp>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace gwlab {

using Rational = boost::multiprecision::number<boost::multiprecision::backends::gmp_rational,
                                                boost::multiprecision::et_off>;
using BigInt = boost::multiprecision::number<boost::multiprecision::backends::gmp_int,
                                             boost::multiprecision::et_off>;

struct NumberError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Per-scalar policy for the dual exact/float arithmetic modes. Tolerances are
// the ones stated per operation in the library docs; exact mode compares with
// zero tolerance except for criticality, where truncated renormalized laws
// (e.g. a capped geometric) are deliberately classified critical within 1e-10.
template <class R>
struct arith;

template <>
struct arith<double> {
  static constexpr bool exact = false;
  static double sum_tolerance() { return 1e-12; }
  static double critical_tolerance() { return 1e-8; }
  static double positive_threshold() { return 1e-14; }
  static constexpr const char* name = "float";
};

template <>
struct arith<Rational> {
  static constexpr bool exact = true;
  static Rational sum_tolerance() { return Rational(0); }
  static Rational critical_tolerance() { return Rational(1, 10000000000LL); }
  static Rational positive_threshold() { return Rational(0); }
  static constexpr const char* name = "exact";
};

inline double to_double(double x) { return x; }
inline double to_double(const Rational& r) { return r.convert_to<double>(); }

template <class R>
R abs_value(const R& x) {
  return x < R(0) ? R(-x) : x;
}

template <class R>
R pow_nonneg(R base, unsigned e) {
  R out(1);
  while (e) {
    if (e & 1u) out *= base;
    base *= base;
    e >>= 1u;
  }
  return out;
}

template <class R>
R binomial(unsigned n, unsigned k) {
  if (k > n) return R(0);
  if (k > n - k) k = n - k;
  R out(1);
  for (unsigned i = 0; i < k; ++i) {
    out *= R(static_cast<int>(n - i));
    out /= R(static_cast<int>(i + 1));
  }
  return out;
}

namespace detail {

inline Rational decimal_to_rational(std::string_view s) {
  bool neg = false;
  std::size_t i = 0;
  if (i < s.size() && (s[i] == '+' || s[i] == '-')) {
    neg = s[i] == '-';
    ++i;
  }
  BigInt mantissa(0);
  long frac_digits = 0;
  long exponent = 0;
  bool seen_digit = false, seen_dot = false;
  for (; i < s.size(); ++i) {
    char c = s[i];
    if (c >= '0' && c <= '9') {
      mantissa = mantissa * 10 + (c - '0');
      if (seen_dot) ++frac_digits;
      seen_digit = true;
    } else if (c == '.' && !seen_dot) {
      seen_dot = true;
    } else if ((c == 'e' || c == 'E') && seen_digit) {
      exponent = std::stol(std::string(s.substr(i + 1)));
      break;
    } else {
      throw NumberError("malformed number: '" + std::string(s) + "'");
    }
  }
  if (!seen_digit) throw NumberError("malformed number: '" + std::string(s) + "'");
  Rational r(mantissa);
  long shift = exponent - frac_digits;
  Rational ten(10);
  if (shift > 0)
    r *= pow_nonneg(ten, static_cast<unsigned>(shift));
  else if (shift < 0)
    r /= pow_nonneg(ten, static_cast<unsigned>(-shift));
  return neg ? Rational(-r) : r;
}

}  // namespace detail

// Accepts "3/4", "2", "0.25", "2.5e-3".
template <class R>
R parse_number(std::string_view s);

template <>
inline Rational parse_number<Rational>(std::string_view s) {
  auto slash = s.find('/');
  if (slash != std::string_view::npos) {
    Rational num = detail::decimal_to_rational(s.substr(0, slash));
    Rational den = detail::decimal_to_rational(s.substr(slash + 1));
    if (den == 0) throw NumberError("zero denominator in '" + std::string(s) + "'");
    return num / den;
  }
  return detail::decimal_to_rational(s);
}

template <>
inline double parse_number<double>(std::string_view s) {
  auto slash = s.find('/');
  try {
    if (slash != std::string_view::npos)
      return std::stod(std::string(s.substr(0, slash))) /
             std::stod(std::string(s.substr(slash + 1)));
    return std::stod(std::string(s));
  } catch (const std::exception&) {
    throw NumberError("malformed number: '" + std::string(s) + "'");
  }
}

inline std::string format_number(const Rational& r) {
  if (denominator(r) == 1) return numerator(r).str();
  return numerator(r).str() + "/" + denominator(r).str();
}

inline std::string format_number(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

// Exact square root of a non-negative rational; false when irrational.
inline bool rational_sqrt(const Rational& x, Rational& out) {
  if (x < 0) return false;
  BigInt n = numerator(x), d = denominator(x);
  BigInt rn = sqrt(n), rd = sqrt(d);
  if (rn * rn != n || rd * rd != d) return false;
  out = Rational(rn, rd);
  return true;
}

}  // namespace gwlab
