#pragma once

#include <boost/multiprecision/cpp_int.hpp>

#include <cstdint>
#include <string>
#include <string_view>

#include "rdsline/errors.hpp"

namespace rdsline {

using BigInt = boost::multiprecision::cpp_int;
using Rational = boost::multiprecision::cpp_rational;

/// Parses "p/q", "p" or a plain decimal such as "-0.25" into an exact rational.
namespace detail {

// BigInt's string constructor treats a leading 0 as octal and 0x as hex.
inline BigInt parse_decimal(std::string_view s) {
  bool negative = false;
  if (!s.empty() && (s[0] == '-' || s[0] == '+')) {
    negative = s[0] == '-';
    s.remove_prefix(1);
  }
  if (s.empty()) throw std::invalid_argument("empty integer");
  BigInt v = 0;
  for (char c : s) {
    if (c < '0' || c > '9') throw std::invalid_argument("bad digit");
    v = v * 10 + (c - '0');
  }
  return negative ? BigInt(-v) : v;
}

}  // namespace detail

inline Rational parse_rational(std::string_view text) {
  std::string s(text);
  auto fail = [&]() -> Rational {
    throw ConfigError("not a rational number: \"" + s + "\"");
  };
  if (s.empty()) return fail();
  try {
    if (auto slash = s.find('/'); slash != std::string::npos) {
      BigInt num = detail::parse_decimal(s.substr(0, slash));
      BigInt den = detail::parse_decimal(s.substr(slash + 1));
      if (den == 0) return fail();
      return Rational(num, den);
    }
    if (auto dot = s.find('.'); dot != std::string::npos) {
      std::string digits = s.substr(0, dot) + s.substr(dot + 1);
      if (digits.empty() || digits == "-" || digits == "+") return fail();
      BigInt den = boost::multiprecision::pow(BigInt(10), static_cast<unsigned>(s.size() - dot - 1));
      return Rational(detail::parse_decimal(digits), den);
    }
    return Rational(detail::parse_decimal(s));
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception&) {
    return fail();
  }
}

/// Canonical "p/q" form (or "p" for integers), the inverse of parse_rational.
inline std::string to_string(const Rational& r) {
  const BigInt& num = boost::multiprecision::numerator(r);
  const BigInt& den = boost::multiprecision::denominator(r);
  if (den == 1) return num.str();
  return num.str() + "/" + den.str();
}

inline double to_double(const Rational& r) { return r.convert_to<double>(); }

/// Exact rational value of a finite double.
inline Rational from_double(double x) { return Rational(x); }

/// floor(r * 2^64) clamped to [0, 2^64 - 1]; used for exact sampling thresholds.
inline std::uint64_t scaled_threshold(const Rational& r) {
  if (r <= 0) return 0;
  BigInt two64 = BigInt(1) << 64;
  BigInt scaled = (boost::multiprecision::numerator(r) * two64) / boost::multiprecision::denominator(r);
  if (scaled >= two64) return ~std::uint64_t{0};
  return scaled.convert_to<std::uint64_t>();
}

}  // namespace rdsline
