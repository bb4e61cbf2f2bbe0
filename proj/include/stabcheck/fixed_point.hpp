#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>

#include "stabcheck/error.hpp"

namespace stabcheck {

/// Signed two's-complement fixed-point format Qi.f with i = total - fraction
/// integer bits (sign included). Arithmetic saturates and raises a sticky
/// overflow flag; every rounding step is round-to-nearest, ties to even.
struct FixedPointFormat {
  int total_bits = 16;
  int fraction_bits = 8;

  static FixedPointFormat q(int integer_bits, int fraction_bits) {
    return make(integer_bits + fraction_bits, fraction_bits);
  }
  static FixedPointFormat make(int total, int fraction) {
    FixedPointFormat f{total, fraction};
    f.validate();
    return f;
  }
  /// Default format for a given total width: Q4.4 at 8 bits, Q8.8 at 16 bits,
  /// Q16.16 at 32 bits.
  static FixedPointFormat for_width(int total) { return make(total, total / 2); }

  void validate() const {
    if (total_bits < 2 || total_bits > 32)
      throw Error(ErrorKind::InvalidArgument, "fixed-point width must be within [2, 32] bits, got " +
                                                  std::to_string(total_bits));
    if (fraction_bits < 0 || fraction_bits >= total_bits)
      throw Error(ErrorKind::InvalidArgument, "fraction bits must be within [0, total), got " +
                                                  std::to_string(fraction_bits));
  }

  int integer_bits() const noexcept { return total_bits - fraction_bits; }
  std::int64_t raw_min() const noexcept { return -(std::int64_t{1} << (total_bits - 1)); }
  std::int64_t raw_max() const noexcept { return (std::int64_t{1} << (total_bits - 1)) - 1; }
  std::int64_t raw_count() const noexcept { return std::int64_t{1} << total_bits; }
  double lsb() const noexcept { return std::ldexp(1.0, -fraction_bits); }
  double min_value() const noexcept { return to_real(raw_min()); }
  double max_value() const noexcept { return to_real(raw_max()); }

  double to_real(std::int64_t raw) const noexcept {
    return std::ldexp(static_cast<double>(raw), -fraction_bits);
  }

  std::string name() const {
    return "Q" + std::to_string(integer_bits()) + "." + std::to_string(fraction_bits);
  }

  friend bool operator==(const FixedPointFormat&, const FixedPointFormat&) = default;
};

namespace detail {

/// floor(num / den) for den > 0.
inline std::int64_t floor_div(std::int64_t num, std::int64_t den) {
  std::int64_t q = num / den;
  if ((num % den != 0) && (num < 0)) --q;
  return q;
}

/// num / den rounded to nearest, ties to even; den > 0.
inline std::int64_t round_div_half_even(std::int64_t num, std::int64_t den) {
  const std::int64_t q = floor_div(num, den);
  const std::int64_t twice_rem = 2 * (num - q * den);
  if (twice_rem > den) return q + 1;
  if (twice_rem < den) return q;
  return (q % 2 == 0) ? q : q + 1;
}

inline double round_half_even(double v) {
  const double fl = std::floor(v);
  const double diff = v - fl;
  if (diff > 0.5) return fl + 1.0;
  if (diff < 0.5) return fl;
  return std::fmod(fl, 2.0) == 0.0 ? fl : fl + 1.0;
}

}  // namespace detail

/// Arithmetic context for one simulation step under a fixed-point format.
/// Operands and results are doubles holding exact multiples of the format's
/// LSB, so the evaluator is shared with the real-valued semantics.
class FixedArith {
 public:
  explicit FixedArith(FixedPointFormat fmt) : fmt_(fmt) { fmt_.validate(); }

  const FixedPointFormat& format() const noexcept { return fmt_; }
  bool overflow() const noexcept { return overflow_; }
  void clear_overflow() noexcept { overflow_ = false; }

  std::int64_t to_raw(double v) {
    if (std::isnan(v)) throw Error(ErrorKind::Numeric, "NaN cannot be quantized");
    const double scaled = std::ldexp(v, fmt_.fraction_bits);
    if (scaled > static_cast<double>(fmt_.raw_max())) return saturate_hi();
    if (scaled < static_cast<double>(fmt_.raw_min())) return saturate_lo();
    return static_cast<std::int64_t>(detail::round_half_even(scaled));
  }
  double from_raw(std::int64_t raw) const noexcept { return fmt_.to_real(raw); }

  double quantize(double v) { return from_raw(to_raw(v)); }

  double add(double a, double b) { return from_raw(saturate(to_raw(a) + to_raw(b))); }
  double sub(double a, double b) { return from_raw(saturate(to_raw(a) - to_raw(b))); }
  double neg(double a) { return from_raw(saturate(-to_raw(a))); }

  double mul(double a, double b) {
    const std::int64_t p = to_raw(a) * to_raw(b);
    return from_raw(saturate(detail::round_div_half_even(p, std::int64_t{1} << fmt_.fraction_bits)));
  }

  double div(double a, double b) {
    std::int64_t den = to_raw(b);
    if (den == 0) throw Error(ErrorKind::Numeric, "division by zero");
    std::int64_t num = to_raw(a) * (std::int64_t{1} << fmt_.fraction_bits);
    if (den < 0) {
      den = -den;
      num = -num;
    }
    return from_raw(saturate(detail::round_div_half_even(num, den)));
  }

 private:
  std::int64_t saturate(std::int64_t raw) {
    if (raw > fmt_.raw_max()) return saturate_hi();
    if (raw < fmt_.raw_min()) return saturate_lo();
    return raw;
  }
  std::int64_t saturate_hi() {
    overflow_ = true;
    return fmt_.raw_max();
  }
  std::int64_t saturate_lo() {
    overflow_ = true;
    return fmt_.raw_min();
  }

  FixedPointFormat fmt_;
  bool overflow_ = false;
};

/// Exact real-number semantics (IEEE double). Overflow never trips.
class RealArith {
 public:
  bool overflow() const noexcept { return false; }
  void clear_overflow() noexcept {}
  double quantize(double v) const noexcept { return v; }
  double add(double a, double b) const noexcept { return a + b; }
  double sub(double a, double b) const noexcept { return a - b; }
  double neg(double a) const noexcept { return -a; }
  double mul(double a, double b) const noexcept { return a * b; }
  double div(double a, double b) const {
    if (b == 0.0) throw Error(ErrorKind::Numeric, "division by zero");
    return a / b;
  }
};

}  // namespace stabcheck
