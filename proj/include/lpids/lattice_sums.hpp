#pragma once

// Geometric lattice sums  g(x) = sum_{j in Z} d^{-|x - j Delta|}  and their
// Cesaro averages over n = 0..N-1 when Delta = 2^m.

#include <lpids/error.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>

namespace lpids {

/// Decay envelope |psi(n)|^2 <= c d^{-|n - center|}.
struct DecayProfile {
  double c = 1.0;
  double d = 2.0;

  DecayProfile() = default;
  DecayProfile(double c_, double d_) : c(c_), d(d_) {
    require(c_ > 0.0 && std::isfinite(c_), "DecayProfile: c must be positive");
    require(d_ > 1.0 && std::isfinite(d_), "DecayProfile: d must exceed 1");
  }

  /// (1 + 1/d) / (1 - 1/d).
  [[nodiscard]] double geometric_factor() const {
    return (1.0 + 1.0 / d) / (1.0 - 1.0 / d);
  }
};

inline constexpr double min_decay_base = 1.0 + 1e-9;

namespace detail {

inline void check_lattice_args(double d, double delta) {
  require(d >= min_decay_base && std::isfinite(d),
          "lattice sum: d must exceed 1 + 1e-9");
  require(delta > 0.0 && std::isfinite(delta),
          "lattice sum: Delta must be positive");
}

/// Neumaier-compensated running sum.
struct CompensatedSum {
  double sum = 0.0;
  double carry = 0.0;
  void add(double x) {
    const double t = sum + x;
    carry += std::abs(sum) >= std::abs(x) ? (sum - t) + x : (x - t) + sum;
    sum = t;
  }
  [[nodiscard]] double value() const { return sum + carry; }
};

}  // namespace detail

/// dist(x, Delta Z) via a floored modulus.
inline double lattice_distance(double x, double delta) {
  double r = x - delta * std::floor(x / delta);
  if (r >= delta) r -= delta;
  if (r < 0.0) r = 0.0;
  return std::min(r, delta - r);
}

inline double lattice_sum_closed(double d, double delta, double x) {
  detail::check_lattice_args(d, delta);
  const double s = lattice_distance(x, delta);
  const double log_d = std::log(d);
  const double denom = -std::expm1(-delta * log_d);
  return (std::exp(-s * log_d) + std::exp(-(delta - s) * log_d)) / denom;
}

inline double lattice_sum_bruteforce(double d, double delta, double x,
                                     std::int64_t radius) {
  detail::check_lattice_args(d, delta);
  require(radius >= 1, "lattice_sum_bruteforce: truncation radius J >= 1");
  const double log_d = std::log(d);
  detail::CompensatedSum acc;
  for (std::int64_t j = -radius; j <= radius; ++j)
    acc.add(std::exp(-std::abs(x - static_cast<double>(j) * delta) * log_d));
  return acc.value();
}

/// Bound on the terms omitted by the radius-J truncation,
/// 2 d^{-(J Delta - |x|)} / (1 - d^{-Delta}).
inline double lattice_truncation_bound(double d, double delta, double x,
                                       std::int64_t radius) {
  detail::check_lattice_args(d, delta);
  const double log_d = std::log(d);
  return 2.0 *
         std::exp(-(static_cast<double>(radius) * delta - std::abs(x)) * log_d) /
         -std::expm1(-delta * log_d);
}

/// lim_N (1/N) sum_j sum_{n<N} d^{-|n - l - j 2^m|} = 2^{-m} (1+d^{-1})/(1-d^{-1}).
inline double average_limit_closed(double d, int m) {
  require(d >= min_decay_base && std::isfinite(d),
          "average_limit_closed: d must exceed 1 + 1e-9");
  require(m >= 1 && m <= 62, "average_limit_closed: m must lie in [1, 62]");
  return std::ldexp(1.0, -m) * (1.0 + 1.0 / d) / (1.0 - 1.0 / d);
}

/// (1/N) sum_{n=0}^{N-1} g(n - ell) with Delta = 2^m.
inline double average_bruteforce(double d, int m, std::int64_t ell,
                                 std::int64_t count) {
  require(count >= 1, "average_bruteforce: N must be >= 1");
  require(m >= 1 && m <= 52, "average_bruteforce: m must lie in [1, 52]");
  const double delta = std::ldexp(1.0, m);
  detail::CompensatedSum acc;
  for (std::int64_t n = 0; n < count; ++n)
    acc.add(lattice_sum_closed(d, delta, static_cast<double>(n - ell)));
  return acc.value() / static_cast<double>(count);
}

/// sum_{n=0}^{2^m - 1} g(n) with Delta = 2^m; equals (1+d^{-1})/(1-d^{-1}).
inline double period_sum(double d, int m) {
  require(m >= 1 && m <= 30, "period_sum: m must lie in [1, 30]");
  const double delta = std::ldexp(1.0, m);
  detail::CompensatedSum acc;
  for (std::int64_t n = 0; n < (std::int64_t{1} << m); ++n)
    acc.add(lattice_sum_closed(d, delta, static_cast<double>(n)));
  return acc.value();
}

}  // namespace lpids
