#pragma once

// Exact combinatorics of the dyadic distal sequence
//
//   lambda_n = sum_{j>=1} a_j(n) 2^{-j},   a_j = indicator of A_j,
//
// where A_j is the union over N of [N 2^j, N 2^j + 2^{j-1}) for even j and
// [N 2^j + 2^{j-1}, (N+1) 2^j) for odd j. With floored residues this reduces
// to a bit test: a_j(n) is bit (j-1) of n, complemented when j is even.
//
// Everything here is integer arithmetic. Truncated values lambda^{(m)}_n are
// integers over 2^m.

#include <lpids/error.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <compare>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

namespace lpids {

inline constexpr int max_depth = 62;

/// numerator / 2^exponent, exact.
struct Dyadic {
  std::int64_t numerator = 0;
  int exponent = 0;

  [[nodiscard]] double to_double() const {
    return std::ldexp(static_cast<double>(numerator), -exponent);
  }

  /// Lowest terms: odd numerator or zero exponent.
  [[nodiscard]] Dyadic reduced() const {
    Dyadic r = *this;
    if (r.numerator == 0) return {0, 0};
    while (r.exponent > 0 && (r.numerator & 1) == 0) {
      r.numerator /= 2;
      --r.exponent;
    }
    return r;
  }

  /// "p/q" in lowest terms, or "p" when the denominator is 1.
  [[nodiscard]] std::string to_string() const {
    const Dyadic r = reduced();
    if (r.exponent == 0) return std::to_string(r.numerator);
    return std::to_string(r.numerator) + "/" +
           std::to_string(std::int64_t{1} << r.exponent);
  }

  friend std::strong_ordering operator<=>(const Dyadic& a, const Dyadic& b) {
    const int e = std::max(a.exponent, b.exponent);
    // Both values fit below 2^62 numerators in practice; compare in 128 bits.
    const __int128 lhs = static_cast<__int128>(a.numerator) << (e - a.exponent);
    const __int128 rhs = static_cast<__int128>(b.numerator) << (e - b.exponent);
    return lhs <=> rhs;
  }
  friend bool operator==(const Dyadic& a, const Dyadic& b) {
    return (a <=> b) == std::strong_ordering::equal;
  }
};

/// Membership of n in A_j. Negative n uses floored residues.
inline int indicator(int j, std::int64_t n) {
  require(j >= 1, "indicator: level j must be >= 1");
  const int shift = std::min(j - 1, 63);
  const int bit = static_cast<int>((n >> shift) & 1);
  return (j % 2 == 0) ? 1 - bit : bit;
}

/// Mask with bit (i-1) set for every even i <= m: the levels whose indicator
/// is the complement of the raw bit.
constexpr std::uint64_t even_level_mask(int m) {
  std::uint64_t mask = 0;
  for (int i = 2; i <= m; i += 2) mask |= std::uint64_t{1} << (i - 1);
  return mask;
}

constexpr std::uint64_t reverse_bits(std::uint64_t x, int width) {
  std::uint64_t r = 0;
  for (int i = 0; i < width; ++i) {
    r = (r << 1) | (x & 1);
    x >>= 1;
  }
  return r;
}

/// (b_1, ..., b_m). The dyadic interval index is read most-significant-first,
/// index = sum_i b_i 2^{m-i}, so that lambda in I_{m,index} iff the first m
/// indicators of the sequence equal the pattern.
struct BitPattern {
  std::vector<std::uint8_t> bits;

  [[nodiscard]] int level() const { return static_cast<int>(bits.size()); }

  [[nodiscard]] std::uint64_t index() const {
    std::uint64_t j = 0;
    for (auto b : bits) j = (j << 1) | b;
    return j;
  }

  static BitPattern from_index(std::uint64_t index, int m) {
    require(m >= 1 && m <= max_depth, "BitPattern: level out of range");
    require(index < (std::uint64_t{1} << m), "BitPattern: index >= 2^m");
    BitPattern p;
    p.bits.resize(static_cast<std::size_t>(m));
    for (int i = 1; i <= m; ++i)
      p.bits[static_cast<std::size_t>(i - 1)] =
          static_cast<std::uint8_t>((index >> (m - i)) & 1);
    return p;
  }

  [[nodiscard]] std::string to_string() const {
    std::string s;
    for (auto b : bits) s.push_back(b ? '1' : '0');
    return s;
  }

  friend bool operator==(const BitPattern&, const BitPattern&) = default;
};

inline BitPattern residue_pattern(std::int64_t n, int m) {
  require(m >= 1 && m <= max_depth, "residue_pattern: m must lie in [1, 62]");
  BitPattern p;
  p.bits.resize(static_cast<std::size_t>(m));
  for (int j = 1; j <= m; ++j)
    p.bits[static_cast<std::size_t>(j - 1)] =
        static_cast<std::uint8_t>(indicator(j, n));
  return p;
}

/// I_{m,j} = [j 2^{-m}, (j+1) 2^{-m}).
struct DyadicInterval {
  int level = 1;
  std::uint64_t index = 0;

  DyadicInterval() = default;
  DyadicInterval(int m, std::uint64_t j) : level(m), index(j) {
    require(m >= 1 && m <= max_depth, "DyadicInterval: level out of range");
    require(j < (std::uint64_t{1} << m), "DyadicInterval: index must be < 2^m");
  }

  [[nodiscard]] Dyadic left() const {
    return {static_cast<std::int64_t>(index), level};
  }
  [[nodiscard]] Dyadic right() const {
    return {static_cast<std::int64_t>(index + 1), level};
  }
  [[nodiscard]] bool contains(const Dyadic& x) const {
    return left() <= x && x < right();
  }
  [[nodiscard]] DyadicInterval child(int bit) const {
    return {level + 1, 2 * index + static_cast<std::uint64_t>(bit)};
  }
};

/// Depth-m truncation of lambda. Values have period exactly 2^m.
class DistalSequence {
 public:
  explicit DistalSequence(int depth) : depth_(depth) {
    require(depth >= 1 && depth <= max_depth,
            "DistalSequence: depth must lie in [1, 62]");
  }

  [[nodiscard]] int depth() const { return depth_; }
  [[nodiscard]] std::uint64_t period() const {
    return std::uint64_t{1} << depth_;
  }

  /// 2^m lambda^{(m)}_n; its binary digits, most significant first, are
  /// a_1(n), ..., a_m(n).
  [[nodiscard]] std::uint64_t numerator(std::int64_t n) const {
    const std::uint64_t low = static_cast<std::uint64_t>(n) & (period() - 1);
    return reverse_bits(low ^ even_level_mask(depth_), depth_);
  }

  [[nodiscard]] Dyadic value(std::int64_t n) const {
    return {static_cast<std::int64_t>(numerator(n)), depth_};
  }

  [[nodiscard]] double to_double(std::int64_t n) const {
    return value(n).to_double();
  }

 private:
  int depth_;
};

inline Dyadic lambda_value(const DistalSequence& seq, std::int64_t n) {
  return seq.value(n);
}

/// Unique l in [0, 2^m) with residue_pattern(l, m) equal to the pattern of j,
/// built bit by bit: a_i(l) = b_i forces bit (i-1) of l.
inline std::uint64_t landing_index(int m, std::uint64_t j) {
  require(m >= 1 && m <= max_depth, "landing_index: m must lie in [1, 62]");
  require(j < (std::uint64_t{1} << m), "landing_index: j must lie in [0, 2^m)");
  return reverse_bits(j, m) ^ even_level_mask(m);
}

/// Same as landing_index, by scanning all 2^m residues.
inline std::uint64_t landing_index_scan(int m, std::uint64_t j) {
  require(m >= 1 && m <= 30, "landing_index_scan: m must lie in [1, 30]");
  require(j < (std::uint64_t{1} << m),
          "landing_index_scan: j must lie in [0, 2^m)");
  const DistalSequence seq(m);
  for (std::uint64_t l = 0; l < seq.period(); ++l)
    if (seq.numerator(static_cast<std::int64_t>(l)) == j) return l;
  throw NumericalError("landing_index_scan: no residue matches");
}

/// Whether the untruncated lambda_k lies in I. Decided from the first I.level
/// indicators; the indicator sequence never ends in an infinite run of ones,
/// so lambda_k is never equal to a right endpoint from below.
inline bool interval_membership(const DistalSequence& seq, std::int64_t k,
                                const DyadicInterval& interval) {
  require(interval.level <= seq.depth(),
          "interval_membership: interval level exceeds sequence depth");
  return (seq.numerator(k) >> (seq.depth() - interval.level)) == interval.index;
}

/// Rigorous lower bound on inf_n |lambda_n - lambda_{n-k}|.
struct DistalityCertificate {
  std::int64_t k = 0;
  int depth = 0;
  Dyadic min_gap;   // min over one period of the truncated differences
  Dyadic slack;     // 2^{-depth+1}
  double margin = 0.0;  // max(0, min_gap - slack)
  /// False when the slack alone reaches 1/(16|k|), i.e. the certificate
  /// cannot confirm the bound at this depth.
  bool meaningful = true;

  [[nodiscard]] double threshold() const {
    return 1.0 / (16.0 * static_cast<double>(k < 0 ? -k : k));
  }
  [[nodiscard]] bool passes() const { return margin >= threshold(); }
};

inline int default_certificate_depth(std::int64_t k) {
  const auto ak = static_cast<std::uint64_t>(k < 0 ? -k : k);
  const int log2_ceil = ak <= 1 ? 0 : std::bit_width(ak - 1);
  return std::max(20, log2_ceil + 10);
}

/// Holds one period of lambda^{(depth)} so that many shifts can be certified
/// against the same table.
class DistalityCertifier {
 public:
  static constexpr int max_table_depth = 26;

  explicit DistalityCertifier(int depth) : depth_(depth) {
    require(depth >= 1 && depth <= max_table_depth,
            "distality: depth must lie in [1, 26]");
    const DistalSequence seq(depth);
    table_.resize(seq.period());
    for (std::uint64_t n = 0; n < seq.period(); ++n)
      table_[n] = static_cast<std::uint32_t>(
          seq.numerator(static_cast<std::int64_t>(n)));
  }

  [[nodiscard]] int depth() const { return depth_; }

  [[nodiscard]] DistalityCertificate certify(std::int64_t k) const {
    require(k != 0, "distality_margin: k must be nonzero");
    const std::size_t period = table_.size();
    const auto ak = static_cast<std::uint64_t>(k < 0 ? -k : k);
    // |lambda_n - lambda_{n-k}| over a period equals the same scan with the
    // shift reduced mod the period and sign folded by reindexing n -> n + k.
    const std::size_t shift = static_cast<std::size_t>(ak % period);
    std::uint32_t best = std::numeric_limits<std::uint32_t>::max();
    if (shift == 0) {
      best = 0;
    } else {
      const std::uint32_t* t = table_.data();
      for (std::size_t n = shift; n < period; ++n) {
        const std::uint32_t a = t[n], b = t[n - shift];
        best = std::min(best, a > b ? a - b : b - a);
      }
      for (std::size_t n = 0; n < shift; ++n) {
        const std::uint32_t a = t[n], b = t[n + period - shift];
        best = std::min(best, a > b ? a - b : b - a);
      }
    }
    DistalityCertificate cert;
    cert.k = k;
    cert.depth = depth_;
    cert.min_gap = Dyadic{static_cast<std::int64_t>(best), depth_};
    cert.slack = Dyadic{2, depth_};
    cert.margin =
        std::max(0.0, cert.min_gap.to_double() - cert.slack.to_double());
    cert.meaningful = cert.slack.to_double() < cert.threshold();
    return cert;
  }

 private:
  int depth_;
  std::vector<std::uint32_t> table_;
};

inline DistalityCertificate distality_margin(std::int64_t k, int depth) {
  return DistalityCertifier(depth).certify(k);
}

inline DistalityCertificate distality_margin(std::int64_t k) {
  require(k != 0, "distality_margin: k must be nonzero");
  return distality_margin(k, default_certificate_depth(k));
}

/// Omega(r) = prefactor * r^alpha.
struct ApproximationProfile {
  double alpha = 1.0;
  double prefactor = 1.0;

  ApproximationProfile() = default;
  ApproximationProfile(double a, double p = 1.0) : alpha(a), prefactor(p) {
    require(a >= 0.0 && std::isfinite(a), "ApproximationProfile: alpha >= 0");
    require(p > 0.0 && std::isfinite(p), "ApproximationProfile: prefactor > 0");
  }

  /// The distal sequence above: ||(lambda - S^k lambda)^{-1}|| <= 16 |k|.
  static ApproximationProfile dyadic_example() { return {1.0, 16.0}; }
};

/// Phi(t) = t^{-4} sup_{r>=0} Omega(r) e^{-tr}. The supremum sits at
/// r = alpha / t.
inline double log_phi(const ApproximationProfile& profile, double t) {
  require(t > 0.0 && std::isfinite(t), "phi: t must be positive");
  const double a = profile.alpha;
  double log_sup = std::log(profile.prefactor);
  if (a > 0.0) log_sup += a * (std::log(a / t) - 1.0);
  return log_sup - 4.0 * std::log(t);
}

inline double phi(const ApproximationProfile& profile, double t) {
  return std::exp(log_phi(profile, t));
}

struct PsiBound {
  double value = 0.0;
  double log_value = 0.0;
  int terms = 0;
  /// Bound on |log(full product) - log_value| from the omitted factors.
  double log_truncation_bound = 0.0;
};

/// Upper bound on Psi(t) = inf over admissible sequences of
/// prod_j Phi(t_j)^{2^{-j-1}}, evaluated at t_j = t 2^{-j-1}, whose sum is t.
inline PsiBound psi_upper(const ApproximationProfile& profile, double t) {
  require(t > 0.0 && std::isfinite(t), "psi_upper: t must be positive");
  PsiBound out;
  double weight_sum = 0.0;
  double log_sum = 0.0;
  int j = 0;
  while (weight_sum <= 1.0 - 1e-12) {
    const double w = std::ldexp(1.0, -j - 1);
    const double tj = std::ldexp(t, -j - 1);
    const double term = w * log_phi(profile, tj);
    if (!std::isfinite(term) || !std::isfinite(log_sum + term))
      throw NumericalError("psi_upper: partial product is not finite");
    log_sum += term;
    weight_sum += w;
    ++j;
  }
  const int last = j - 1;
  // log Phi(t_j) = A0 + B (j+1) with B = (4 + alpha) ln 2.
  const double a = profile.alpha;
  double a0 = std::log(profile.prefactor) - (4.0 + a) * std::log(t);
  if (a > 0.0) a0 += a * (std::log(a) - 1.0);
  const double b = (4.0 + a) * std::log(2.0);
  out.log_truncation_bound =
      std::abs(a0) * std::ldexp(1.0, -(last + 1)) +
      b * static_cast<double>(last + 3) * std::ldexp(1.0, -(last + 1));
  out.terms = j;
  out.log_value = log_sum;
  out.value = std::exp(log_sum);
  if (!std::isfinite(out.value))
    throw NumericalError("psi_upper: bound overflows double precision");
  return out;
}

}  // namespace lpids
