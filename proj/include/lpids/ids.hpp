#pragma once

// Empirical integrated density of states k(E) = #{E_i <= E} / N, interval
// masses, the spectral-projection trace, dyadic moduli of continuity and
// Hoelder-exponent probes.

#include <lpids/dyadic.hpp>
#include <lpids/error.hpp>
#include <lpids/lattice_sums.hpp>
#include <lpids/spectral.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace lpids {

/// Half-open energy interval [lo, hi).
struct EnergyInterval {
  double lo = 0.0;
  double hi = 0.0;

  [[nodiscard]] double length() const { return hi - lo; }
  [[nodiscard]] bool contains(double e) const { return lo <= e && e < hi; }
};

/// eps^{-1} I_{m,j} in energy units. j may be negative or >= 2^m so that
/// eigenvalues pushed outside [0, eps^{-1}) by the hopping are still covered.
inline EnergyInterval rescaled_dyadic(int level, std::int64_t j, double coupling) {
  require(level >= 0 && level <= 52, "rescaled_dyadic: level must lie in [0, 52]");
  require(coupling > 0.0, "rescaled_dyadic: coupling must be positive");
  const double w = std::ldexp(1.0, -level);
  return {static_cast<double>(j) * w / coupling,
          static_cast<double>(j + 1) * w / coupling};
}

class IDSFunction {
 public:
  IDSFunction() = default;
  explicit IDSFunction(std::vector<double> eigenvalues)
      : values_(std::move(eigenvalues)) {
    require(!values_.empty(), "IDSFunction: empty spectrum");
    require(std::is_sorted(values_.begin(), values_.end()),
            "IDSFunction: eigenvalues must be sorted");
  }

  [[nodiscard]] std::size_t size() const { return values_.size(); }
  [[nodiscard]] std::span<const double> eigenvalues() const { return values_; }

  /// #{E_i <= e} / N.
  [[nodiscard]] double operator()(double e) const {
    return static_cast<double>(count_at_most(e)) /
           static_cast<double>(values_.size());
  }

  [[nodiscard]] std::size_t count_at_most(double e) const {
    return static_cast<std::size_t>(
        std::upper_bound(values_.begin(), values_.end(), e) - values_.begin());
  }
  [[nodiscard]] std::size_t count_below(double e) const {
    return static_cast<std::size_t>(
        std::lower_bound(values_.begin(), values_.end(), e) - values_.begin());
  }

  /// #{E_i in [a, b)}.
  [[nodiscard]] std::size_t count_in(const EnergyInterval& iv) const {
    return iv.hi <= iv.lo ? 0 : count_below(iv.hi) - count_below(iv.lo);
  }

 private:
  std::vector<double> values_;
};

inline IDSFunction ids_from_spectrum(const SpectralData& data) {
  return IDSFunction(data.eigenvalues);
}

/// k(b-) - k(a-) for I = [a, b).
inline double dos_interval_mass(const IDSFunction& ids, const EnergyInterval& iv) {
  require(!(iv.hi < iv.lo), "dos_interval_mass: interval has b < a");
  return static_cast<double>(ids.count_in(iv)) / static_cast<double>(ids.size());
}

/// (1/N) sum_n sum_{E_k in I} |psi_k(n)|^2.
inline double projection_trace_oracle(const SpectralData& data,
                                      const EnergyInterval& iv) {
  if (!data.has_vectors())
    throw NumericalError("projection_trace_oracle: eigenvector set is incomplete");
  const std::size_t n = data.size();
  std::vector<double> diag(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    if (!iv.contains(data.eigenvalues[k])) continue;
    const auto& v = data.eigenvectors[k];
    for (std::size_t i = 0; i < v.values.size(); ++i)
      diag[v.first + i] += v.values[i] * v.values[i];
  }
  detail::CompensatedSum acc;
  for (double x : diag) acc.add(x);
  return acc.value() / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// Moduli of continuity

struct LevelRange {
  int first = 1;
  int last = 1;
};

/// "a:b" or a single level L (meaning 1:L).
inline LevelRange parse_levels(const std::string& text) {
  LevelRange r;
  try {
    const auto colon = text.find(':');
    std::size_t used = 0;
    if (colon == std::string::npos) {
      r.last = std::stoi(text, &used);
      require(used == text.size(), "bad level range '" + text + "'");
    } else {
      const std::string a = text.substr(0, colon), b = text.substr(colon + 1);
      r.first = std::stoi(a, &used);
      require(used == a.size(), "bad level range '" + text + "'");
      r.last = std::stoi(b, &used);
      require(used == b.size(), "bad level range '" + text + "'");
    }
  } catch (const std::logic_error& e) {
    if (dynamic_cast<const PreconditionError*>(&e)) throw;
    throw PreconditionError("bad level range '" + text + "'");
  }
  require(r.first >= 1 && r.first <= r.last, "level range must satisfy 1 <= a <= b");
  return r;
}

struct LevelModulus {
  int level = 0;            // m'
  double max_ratio = 0.0;   // max_j mass / |eps^{-1} I_{m',j}|
  double min_ratio = 0.0;   // over intervals with [0,1) lambda-range, j = 0..2^m'-1
  std::int64_t argmax_j = 0;
  double max_mass = 0.0;
  double total_mass = 0.0;
  double length = 0.0;      // eps^{-1} 2^{-m'}

  /// max_ratio / eps: ratio with lengths in lambda units.
  double lambda_ratio = 0.0;
};

struct ModulusReport {
  std::vector<LevelModulus> levels;
  double empirical_lipschitz = 0.0;
  double theoretical_bound = 0.0;
  double c = 0.0;
  double d = 0.0;
  double epsilon = 0.0;
  std::size_t size = 0;
  double level_stability = 0.0;  // max/min of max_ratio over levels
  double holder_exponent = 0.0;
  bool pass = false;

  [[nodiscard]] std::string verdict() const { return pass ? "PASS" : "FAIL"; }
};

/// Per-level scan of dyadic masses. The bound is c eps (1+1/d)/(1-1/d) with
/// the supplied envelope; PASS iff the empirical constant is within 10%.
inline ModulusReport modulus_of_continuity(const IDSFunction& ids,
                                           const PotentialSpec& spec,
                                           LevelRange levels,
                                           const DecayProfile& envelope) {
  require(levels.first >= 1 && levels.first <= levels.last,
          "modulus_of_continuity: empty level range");
  require(levels.last <= spec.depth,
          "modulus_of_continuity: levels must not exceed the depth m");
  require(levels.last <= 52, "modulus_of_continuity: level above 52");
  const double eps = spec.coupling;
  const auto ev = ids.eigenvalues();
  const double n = static_cast<double>(ids.size());

  ModulusReport report;
  report.c = envelope.c;
  report.d = envelope.d;
  report.epsilon = eps;
  report.size = ids.size();
  report.theoretical_bound = envelope.c * eps * envelope.geometric_factor();

  for (int lv = levels.first; lv <= levels.last; ++lv) {
    LevelModulus row;
    row.level = lv;
    row.length = std::ldexp(1.0, -lv) / eps;
    const double scale = std::ldexp(1.0, lv) * eps;
    const auto j_lo = static_cast<std::int64_t>(std::floor(ev.front() * scale)) - 1;
    const auto j_hi = static_cast<std::int64_t>(std::floor(ev.back() * scale)) + 1;
    const std::int64_t top = std::int64_t{1} << lv;
    row.min_ratio = std::numeric_limits<double>::infinity();
    std::size_t max_count = 0;
    bool have_max = false;
    for (std::int64_t j = j_lo; j <= j_hi; ++j) {
      const std::size_t cnt = ids.count_in(rescaled_dyadic(lv, j, eps));
      row.total_mass += static_cast<double>(cnt) / n;
      if (!have_max || cnt > max_count) {
        max_count = cnt;
        row.argmax_j = j;
        have_max = true;
      }
      if (j >= 0 && j < top)
        row.min_ratio = std::min(row.min_ratio,
                                 static_cast<double>(cnt) / n / row.length);
    }
    if (!std::isfinite(row.min_ratio)) row.min_ratio = 0.0;
    row.max_mass = static_cast<double>(max_count) / n;
    row.max_ratio = row.max_mass / row.length;
    row.lambda_ratio = row.max_ratio / eps;
    report.empirical_lipschitz = std::max(report.empirical_lipschitz, row.max_ratio);
    report.levels.push_back(row);
  }

  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (const auto& row : report.levels) {
    lo = std::min(lo, row.max_ratio);
    hi = std::max(hi, row.max_ratio);
  }
  report.level_stability = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();

  if (report.levels.size() >= 3) {
    std::vector<std::pair<double, double>> pts;
    for (const auto& row : report.levels)
      if (row.max_mass > 0.0) pts.emplace_back(row.length, row.max_mass);
    if (pts.size() >= 3) {
      double sx = 0, sy = 0, sxx = 0, sxy = 0;
      for (auto [x, y] : pts) {
        const double lx = std::log(x), ly = std::log(y);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
      }
      const double k = static_cast<double>(pts.size());
      report.holder_exponent = (k * sxy - sx * sy) / (k * sxx - sx * sx);
    }
  }
  report.pass = report.empirical_lipschitz <= 1.1 * report.theoretical_bound;
  return report;
}

// ---------------------------------------------------------------------------
// Hoelder probe

struct HolderFit {
  double exponent = 0.0;
  double intercept = 0.0;
  std::vector<double> lengths;
  std::vector<double> masses;  // max mass at each scale
};

/// Least-squares slope of log(mass) against log(length), one point per
/// scale: the interval of largest mass in that scale's family. `mass` maps
/// an EnergyInterval to its measure.
template <class MassFn>
HolderFit holder_probe(MassFn&& mass,
                       std::span<const std::vector<EnergyInterval>> scales) {
  require(scales.size() >= 3, "holder_probe: at least 3 scales are required");
  HolderFit fit;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& family : scales) {
    require(!family.empty(), "holder_probe: empty interval family");
    double best = -1.0, len = 0.0;
    for (const auto& iv : family) {
      require(iv.length() > 0.0, "holder_probe: intervals must have positive length");
      const double m = mass(iv);
      if (m > best) {
        best = m;
        len = iv.length();
      }
    }
    if (!(best > 0.0))
      throw NumericalError("holder_probe: a scale has no interval of positive mass");
    fit.lengths.push_back(len);
    fit.masses.push_back(best);
    const double lx = std::log(len), ly = std::log(best);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const double k = static_cast<double>(scales.size());
  const double denom = k * sxx - sx * sx;
  if (!(std::abs(denom) > 0.0))
    throw NumericalError("holder_probe: all scales have the same length");
  fit.exponent = (k * sxy - sx * sy) / denom;
  fit.intercept = (sy - fit.exponent * sx) / k;
  return fit;
}

inline HolderFit holder_probe(const IDSFunction& ids,
                              std::span<const std::vector<EnergyInterval>> scales) {
  return holder_probe(
      [&ids](const EnergyInterval& iv) { return dos_interval_mass(ids, iv); },
      scales);
}

/// Families of dyadic intervals eps^{-1} I_{m',j} touching `energy`, one
/// family per level.
inline std::vector<std::vector<EnergyInterval>> dyadic_families_near(
    double energy, double coupling, LevelRange levels) {
  std::vector<std::vector<EnergyInterval>> out;
  for (int lv = levels.first; lv <= levels.last; ++lv) {
    const double scale = std::ldexp(1.0, lv) * coupling;
    const auto j = static_cast<std::int64_t>(std::floor(energy * scale));
    std::vector<EnergyInterval> family{rescaled_dyadic(lv, j - 1, coupling),
                                       rescaled_dyadic(lv, j, coupling)};
    out.push_back(std::move(family));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Landing verification

struct LandingReport {
  DyadicInterval interval;
  std::uint64_t landing_index = 0;
  std::size_t expected = 0;            // sites = landing mod 2^level in [0, N)
  std::size_t observed = 0;            // centers with eigenvalue in eps^{-1} I
  std::size_t symmetric_difference = 0;
  std::size_t endpoint_crossings = 0;  // lambda^{(m)} on an endpoint, small defect
  std::size_t boundary_sites = 0;      // within `margin` of either end
  std::size_t interior_violations = 0;
  std::vector<std::size_t> violating_sites;

  [[nodiscard]] bool pass() const { return interior_violations == 0; }
};

/// Compares {centers k : E_k in eps^{-1} I} with {l + 2^level Z} on [0, N).
/// Mismatches are attributed first to truncation (lambda^{(m)}_k sits exactly
/// on an endpoint of I and its eigenvalue moved by at most `defect_bound`),
/// then to the boundary layer, and otherwise counted as interior violations.
inline LandingReport landing_verification(const SpectralData& data,
                                          const PotentialSpec& spec,
                                          const DyadicInterval& interval,
                                          std::size_t margin = 8,
                                          double defect_bound = -1.0) {
  require(data.centers.size() == data.size() && !data.centers.empty(),
          "landing_verification: eigenvectors have not been computed");
  require(interval.level <= spec.depth,
          "landing_verification: interval level exceeds the depth m");
  if (defect_bound < 0.0) defect_bound = 64.0 * spec.coupling * spec.coupling;
  const std::size_t n = data.size();
  LandingReport r;
  r.interval = interval;
  r.landing_index = landing_index(interval.level, interval.index);

  const EnergyInterval iv{interval.left().to_double() / spec.coupling,
                          interval.right().to_double() / spec.coupling};
  std::vector<std::uint8_t> observed(n, 0), expected(n, 0);
  for (std::size_t k = 0; k < n; ++k)
    if (iv.contains(data.eigenvalues[k]) && data.centers[k] < n)
      observed[data.centers[k]] = 1;
  const std::uint64_t mask = (std::uint64_t{1} << interval.level) - 1;
  for (std::size_t s = 0; s < n; ++s)
    expected[s] = ((s + static_cast<std::uint64_t>(spec.offset)) & mask) ==
                  r.landing_index;

  std::vector<double> site_energy(n, std::numeric_limits<double>::quiet_NaN());
  for (std::size_t k = 0; k < n; ++k)
    if (data.centers[k] < n) site_energy[data.centers[k]] = data.eigenvalues[k];
  for (std::size_t s = 0; s < n; ++s) {
    r.observed += observed[s];
    r.expected += expected[s];
    if (observed[s] == expected[s]) continue;
    ++r.symmetric_difference;
    const Dyadic lam = spec.lambda(static_cast<std::int64_t>(s));
    const double defect = std::abs(spec.coupling * site_energy[s] - lam.to_double());
    if ((lam == interval.left() || lam == interval.right()) && defect <= defect_bound) {
      ++r.endpoint_crossings;
    } else if (s < margin || s + margin >= n) {
      ++r.boundary_sites;
    } else {
      ++r.interior_violations;
      r.violating_sites.push_back(s);
    }
  }
  return r;
}

}  // namespace lpids
