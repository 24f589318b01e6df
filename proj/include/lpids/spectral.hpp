#pragma once

// Finite approximants H = Delta + eps^{-1} V of the limit-periodic operator
//
//   [H psi](n) = psi(n+1) + psi(n-1) + eps^{-1} lambda^{(m)}_{n+offset} psi(n)
//
// on N sites with Dirichlet or periodic ends, together with a Sturm-count
// bisection eigensolver, inverse iteration for localized eigenvectors, decay
// envelopes and eigenvalue-to-site matching.

#include <lpids/dyadic.hpp>
#include <lpids/error.hpp>
#include <lpids/lattice_sums.hpp>
#include <lpids/parallel.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

namespace lpids {

enum class Boundary { dirichlet, periodic };

inline std::string_view to_string(Boundary b) {
  return b == Boundary::dirichlet ? "dirichlet" : "periodic";
}

inline Boundary parse_boundary(std::string_view text) {
  if (text == "dirichlet") return Boundary::dirichlet;
  if (text == "periodic") return Boundary::periodic;
  throw PreconditionError("boundary must be 'dirichlet' or 'periodic'");
}

/// Which parts of H are assembled. `diagonal_only` drops the hopping (the
/// eps -> 0 caricature); `free` drops the potential.
enum class OperatorVariant { schroedinger, diagonal_only, free };

inline std::string_view to_string(OperatorVariant v) {
  switch (v) {
    case OperatorVariant::schroedinger: return "schroedinger";
    case OperatorVariant::diagonal_only: return "diagonal-only";
    case OperatorVariant::free: return "free";
  }
  return "schroedinger";
}

/// eps_valid(m) = 2^{-(m+6)/2}, so that 64 eps^2 <= 2^{-m}.
inline double valid_coupling(int depth) {
  return std::exp2(-(static_cast<double>(depth) + 6.0) / 2.0);
}

struct PotentialSpec {
  int depth = 1;
  double coupling = 1.0;
  std::int64_t offset = 0;
  bool override_validity = false;

  PotentialSpec() = default;
  PotentialSpec(int m, double eps, std::int64_t off = 0, bool override = false)
      : depth(m), coupling(eps), offset(off), override_validity(override) {
    require(m >= 1 && m <= max_depth, "PotentialSpec: depth must lie in [1, 62]");
    require(eps > 0.0 && std::isfinite(eps),
            "PotentialSpec: coupling epsilon must be positive");
  }

  [[nodiscard]] bool within_validity() const {
    return coupling <= valid_coupling(depth) * (1.0 + 1e-12);
  }

  /// lambda^{(m)} at lattice site `site` (offset applied).
  [[nodiscard]] Dyadic lambda(std::int64_t site) const {
    return DistalSequence(depth).value(site + offset);
  }
};

struct PeriodicOperator {
  std::vector<double> diagonal;
  std::vector<double> hopping;  // entry (n, n+1), n = 0..N-2
  double corner = 0.0;          // entry (0, N-1); nonzero only for periodic N >= 3
  Boundary boundary = Boundary::dirichlet;

  [[nodiscard]] std::size_t size() const { return diagonal.size(); }

  [[nodiscard]] std::pair<double, double> gershgorin() const {
    const std::size_t n = size();
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (std::size_t i = 0; i < n; ++i) {
      double r = 0.0;
      if (i > 0) r += std::abs(hopping[i - 1]);
      if (i + 1 < n) r += std::abs(hopping[i]);
      if (i == 0 || i + 1 == n) r += std::abs(corner);
      lo = std::min(lo, diagonal[i] - r);
      hi = std::max(hi, diagonal[i] + r);
    }
    return {lo, hi};
  }

  /// Norm estimate used to scale tolerances; at least 1.
  [[nodiscard]] double scale() const {
    const auto [lo, hi] = gershgorin();
    return std::max({1.0, std::abs(lo), std::abs(hi)});
  }

  [[nodiscard]] bool decoupled() const {
    return corner == 0.0 &&
           std::all_of(hopping.begin(), hopping.end(),
                       [](double b) { return b == 0.0; });
  }

  void apply(std::span<const double> x, std::span<double> y) const {
    const std::size_t n = size();
    for (std::size_t i = 0; i < n; ++i) {
      double v = diagonal[i] * x[i];
      if (i > 0) v += hopping[i - 1] * x[i - 1];
      if (i + 1 < n) v += hopping[i] * x[i + 1];
      y[i] = v;
    }
    if (corner != 0.0) {
      y[0] += corner * x[n - 1];
      y[n - 1] += corner * x[0];
    }
  }

  [[nodiscard]] Eigen::MatrixXd dense() const {
    const auto n = static_cast<Eigen::Index>(size());
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      h(i, i) = diagonal[static_cast<std::size_t>(i)];
      if (i + 1 < n) {
        h(i, i + 1) = h(i + 1, i) = hopping[static_cast<std::size_t>(i)];
      }
    }
    if (corner != 0.0) h(0, n - 1) = h(n - 1, 0) = corner;
    return h;
  }
};

inline PeriodicOperator build_operator(
    const PotentialSpec& spec, std::size_t size, Boundary boundary,
    OperatorVariant variant = OperatorVariant::schroedinger) {
  require(size >= 2, "build_operator: N must be >= 2");
  if (variant != OperatorVariant::free && !spec.within_validity()) {
    warn("coupling epsilon = " + std::to_string(spec.coupling) +
         " exceeds eps_valid(" + std::to_string(spec.depth) +
         ") = " + std::to_string(valid_coupling(spec.depth)) +
         (spec.override_validity ? " (override accepted)"
                                 : "; eigenvalue landing is not guaranteed"));
  }
  PeriodicOperator op;
  op.boundary = boundary;
  op.diagonal.resize(size);
  const DistalSequence seq(spec.depth);
  for (std::size_t n = 0; n < size; ++n) {
    op.diagonal[n] =
        variant == OperatorVariant::free
            ? 0.0
            : seq.value(static_cast<std::int64_t>(n) + spec.offset).to_double() /
                  spec.coupling;
  }
  const double t = variant == OperatorVariant::diagonal_only ? 0.0 : 1.0;
  op.hopping.assign(size - 1, t);
  if (boundary == Boundary::periodic) {
    if (size == 2)
      op.hopping[0] = 2.0 * t;  // both bonds join the same pair
    else
      op.corner = t;
  }
  return op;
}

// ---------------------------------------------------------------------------
// Sturm counts

namespace detail {

inline void check_finite(const PeriodicOperator& op) {
  auto finite = [](double v) { return std::isfinite(v); };
  if (!std::all_of(op.diagonal.begin(), op.diagonal.end(), finite) ||
      !std::all_of(op.hopping.begin(), op.hopping.end(), finite) ||
      !std::isfinite(op.corner))
    throw NumericalError("operator has non-finite entries");
}

inline double pivot_floor(const PeriodicOperator& op) {
  double bmax = 1.0;
  for (double b : op.hopping) bmax = std::max(bmax, b * b);
  return std::numeric_limits<double>::min() * bmax;
}

}  // namespace detail

/// Number of eigenvalues strictly below `energy` for the tridiagonal part
/// (negative pivots of the LDL^T factorization of T - energy).
inline std::size_t sturm_count_tridiagonal(const PeriodicOperator& op,
                                           double energy) {
  const std::size_t n = op.size();
  const double pivmin = detail::pivot_floor(op);
  std::size_t count = 0;
  double q = op.diagonal[0] - energy;
  if (std::abs(q) < pivmin) q = -pivmin;
  count += q < 0.0;
  for (std::size_t i = 1; i < n; ++i) {
    const double b = op.hopping[i - 1];
    q = (op.diagonal[i] - energy) - (b * b) / q;
    if (std::abs(q) < pivmin) q = -pivmin;
    count += q < 0.0;
  }
  return count;
}

/// Inertia count for the cyclic (corner) case: eliminate rows 0..N-2 with the
/// last row/column as a border and count negative pivots (Sylvester).
inline std::size_t sturm_count_cyclic(const PeriodicOperator& op,
                                      double energy) {
  const std::size_t n = op.size();
  if (n < 3 || op.corner == 0.0) return sturm_count_tridiagonal(op, energy);
  const double pivmin =
      std::max(detail::pivot_floor(op),
               std::numeric_limits<double>::epsilon() * op.scale());
  std::size_t count = 0;
  double p = op.diagonal[0] - energy;
  double w = op.corner;  // current entry in the border column
  double border = 0.0;   // accumulated w_i^2 / p_i
  for (std::size_t i = 0; i + 1 < n; ++i) {
    if (std::abs(p) < pivmin) p = -pivmin;
    count += p < 0.0;
    border += w * w / p;
    if (i + 2 == n) break;
    const double b = op.hopping[i];
    const double l = b / p;
    const double p_next = (op.diagonal[i + 1] - energy) - b * l;
    double w_next = -l * w;
    if (i + 2 == n - 1) w_next += op.hopping[n - 2];
    p = p_next;
    w = w_next;
  }
  double last = (op.diagonal[n - 1] - energy) - border;
  if (std::abs(last) < pivmin) last = -pivmin;
  count += last < 0.0;
  return count;
}

inline std::size_t sturm_count(const PeriodicOperator& op, double energy) {
  return op.corner != 0.0 ? sturm_count_cyclic(op, energy)
                          : sturm_count_tridiagonal(op, energy);
}

// ---------------------------------------------------------------------------
// Spectral data

/// A vector with its exact-zero tails removed: entries outside
/// [first, first + values.size()) are zero.
struct LocalizedVector {
  std::size_t size = 0;
  std::size_t first = 0;
  std::vector<double> values;

  static LocalizedVector from_dense(std::span<const double> x) {
    LocalizedVector v;
    v.size = x.size();
    std::size_t lo = 0, hi = x.size();
    while (lo < hi && x[lo] == 0.0) ++lo;
    while (hi > lo && x[hi - 1] == 0.0) --hi;
    v.first = lo;
    v.values.assign(x.begin() + static_cast<std::ptrdiff_t>(lo),
                    x.begin() + static_cast<std::ptrdiff_t>(hi));
    return v;
  }

  [[nodiscard]] double operator[](std::size_t n) const {
    return (n >= first && n < first + values.size()) ? values[n - first] : 0.0;
  }

  [[nodiscard]] std::vector<double> dense() const {
    std::vector<double> x(size, 0.0);
    std::copy(values.begin(), values.end(),
              x.begin() + static_cast<std::ptrdiff_t>(first));
    return x;
  }

  [[nodiscard]] double norm() const {
    double s = 0.0;
    for (double v : values) s += v * v;
    return std::sqrt(s);
  }
};

struct SpectralData {
  std::vector<double> eigenvalues;
  std::vector<LocalizedVector> eigenvectors;  // empty unless computed
  std::vector<std::size_t> centers;           // empty unless computed
  std::string method;

  [[nodiscard]] std::size_t size() const { return eigenvalues.size(); }
  [[nodiscard]] bool has_vectors() const {
    return !eigenvectors.empty() && eigenvectors.size() == eigenvalues.size();
  }
};

inline double default_tolerance(const PeriodicOperator& op) {
  return 4.0 * std::numeric_limits<double>::epsilon() * op.scale();
}

/// All eigenvalues by Sturm-count bisection over a canonical subdivision of
/// the Gershgorin interval. Each thread walks the same subdivision tree for
/// its own index range, so results do not depend on the thread count.
inline SpectralData eigenvalues_sturm(const PeriodicOperator& op, double tol,
                                      Parallelism par = {}) {
  require(tol > 0.0, "eigenvalues_sturm: tolerance must be positive");
  require(op.size() >= 1, "eigenvalues_sturm: empty operator");
  detail::check_finite(op);
  SpectralData out;
  const std::size_t n = op.size();
  if (op.decoupled()) {
    out.eigenvalues = op.diagonal;
    std::sort(out.eigenvalues.begin(), out.eigenvalues.end());
    out.method = "diagonal-exact";
    return out;
  }
  out.method = op.corner != 0.0 ? "sturm-bisection/cyclic-ldlt"
                                : "sturm-bisection/tridiagonal";
  auto [glo, ghi] = op.gershgorin();
  const double pad = 2.0 * (tol + std::numeric_limits<double>::epsilon() *
                                      op.scale());
  glo -= pad;
  ghi += pad;
  if (sturm_count(op, glo) != 0 || sturm_count(op, ghi) != n)
    throw NumericalError("eigenvalues_sturm: Gershgorin bracket is inconsistent");

  out.eigenvalues.assign(n, 0.0);
  struct Node {
    double lo, hi;
    std::size_t clo, chi;
    int depth;
  };
  parallel_chunks(n, par, [&](std::size_t i0, std::size_t i1) {
    std::vector<Node> stack{{glo, ghi, 0, n, 0}};
    while (!stack.empty()) {
      const Node node = stack.back();
      stack.pop_back();
      if (node.chi <= node.clo || node.chi <= i0 || node.clo >= i1) continue;
      const double mid = 0.5 * (node.lo + node.hi);
      if (node.hi - node.lo <= tol || mid <= node.lo || mid >= node.hi) {
        for (std::size_t i = std::max(node.clo, i0); i < std::min(node.chi, i1);
             ++i)
          out.eigenvalues[i] = mid;
        continue;
      }
      if (node.depth > 4000)
        throw NumericalError("eigenvalues_sturm: bisection brackets do not shrink");
      const std::size_t cm =
          std::clamp(sturm_count(op, mid), node.clo, node.chi);
      stack.push_back({mid, node.hi, cm, node.chi, node.depth + 1});
      stack.push_back({node.lo, mid, node.clo, cm, node.depth + 1});
    }
  });
  return out;
}

inline SpectralData eigenvalues_sturm(const PeriodicOperator& op,
                                      Parallelism par = {}) {
  return eigenvalues_sturm(op, default_tolerance(op), par);
}

// ---------------------------------------------------------------------------
// Shifted solves and inverse iteration

/// LU factorization with partial pivoting of (T - shift) for the tridiagonal
/// part T; the periodic corner is folded in by a rank-2 Woodbury update.
class ShiftedSolver {
 public:
  ShiftedSolver(const PeriodicOperator& op, double shift)
      : n_(op.size()), corner_(op.corner) {
    dl_.assign(n_ > 0 ? n_ - 1 : 0, 0.0);
    du_ = op.hopping;
    d_.resize(n_);
    du2_.assign(n_ > 1 ? n_ - 2 : 0, 0.0);
    pivot_.assign(n_ > 0 ? n_ - 1 : 0, 0);
    for (std::size_t i = 0; i < n_; ++i) d_[i] = op.diagonal[i] - shift;
    for (std::size_t i = 0; i + 1 < n_; ++i) dl_[i] = op.hopping[i];
    factor();
    const double floor = std::numeric_limits<double>::min() * op.scale();
    for (double u : d_)
      if (!(std::abs(u) > floor)) singular_ = true;
    if (!singular_ && corner_ != 0.0 && n_ >= 3) prepare_woodbury();
  }

  [[nodiscard]] bool singular() const { return singular_; }

  void solve(std::span<double> b) const {
    solve_tridiagonal(b);
    if (corner_ == 0.0 || n_ < 3) return;
    // x = y - Z S^{-1} (y_0, y_{N-1})
    const double y0 = b[0], y1 = b[n_ - 1];
    const double t0 = (s11_ * y0 - s01_ * y1) / det_;
    const double t1 = (-s10_ * y0 + s00_ * y1) / det_;
    for (std::size_t i = 0; i < n_; ++i) b[i] -= z0_[i] * t0 + z1_[i] * t1;
  }

 private:
  void factor() {
    for (std::size_t i = 0; i + 1 < n_; ++i) {
      if (std::abs(d_[i]) >= std::abs(dl_[i])) {
        if (d_[i] != 0.0) {
          const double l = dl_[i] / d_[i];
          dl_[i] = l;
          d_[i + 1] -= l * du_[i];
        }
      } else {
        const double fact = d_[i] / dl_[i];
        d_[i] = dl_[i];
        dl_[i] = fact;
        const double temp = du_[i];
        du_[i] = d_[i + 1];
        d_[i + 1] = temp - fact * d_[i + 1];
        if (i + 2 < n_) {
          du2_[i] = du_[i + 1];
          du_[i + 1] = -fact * du_[i + 1];
        }
        pivot_[i] = 1;
      }
    }
  }

  void solve_tridiagonal(std::span<double> b) const {
    for (std::size_t i = 0; i + 1 < n_; ++i) {
      if (pivot_[i] == 0) {
        b[i + 1] -= dl_[i] * b[i];
      } else {
        const double temp = b[i];
        b[i] = b[i + 1];
        b[i + 1] = temp - dl_[i] * b[i];
      }
    }
    b[n_ - 1] /= d_[n_ - 1];
    if (n_ > 1) b[n_ - 2] = (b[n_ - 2] - du_[n_ - 2] * b[n_ - 1]) / d_[n_ - 2];
    for (std::size_t k = n_ - 2; k-- > 0;)
      b[k] = (b[k] - du_[k] * b[k + 1] - du2_[k] * b[k + 2]) / d_[k];
  }

  void prepare_woodbury() {
    z0_.assign(n_, 0.0);
    z1_.assign(n_, 0.0);
    z0_[0] = 1.0;
    z1_[n_ - 1] = 1.0;
    solve_tridiagonal(z0_);
    solve_tridiagonal(z1_);
    // S = C^{-1} + U^T Z with C = [[0, c], [c, 0]].
    s00_ = z0_[0];
    s01_ = 1.0 / corner_ + z1_[0];
    s10_ = 1.0 / corner_ + z0_[n_ - 1];
    s11_ = z1_[n_ - 1];
    det_ = s00_ * s11_ - s01_ * s10_;
    const double mag = std::max({std::abs(s00_ * s11_), std::abs(s01_ * s10_),
                                 std::numeric_limits<double>::min()});
    if (!std::isfinite(det_) ||
        std::abs(det_) <= 4.0 * std::numeric_limits<double>::epsilon() * mag)
      singular_ = true;
  }

  std::size_t n_;
  double corner_;
  std::vector<double> dl_, d_, du_, du2_;
  std::vector<std::uint8_t> pivot_;
  std::vector<double> z0_, z1_;
  double s00_ = 0, s01_ = 0, s10_ = 0, s11_ = 0, det_ = 1;
  bool singular_ = false;
};

/// |gamma_r| of the twisted factorizations of T - shift:
/// gamma_r = alpha_r - b_{r-1}^2 / D+_{r-1} - b_r^2 / D-_{r+1}. Small values
/// mark sites where an eigenvector near `shift` has large weight.
inline std::vector<double> twist_indicators(const PeriodicOperator& op,
                                            double shift) {
  const std::size_t n = op.size();
  const double pivmin = detail::pivot_floor(op);
  std::vector<double> fwd(n), bwd(n), gamma(n);
  auto guard = [pivmin](double q) { return std::abs(q) < pivmin ? -pivmin : q; };
  fwd[0] = guard(op.diagonal[0] - shift);
  for (std::size_t i = 1; i < n; ++i) {
    const double b = op.hopping[i - 1];
    fwd[i] = guard((op.diagonal[i] - shift) - b * b / fwd[i - 1]);
  }
  bwd[n - 1] = guard(op.diagonal[n - 1] - shift);
  for (std::size_t i = n - 1; i-- > 0;) {
    const double b = op.hopping[i];
    bwd[i] = guard((op.diagonal[i] - shift) - b * b / bwd[i + 1]);
  }
  for (std::size_t r = 0; r < n; ++r) {
    double g = op.diagonal[r] - shift;
    if (r > 0) g -= op.hopping[r - 1] * op.hopping[r - 1] / fwd[r - 1];
    if (r + 1 < n) g -= op.hopping[r] * op.hopping[r] / bwd[r + 1];
    gamma[r] = std::isnan(g) ? std::numeric_limits<double>::infinity()
                             : std::abs(g);
  }
  return gamma;
}

/// Unnormalized solution of (H - shift) z = gamma_r e_r with z_r = 1, from
/// the twisted factorization at site r, restricted to the `left` sites before
/// r and `right` sites after it (cyclically for a periodic operator) and zero
/// elsewhere. By default the window is the whole lattice; on a ring it is cut
/// at the bond opposite r. Returns nothing if the recursion overflows.
inline std::optional<std::vector<double>> twisted_vector(
    const PeriodicOperator& op, double shift, std::size_t r,
    std::optional<std::pair<std::size_t, std::size_t>> extent = std::nullopt) {
  const std::size_t n = op.size();
  require(r < n, "twisted_vector: site outside the lattice");
  const bool ring = op.corner != 0.0 && n >= 3;
  std::size_t left = 0, right = 0;
  if (extent) {
    std::tie(left, right) = *extent;
    if (!ring) {
      left = std::min(left, r);
      right = std::min(right, n - 1 - r);
    }
    require(left + right < n, "twisted_vector: window wider than the lattice");
  } else if (ring) {
    left = n / 2;
    right = n - 1 - left;
  } else {
    left = r;
    right = n - 1 - r;
  }
  const std::size_t len = left + right + 1, mid = left;
  const std::size_t base = (r + n - left) % n;  // original site at window position 0
  std::vector<double> a(len), b(len - 1);
  for (std::size_t i = 0; i < len; ++i) a[i] = op.diagonal[(base + i) % n] - shift;
  for (std::size_t i = 0; i + 1 < len; ++i) {
    const std::size_t s = (base + i) % n;
    b[i] = s + 1 == n ? op.corner : op.hopping[s];
  }
  const double pivmin = detail::pivot_floor(op);
  auto guard = [pivmin](double q) { return std::abs(q) < pivmin ? -pivmin : q; };
  std::vector<double> z(len, 0.0), dp(len), dm(len);
  if (mid > 0) {
    dp[0] = guard(a[0]);
    for (std::size_t i = 1; i < mid; ++i) dp[i] = guard(a[i] - b[i - 1] * b[i - 1] / dp[i - 1]);
  }
  if (mid + 1 < len) {
    dm[len - 1] = guard(a[len - 1]);
    for (std::size_t i = len - 1; i-- > mid + 1;) dm[i] = guard(a[i] - b[i] * b[i] / dm[i + 1]);
  }
  z[mid] = 1.0;
  for (std::size_t i = mid; i-- > 0;) z[i] = -(b[i] / dp[i]) * z[i + 1];
  for (std::size_t i = mid + 1; i < len; ++i) z[i] = -(b[i - 1] / dm[i]) * z[i - 1];
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < len; ++i) {
    if (!std::isfinite(z[i]) || std::abs(z[i]) > 1e150) return std::nullopt;
    out[(base + i) % n] = z[i];
  }
  return out;
}

/// Smallest index of max |psi(n)|^2.
inline std::size_t localization_center(std::span<const double> psi) {
  std::size_t best = 0;
  double best_w = -1.0;
  for (std::size_t n = 0; n < psi.size(); ++n) {
    const double w = psi[n] * psi[n];
    if (w > best_w) {
      best_w = w;
      best = n;
    }
  }
  return best;
}

inline std::size_t localization_center(const LocalizedVector& psi) {
  if (psi.values.empty()) return 0;
  return psi.first + localization_center(psi.values);
}

struct InverseIterationOptions {
  /// Site of the unit starting vector; defaults to argmin of the twist
  /// indicators at the requested eigenvalue.
  std::optional<std::size_t> start_site;
  int max_iterations = 8;
  /// Converged once ||H x - E x|| <= residual_tolerance * scale.
  double residual_tolerance = 1e-10;
};

namespace detail {

inline double residual_norm(const PeriodicOperator& op, std::span<const double> x,
                            double energy, std::vector<double>& work) {
  work.resize(x.size());
  op.apply(x, work);
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = work[i] - energy * x[i];
    s += r * r;
  }
  return std::sqrt(s);
}

inline void orthogonalize(std::span<double> x,
                          std::span<const std::vector<double>> basis) {
  for (int pass = 0; pass < 2; ++pass)
    for (const auto& q : basis) {
      double dot = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) dot += q[i] * x[i];
      if (dot != 0.0)
        for (std::size_t i = 0; i < x.size(); ++i) x[i] -= dot * q[i];
    }
}

/// Largest-magnitude component made positive.
inline void fix_sign(std::span<double> x) {
  std::size_t k = 0;
  for (std::size_t i = 1; i < x.size(); ++i)
    if (std::abs(x[i]) > std::abs(x[k])) k = i;
  if (x[k] < 0.0)
    for (double& v : x) v = -v;
}

}  // namespace detail

/// Unit eigenvector for `eigenvalue` by inverse iteration, optionally kept
/// orthogonal to `orthogonal_to` (members of the same eigenvalue cluster).
/// A singular shifted factorization perturbs the shift by 1e-12 * scale, at
/// most three times.
inline std::vector<double> eigenvector_inverse_iteration(
    const PeriodicOperator& op, double eigenvalue,
    const InverseIterationOptions& options = {},
    std::span<const std::vector<double>> orthogonal_to = {}) {
  const std::size_t n = op.size();
  require(n >= 1, "inverse iteration: empty operator");
  detail::check_finite(op);
  const auto [glo, ghi] = op.gershgorin();
  const double scale = op.scale();
  require(eigenvalue >= glo - 1e-8 * scale && eigenvalue <= ghi + 1e-8 * scale,
          "inverse iteration: eigenvalue outside the Gershgorin range");
  if (n == 1) return {1.0};

  const std::size_t start = options.start_site.value_or([&] {
    const auto gamma = twist_indicators(op, eigenvalue);
    return static_cast<std::size_t>(
        std::min_element(gamma.begin(), gamma.end()) - gamma.begin());
  }());
  require(start < n, "inverse iteration: start site outside the lattice");

  std::vector<double> work;
  for (int attempt = 0; attempt <= 3; ++attempt) {
    const double shift = eigenvalue + 1e-12 * scale * attempt;
    const ShiftedSolver solver(op, shift);
    if (solver.singular()) continue;
    std::vector<double> x(n, 0.0);
    x[start] = 1.0;
    bool finite = true;
    double residual = std::numeric_limits<double>::infinity();
    for (int it = 0; it < options.max_iterations; ++it) {
      solver.solve(x);
      detail::orthogonalize(x, orthogonal_to);
      double norm = 0.0;
      for (double v : x) norm += v * v;
      norm = std::sqrt(norm);
      if (!std::isfinite(norm) || norm == 0.0) {
        finite = false;
        break;
      }
      for (double& v : x) v /= norm;
      residual = detail::residual_norm(op, x, eigenvalue, work);
      if (residual <= options.residual_tolerance * scale) break;
    }
    if (!finite) continue;
    if (residual > 1e-8 * scale)
      throw NumericalError("inverse iteration did not reach the residual bound");
    detail::fix_sign(x);
    return x;
  }
  throw NumericalError(
      "inverse iteration: shifted solve singular after 3 perturbed retries");
}

/// Groups of consecutive eigenvalues closer than `gap`.
inline std::vector<std::pair<std::size_t, std::size_t>> eigenvalue_clusters(
    std::span<const double> eigenvalues, double gap) {
  std::vector<std::pair<std::size_t, std::size_t>> clusters;
  std::size_t begin = 0;
  for (std::size_t i = 1; i <= eigenvalues.size(); ++i) {
    if (i == eigenvalues.size() || eigenvalues[i] - eigenvalues[i - 1] > gap) {
      clusters.emplace_back(begin, i);
      begin = i;
    }
  }
  return clusters;
}

namespace detail {

/// Tunneling between copies of a site makes the exact eigenvectors of a
/// near-degenerate cluster hybrids. Replace them by the best localized
/// orthonormal basis of the same span: project delta vectors at k pivot
/// sites (column-pivoted QR) and orthonormalize symmetrically. The result is
/// ordered by Rayleigh quotient.
inline std::vector<std::vector<double>> localize_cluster(
    const PeriodicOperator& op, const std::vector<std::vector<double>>& basis) {
  const auto n = static_cast<Eigen::Index>(op.size());
  const auto k = static_cast<Eigen::Index>(basis.size());
  Eigen::MatrixXd q(n, k);
  for (Eigen::Index t = 0; t < k; ++t)
    q.col(t) = Eigen::Map<const Eigen::VectorXd>(basis[static_cast<std::size_t>(t)].data(), n);
  const Eigen::MatrixXd qt = q.transpose();
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(qt);
  const auto& perm = qr.colsPermutation().indices();
  Eigen::MatrixXd qs(k, k);  // rows of q at the pivot sites
  for (Eigen::Index t = 0; t < k; ++t) qs.row(t) = q.row(perm[t]);
  // P = Q Qs^T, P^T P = Qs Qs^T = M, X = P M^{-1/2}.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(qs * qs.transpose());
  const Eigen::MatrixXd x =
      q * qs.transpose() * es.eigenvectors() *
      es.eigenvalues().cwiseMax(std::numeric_limits<double>::min()).cwiseSqrt().cwiseInverse().asDiagonal() *
      es.eigenvectors().transpose();
  std::vector<std::vector<double>> out(static_cast<std::size_t>(k), std::vector<double>(op.size()));
  std::vector<std::pair<double, std::size_t>> rq(static_cast<std::size_t>(k));
  std::vector<double> hx(op.size());
  for (Eigen::Index t = 0; t < k; ++t) {
    auto& v = out[static_cast<std::size_t>(t)];
    Eigen::Map<Eigen::VectorXd>(v.data(), n) = x.col(t).normalized();
    // Entries at the rounding floor of the rotation are noise, not tail.
    const double floor = 4.0 * static_cast<double>(k) * std::numeric_limits<double>::epsilon() *
                         x.col(t).normalized().cwiseAbs().maxCoeff();
    for (auto& value : v)
      if (std::abs(value) < floor) value = 0.0;
    op.apply(v, hx);
    rq[static_cast<std::size_t>(t)] = {std::inner_product(v.begin(), v.end(), hx.begin(), 0.0),
                                      static_cast<std::size_t>(t)};
  }
  std::sort(rq.begin(), rq.end());
  std::vector<std::vector<double>> sorted;
  sorted.reserve(out.size());
  for (const auto& [value, t] : rq) sorted.push_back(std::move(out[t]));
  return sorted;
}

}  // namespace detail

/// Fills eigenvectors and centers for every eigenvalue in `data`. Within a
/// cluster of numerically equal eigenvalues each member starts from the
/// best twist site not already occupied by an earlier member (weight below
/// 1e-8), and is orthogonalized against the earlier members. If two members
/// still share a center the cluster's span is rotated to a localized basis.
inline void compute_eigenvectors(const PeriodicOperator& op, SpectralData& data,
                                 Parallelism par = {}) {
  const std::size_t n = op.size();
  require(data.eigenvalues.size() == n,
          "compute_eigenvectors: eigenvalue count differs from operator size");
  data.eigenvectors.assign(n, {});
  data.centers.assign(n, 0);
  if (op.decoupled()) {
    // Delta vectors, ties in value ordered by site.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return op.diagonal[a] < op.diagonal[b];
    });
    for (std::size_t i = 0; i < n; ++i) {
      data.eigenvalues[i] = op.diagonal[order[i]];
      data.centers[i] = order[i];
      data.eigenvectors[i] = {n, order[i], {1.0}};
    }
    return;
  }
  const double scale = op.scale();
  const auto clusters = eigenvalue_clusters(data.eigenvalues, 1e-9 * scale);
  parallel_chunks(clusters.size(), par, [&](std::size_t c0, std::size_t c1) {
    for (std::size_t c = c0; c < c1; ++c) {
      const auto [begin, end] = clusters[c];
      const std::size_t k = end - begin;
      std::vector<std::vector<double>> members;
      std::vector<double> occupied(n, 0.0);
      for (std::size_t i = begin; i < end; ++i) {
        const double e = data.eigenvalues[i];
        InverseIterationOptions opts;
        if (k > 1) {
          const auto gamma = twist_indicators(op, e);
          std::size_t best = n;
          for (std::size_t r = 0; r < n; ++r)
            if (occupied[r] < 1e-8 && (best == n || gamma[r] < gamma[best])) best = r;
          if (best == n)
            best = static_cast<std::size_t>(std::min_element(occupied.begin(), occupied.end()) -
                                            occupied.begin());
          opts.start_site = best;
        }
        auto x = eigenvector_inverse_iteration(op, e, opts, members);
        if (k > 1) {
          for (std::size_t r = 0; r < n; ++r) occupied[r] += x[r] * x[r];
          members.push_back(std::move(x));
        } else {
          data.centers[i] = localization_center(x);
          data.eigenvectors[i] = LocalizedVector::from_dense(x);
        }
      }
      if (k > 1) {
        std::vector<std::size_t> centers(k);
        for (std::size_t t = 0; t < k; ++t) centers[t] = localization_center(members[t]);
        std::sort(centers.begin(), centers.end());
        if (std::adjacent_find(centers.begin(), centers.end()) != centers.end())
          members = detail::localize_cluster(op, members);
        for (std::size_t t = 0; t < k; ++t) {
          data.centers[begin + t] = localization_center(members[t]);
          data.eigenvectors[begin + t] = LocalizedVector::from_dense(members[t]);
        }
      }
    }
  });
}

/// Dense symmetric eigensolver (Eigen); the oracle and small-N fallback.
inline SpectralData dense_spectrum(const PeriodicOperator& op,
                                   bool with_vectors = true) {
  require(op.size() >= 1 && op.size() <= 4096,
          "dense_spectrum: N must lie in [1, 4096]");
  detail::check_finite(op);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(
      op.dense(), with_vectors ? Eigen::ComputeEigenvectors
                               : Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success)
    throw NumericalError("dense_spectrum: eigensolver failed");
  SpectralData out;
  out.method = "dense-eigen";
  const auto n = static_cast<Eigen::Index>(op.size());
  out.eigenvalues.assign(solver.eigenvalues().data(),
                         solver.eigenvalues().data() + n);
  if (with_vectors) {
    out.eigenvectors.reserve(op.size());
    for (Eigen::Index k = 0; k < n; ++k) {
      std::vector<double> x(solver.eigenvectors().col(k).data(),
                            solver.eigenvectors().col(k).data() + n);
      detail::fix_sign(x);
      out.centers.push_back(localization_center(x));
      out.eigenvectors.push_back(LocalizedVector::from_dense(x));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Decay envelopes

enum class EnvelopePolicy {
  /// c at the least-squares rate itself.
  fitted_rate,
  /// Minimize c(d) (1 + 1/d) / (1 - 1/d) over 1 < d <= fitted rate.
  tightest,
};

struct DecayFit {
  DecayProfile profile;
  double fitted_d = 0.0;   // least-squares rate, capped at max_decay_base
  double residual = 0.0;   // RMS of the log-space regression residuals
  std::size_t sites_used = 0;
};

struct DecayFitOptions {
  std::optional<double> candidate_d;
  EnvelopePolicy policy = EnvelopePolicy::tightest;
  double weight_floor = 1e-14;
  double max_d = 1e6;
};

/// Certified envelope c d^{-|n - center|} >= |psi(n)|^2 at every site. The
/// rate comes from a least-squares fit of log |psi|^2 against |n - center|
/// over sites above `weight_floor`; c is then the smallest constant that
/// makes the envelope hold everywhere (inflated by 1e-10 relative for
/// rounding).
inline DecayFit decay_fit(const LocalizedVector& psi, std::size_t center,
                          const DecayFitOptions& options = {}) {
  require(std::abs(psi.norm() - 1.0) <= 1e-8, "decay_fit: psi must be a unit vector");
  require(center < psi.size, "decay_fit: center outside the lattice");
  struct Point {
    double r, log_w;
  };
  std::vector<Point> support;
  support.reserve(psi.values.size());
  for (std::size_t i = 0; i < psi.values.size(); ++i) {
    const double w = psi.values[i] * psi.values[i];
    if (w <= 0.0) continue;
    const std::size_t n = psi.first + i;
    const double r = static_cast<double>(n > center ? n - center : center - n);
    support.push_back({r, std::log(w)});
  }
  require(!support.empty(), "decay_fit: zero vector");

  DecayFit fit;
  double sr = 0, sy = 0, srr = 0, sry = 0;
  std::size_t count = 0;
  double rmin = std::numeric_limits<double>::infinity(), rmax = -rmin;
  for (const auto& p : support) {
    if (p.log_w <= std::log(options.weight_floor)) continue;
    sr += p.r;
    sy += p.log_w;
    srr += p.r * p.r;
    sry += p.r * p.log_w;
    rmin = std::min(rmin, p.r);
    rmax = std::max(rmax, p.r);
    ++count;
  }
  fit.sites_used = count;
  if (count < 2 || rmax == rmin) {
    fit.fitted_d = options.max_d;
  } else {
    const double cnt = static_cast<double>(count);
    const double slope = (cnt * sry - sr * sy) / (cnt * srr - sr * sr);
    const double intercept = (sy - slope * sr) / cnt;
    double ss = 0.0;
    for (const auto& p : support)
      if (p.log_w > std::log(options.weight_floor)) {
        const double e = p.log_w - (intercept + slope * p.r);
        ss += e * e;
      }
    fit.residual = std::sqrt(ss / cnt);
    fit.fitted_d = std::min(std::exp(-slope), options.max_d);
    if (!(fit.fitted_d > 1.0))
      throw LocalizationError("decay_fit: fitted d <= 1, vector is not localized");
  }

  const double candidate = options.candidate_d.value_or(fit.fitted_d);
  require(candidate > 1.0, "decay_fit: candidate d must exceed 1");
  auto log_c = [&](double u) {
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& p : support) best = std::max(best, p.log_w + p.r * u);
    return best;
  };
  double u = std::log(candidate);
  if (options.policy == EnvelopePolicy::tightest) {
    auto objective = [&](double v) {
      return log_c(v) + std::log1p(2.0 / std::expm1(v));
    };
    double a = std::log1p(1e-6), b = u;
    if (b > a) {
      const double g = 0.5 * (std::sqrt(5.0) - 1.0);
      double x1 = b - g * (b - a), x2 = a + g * (b - a);
      double f1 = objective(x1), f2 = objective(x2);
      for (int it = 0; it < 200 && b - a > 1e-13 * std::max(1.0, b); ++it) {
        if (f1 <= f2) {
          b = x2;
          x2 = x1;
          f2 = f1;
          x1 = b - g * (b - a);
          f1 = objective(x1);
        } else {
          a = x1;
          x1 = x2;
          f1 = f2;
          x2 = a + g * (b - a);
          f2 = objective(x2);
        }
      }
      const double best = 0.5 * (a + b);
      // The boundary u = log(candidate) is often optimal; keep whichever wins.
      u = objective(best) < objective(u) ? best : u;
    }
  }
  const double d = std::exp(u);
  const double c = std::exp(log_c(u)) * (1.0 + 1e-10);
  if (!std::isfinite(c))
    throw LocalizationError("decay_fit: envelope constant overflows");
  fit.profile = DecayProfile(c, d);
  return fit;
}

/// One envelope valid for every fit: largest c, smallest d. Since c(d) grows
/// with d, each vector also satisfies (c_k, d_min), so the pair is certified.
inline DecayProfile worst_case_envelope(std::span<const DecayFit> fits) {
  require(!fits.empty(), "worst_case_envelope: no fits");
  double c = 0.0, d = std::numeric_limits<double>::infinity();
  for (const auto& f : fits) {
    c = std::max(c, f.profile.c);
    d = std::min(d, f.profile.d);
  }
  return {c, d};
}

// ---------------------------------------------------------------------------
// Eigenvalue to site matching

struct SiteMatching {
  std::vector<std::size_t> sites;  // eigenvalue index -> localization center
  std::vector<double> defects;     // eps E - lambda^{(m)}_site, lambda units
  double max_defect = 0.0;
  bool bijective = false;

  /// Largest |defect| among sites at least `margin` away from both ends.
  [[nodiscard]] double bulk_max_defect(std::size_t margin) const {
    const std::size_t n = sites.size();
    double worst = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      if (sites[i] >= margin && sites[i] + margin < n)
        worst = std::max(worst, std::abs(defects[i]));
    return worst;
  }
};

/// Matches each eigenvalue to the center of its eigenvector. Throws
/// LocalizationError when two eigenvalues share a center.
inline SiteMatching eigenvalue_site_matching(const SpectralData& data,
                                             const PotentialSpec& spec) {
  require(data.centers.size() == data.eigenvalues.size() &&
              !data.centers.empty(),
          "eigenvalue_site_matching: eigenvectors have not been computed");
  const std::size_t n = data.size();
  SiteMatching m;
  m.sites = data.centers;
  m.defects.resize(n);
  std::vector<std::uint8_t> seen(n, 0);
  bool bijective = true;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = m.sites[i];
    if (k >= n || seen[k]) {
      bijective = false;
    } else {
      seen[k] = 1;
    }
    if (k < n) {
      m.defects[i] = spec.coupling * data.eigenvalues[i] -
                     spec.lambda(static_cast<std::int64_t>(k)).to_double();
      m.max_defect = std::max(m.max_defect, std::abs(m.defects[i]));
    }
  }
  m.bijective = bijective;
  if (!bijective)
    throw LocalizationError(
        "eigenvalue_site_matching: localization centers are not a bijection");
  return m;
}

/// Eigenvalues, eigenvectors and centers in one call: Sturm bisection plus
/// inverse iteration.
inline SpectralData solve_localized(const PeriodicOperator& op,
                                    Parallelism par = {}) {
  SpectralData data = eigenvalues_sturm(op, par);
  compute_eigenvectors(op, data, par);
  return data;
}

}  // namespace lpids
