#include <lpids/ids.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

using namespace lpids;

namespace {

SpectralData free_spectrum(std::size_t n) {
  return eigenvalues_sturm(build_operator(PotentialSpec(1, 1.0), n, Boundary::dirichlet,
                                          OperatorVariant::free));
}

double arccos_ids(double e) {
  const double x = std::clamp(e / 2.0, -1.0, 1.0);
  return 1.0 - std::acos(x) / std::numbers::pi;
}

}  // namespace

TEST(IDS, FreeOperatorBasics) {
  const auto data = free_spectrum(256);
  const auto ids = ids_from_spectrum(data);
  EXPECT_DOUBLE_EQ(ids(0.0), 0.5);
  EXPECT_DOUBLE_EQ(ids(-1e300), 0.0);
  EXPECT_DOUBLE_EQ(ids(1e300), 1.0);
  EXPECT_DOUBLE_EQ(dos_interval_mass(ids, {-1e300, 1e300}), 1.0);
  // Right-continuity: k(E_i) counts E_i itself.
  const auto ev = ids.eigenvalues();
  EXPECT_DOUBLE_EQ(ids(ev[10]), 11.0 / 256.0);
  EXPECT_THROW(IDSFunction(std::vector<double>{2.0, 1.0}), PreconditionError);
  EXPECT_THROW(IDSFunction(std::vector<double>{}), PreconditionError);
}

TEST(IDS, FreeOperatorMatchesArccosLaw) {
  const std::size_t n = 1 << 12;
  const auto ids = ids_from_spectrum(free_spectrum(n));
  const auto ev = ids.eigenvalues();
  double sup = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sup = std::max(sup, std::abs(ids(ev[i]) - arccos_ids(ev[i])));
    const double below = std::nextafter(ev[i], -INFINITY);
    sup = std::max(sup, std::abs(ids(below) - arccos_ids(below)));
  }
  EXPECT_LE(sup, 2.0 / static_cast<double>(n));
}

TEST(DosMass, AdditiveAndValidated) {
  const auto ids = ids_from_spectrum(free_spectrum(300));
  EXPECT_THROW(dos_interval_mass(ids, {1.0, 0.5}), PreconditionError);
  EXPECT_DOUBLE_EQ(dos_interval_mass(ids, {0.5, 0.5}), 0.0);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-2.5, 2.5);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> cuts{-3.0, 3.0};
    for (int i = 0; i < 7; ++i) cuts.push_back(u(rng));
    std::sort(cuts.begin(), cuts.end());
    double total = 0;
    std::size_t count = 0;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
      total += dos_interval_mass(ids, {cuts[i], cuts[i + 1]});
      count += ids.count_in({cuts[i], cuts[i + 1]});
    }
    EXPECT_EQ(count, 300u);
    EXPECT_NEAR(total, 1.0, 1e-14);
  }
}

TEST(DosMass, DyadicIntervalsDiagonalModelExact) {
  const int m = 5;
  const PotentialSpec spec(m, valid_coupling(m));
  const std::size_t n = 8 << m;
  const auto op = build_operator(spec, n, Boundary::dirichlet, OperatorVariant::diagonal_only);
  const auto ids = ids_from_spectrum(eigenvalues_sturm(op));
  for (std::int64_t j = 0; j < (1 << m); ++j) {
    const auto iv = rescaled_dyadic(m, j, spec.coupling);
    std::size_t oracle = 0;
    for (double v : op.diagonal) oracle += iv.contains(v);
    EXPECT_EQ(ids.count_in(iv), oracle);
    EXPECT_DOUBLE_EQ(dos_interval_mass(ids, iv), std::ldexp(1.0, -m));
  }
}

TEST(DosMass, DyadicIntervalsSchroedingerUpperBoundAndConsistency) {
  const int m = 6;
  const PotentialSpec spec(m, valid_coupling(m));
  const std::size_t n = 16 << m;
  const auto ids = ids_from_spectrum(eigenvalues_sturm(build_operator(spec, n, Boundary::dirichlet)));
  for (int lv = 1; lv <= m; ++lv) {
    double total = 0;
    for (std::int64_t j = -1; j <= (1 << lv); ++j) {
      const double mass = dos_interval_mass(ids, rescaled_dyadic(lv, j, spec.coupling));
      total += mass;
      EXPECT_LE(mass, std::ldexp(1.0, -lv) + 2.0 / static_cast<double>(n)) << lv << ' ' << j;
      if (lv < m) {
        const double kids = dos_interval_mass(ids, rescaled_dyadic(lv + 1, 2 * j, spec.coupling)) +
                            dos_interval_mass(ids, rescaled_dyadic(lv + 1, 2 * j + 1, spec.coupling));
        EXPECT_DOUBLE_EQ(mass, kids);
      }
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(TraceOracle, AgreesWithCountingDensePath) {
  const PotentialSpec spec(5, valid_coupling(5));
  const auto op = build_operator(spec, 256, Boundary::dirichlet);
  const auto data = dense_spectrum(op);
  const auto ids = ids_from_spectrum(data);
  std::mt19937_64 rng(9);
  const auto [lo, hi] = op.gershgorin();
  std::uniform_real_distribution<double> u(lo, hi);
  for (int t = 0; t < 50; ++t) {
    double a = u(rng), b = u(rng);
    if (b < a) std::swap(a, b);
    EXPECT_NEAR(projection_trace_oracle(data, {a, b}), dos_interval_mass(ids, {a, b}), 1e-10);
  }
  EXPECT_NEAR(projection_trace_oracle(data, {lo - 1, hi + 1}), 1.0, 1e-10);
  EXPECT_EQ(projection_trace_oracle(data, {1.0, 1.0}), 0.0);
  SpectralData bare;
  bare.eigenvalues = data.eigenvalues;
  EXPECT_THROW(projection_trace_oracle(bare, {0, 1}), NumericalError);
}

TEST(TraceOracle, AgreesWithCountingLocalizedPath) {
  const PotentialSpec spec(6, valid_coupling(6));
  const auto op = build_operator(spec, 1024, Boundary::dirichlet);
  const auto data = solve_localized(op);
  const auto ids = ids_from_spectrum(data);
  for (int lv = 1; lv <= 6; ++lv)
    for (std::int64_t j = 0; j < (1 << lv); ++j) {
      const auto iv = rescaled_dyadic(lv, j, spec.coupling);
      EXPECT_NEAR(projection_trace_oracle(data, iv), dos_interval_mass(ids, iv), 1e-10);
    }
}

TEST(Modulus, DiagonalModelRatioIsEpsilonAtEveryLevel) {
  const int m = 6;
  const PotentialSpec spec(m, valid_coupling(m));
  const auto op = build_operator(spec, 8 << m, Boundary::dirichlet, OperatorVariant::diagonal_only);
  const auto ids = ids_from_spectrum(eigenvalues_sturm(op));
  const auto r = modulus_of_continuity(ids, spec, {1, m}, DecayProfile(1.0, 1e6));
  ASSERT_EQ(r.levels.size(), static_cast<std::size_t>(m));
  for (const auto& row : r.levels) {
    EXPECT_NEAR(row.max_ratio, spec.coupling, 1e-15 * spec.coupling);
    EXPECT_NEAR(row.min_ratio, spec.coupling, 1e-15 * spec.coupling);
    EXPECT_NEAR(row.lambda_ratio, 1.0, 1e-15);
    EXPECT_NEAR(row.total_mass, 1.0, 1e-12);
  }
  EXPECT_NEAR(r.level_stability, 1.0, 1e-12);
  EXPECT_NEAR(r.holder_exponent, 1.0, 1e-12);
  EXPECT_TRUE(r.pass);
  EXPECT_THROW(modulus_of_continuity(ids, spec, {1, m + 1}, DecayProfile(1.0, 2.0)),
               PreconditionError);
}

TEST(Modulus, NStabilityAndEpsilonScaling) {
  const int m = 6;
  auto run = [&](double eps, std::size_t n) {
    const PotentialSpec spec(m, eps);
    const auto op = build_operator(spec, n, Boundary::dirichlet);
    return modulus_of_continuity(ids_from_spectrum(eigenvalues_sturm(op)), spec, {1, m},
                                 DecayProfile(1.0, 2.0));
  };
  const double eps = valid_coupling(m);
  const auto a = run(eps, 512), b = run(eps, 1024);
  for (std::size_t i = 0; i < a.levels.size(); ++i) {
    const int lv = a.levels[i].level;
    EXPECT_LE(std::abs(a.levels[i].max_ratio - b.levels[i].max_ratio),
              4.0 * std::ldexp(1.0, lv) / 512.0);
    EXPECT_GE(a.levels[i].max_ratio, 0.0);
  }
  const auto half = run(eps / 2, 1024);
  EXPECT_NEAR(half.empirical_lipschitz / b.empirical_lipschitz, 0.5, 0.15);
}

TEST(ParseLevels, Forms) {
  EXPECT_EQ(parse_levels("8").first, 1);
  EXPECT_EQ(parse_levels("8").last, 8);
  EXPECT_EQ(parse_levels("3:5").first, 3);
  EXPECT_EQ(parse_levels("3:5").last, 5);
  EXPECT_THROW(parse_levels("5:3"), PreconditionError);
  EXPECT_THROW(parse_levels("x"), PreconditionError);
  EXPECT_THROW(parse_levels("2:"), PreconditionError);
  EXPECT_THROW(parse_levels("0:2"), PreconditionError);
}

TEST(HolderProbe, ToyDistributions) {
  std::vector<std::vector<EnergyInterval>> anchored;
  for (int s = 1; s <= 8; ++s) {
    const double len = std::ldexp(1.0, -s);
    anchored.push_back({{0.0, len}, {0.5, 0.5 + len}});
  }
  const auto lin = holder_probe([](const EnergyInterval& iv) {
    return std::clamp(iv.hi, 0.0, 1.0) - std::clamp(iv.lo, 0.0, 1.0);
  }, anchored);
  EXPECT_NEAR(lin.exponent, 1.0, 0.01);
  const auto sq = holder_probe([](const EnergyInterval& iv) {
    return std::sqrt(std::clamp(iv.hi, 0.0, 1.0)) - std::sqrt(std::clamp(iv.lo, 0.0, 1.0));
  }, anchored);
  EXPECT_NEAR(sq.exponent, 0.5, 0.02);
  // The max-mass rule picks the interval at 0 for the square root.
  EXPECT_DOUBLE_EQ(sq.masses.back(), std::sqrt(std::ldexp(1.0, -8)));

  std::vector<std::vector<EnergyInterval>> two(anchored.begin(), anchored.begin() + 2);
  EXPECT_THROW(holder_probe([](const EnergyInterval&) { return 1.0; }, two),
               PreconditionError);
}

TEST(HolderProbe, FreeBandEdge) {
  const auto ids = ids_from_spectrum(free_spectrum(1 << 12));
  const auto fams = dyadic_families_near(2.0, 0.25, {3, 8});
  const auto fit = holder_probe(ids, fams);
  EXPECT_GE(fit.exponent, 0.4);
  EXPECT_LE(fit.exponent, 0.6);
}

TEST(Landing, DiagonalModelHasNoDifferences) {
  const int m = 6;
  const PotentialSpec spec(m, valid_coupling(m));
  const auto op = build_operator(spec, 4 << m, Boundary::dirichlet, OperatorVariant::diagonal_only);
  const auto data = solve_localized(op);
  for (int lv = 1; lv <= m; ++lv)
    for (std::uint64_t j = 0; j < (std::uint64_t{1} << lv); ++j) {
      const auto r = landing_verification(data, spec, DyadicInterval(lv, j));
      ASSERT_EQ(r.symmetric_difference, 0u) << lv << ' ' << j;
      ASSERT_EQ(r.expected, (std::size_t{4} << m) >> lv);
    }
}

TEST(Landing, ValidEpsilonOnlyEndpointCrossings) {
  const int m = 6;
  const PotentialSpec spec(m, valid_coupling(m));
  const auto data = solve_localized(build_operator(spec, 1 << 10, Boundary::dirichlet));
  std::size_t crossings = 0;
  for (int lv = 1; lv <= m; ++lv)
    for (std::uint64_t j = 0; j < (std::uint64_t{1} << lv); ++j) {
      const auto r = landing_verification(data, spec, DyadicInterval(lv, j));
      EXPECT_TRUE(r.pass()) << lv << ' ' << j;
      EXPECT_EQ(r.interior_violations, 0u);
      crossings += r.endpoint_crossings;
    }
  // Truncated lambda values sit on the grid, so some eigenvalues do cross.
  EXPECT_GT(crossings, 0u);
}

TEST(Landing, OversizedEpsilonIsReported) {
  const int m = 6;
  const PotentialSpec spec(m, 0.5, 0, true);
  SpectralData data;
  {
    WarningHandler prev = set_warning_handler(nullptr);
    data = solve_localized(build_operator(spec, 256, Boundary::dirichlet));
    set_warning_handler(prev);
  }
  std::size_t interior = 0;
  for (std::uint64_t j = 0; j < 64; ++j)
    interior += landing_verification(data, spec, DyadicInterval(m, j)).interior_violations;
  EXPECT_GT(interior, 0u);
}
