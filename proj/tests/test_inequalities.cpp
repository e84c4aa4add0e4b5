#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "enflo/inequalities.hpp"
#include "oracle.hpp"

using namespace enflo;

namespace {

const NormSpec kL2(2.0);
const ExponentSpec kP2(2.0);

FunctionTable linear_table(const std::vector<std::vector<double>>& xs) {
  const int n = static_cast<int>(xs.size());
  const int d = static_cast<int>(xs.front().size());
  FunctionTable f(TorusGeometry::hypercube(n), d);
  for (std::size_t e = 0; e < f.points(); ++e) {
    const auto eps = SignVector::from_index(n, e);
    for (int j = 0; j < n; ++j)
      for (int c = 0; c < d; ++c)
        f.at(e)[static_cast<std::size_t>(c)] += eps[j] * xs[static_cast<std::size_t>(j)][static_cast<std::size_t>(c)];
  }
  return f;
}

FunctionTable translate(const FunctionTable& f, const TorusPoint& z) { return shifted(f, z); }

}  // namespace

TEST(Rademacher, HilbertSpaceIsExact) {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 1 + static_cast<int>(rng.below(8));
    std::vector<std::vector<double>> xs(static_cast<std::size_t>(n), std::vector<double>(3));
    for (auto& v : xs)
      for (double& x : v) x = rng.gaussian();
    const auto r = rademacher_ratio(xs, kL2, kP2);
    ASSERT_TRUE(r.ratio.has_value());
    EXPECT_NEAR(*r.ratio, 1.0, 1e-12);
  }
}

TEST(Rademacher, Examples) {
  const std::vector<std::vector<double>> twice{{1.0, 0.0}, {1.0, 0.0}};
  for (const auto& norm : {NormSpec(1.0), NormSpec(2.0), NormSpec::infinity()}) {
    const auto r = rademacher_ratio(twice, norm, ExponentSpec(1.0));
    EXPECT_DOUBLE_EQ(r.lhs, 1.0);
    EXPECT_DOUBLE_EQ(r.rhs, 2.0);
    EXPECT_DOUBLE_EQ(*r.ratio, 0.5);
  }
  const auto single = rademacher_ratio({{3.0, -4.0}}, NormSpec(1.0), ExponentSpec(1.5));
  EXPECT_NEAR(*single.ratio, 1.0, 1e-15);
  EXPECT_THROW(rademacher_ratio({}, kL2, kP2), std::invalid_argument);
  const auto zero = rademacher_ratio({{0.0}, {0.0}}, kL2, kP2);
  EXPECT_TRUE(zero.degenerate);
  EXPECT_FALSE(zero.ratio.has_value());
}

TEST(Enflo, LinearTablesMatchRademacher) {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 1 + static_cast<int>(rng.below(6));
    const int d = 1 + static_cast<int>(rng.below(3));
    std::vector<std::vector<double>> xs(static_cast<std::size_t>(n), std::vector<double>(static_cast<std::size_t>(d)));
    for (auto& v : xs)
      for (double& x : v) x = rng.gaussian();
    for (const auto& norm : {NormSpec(1.0), NormSpec(2.0), NormSpec::infinity()}) {
      for (double p : {1.0, 1.5, 2.0}) {
        const auto e = enflo_ratio(linear_table(xs), norm, ExponentSpec(p));
        const auto r = rademacher_ratio(xs, norm, ExponentSpec(p));
        EXPECT_NEAR(*e.ratio, *r.ratio, 1e-12);
        EXPECT_NEAR(e.lhs, std::pow(2.0, p) * r.lhs, 1e-10 * e.lhs);
      }
    }
  }
}

TEST(Enflo, Examples) {
  const auto cube = TorusGeometry::hypercube(3);
  const std::vector<double> c{1.0, 2.0};
  EXPECT_TRUE(enflo_ratio(FunctionTable::constant(cube, c), kL2, kP2).degenerate);
  const auto r = enflo_ratio(linear_table({{0.5, -2.0}}), NormSpec(1.0), ExponentSpec(1.3));
  EXPECT_NEAR(*r.ratio, 1.0, 1e-15);
  EXPECT_THROW(enflo_ratio(FunctionTable(TorusGeometry(2, 4), 1), kL2, kP2), std::invalid_argument);
}

TEST(EdgeEnergy, Examples) {
  TorusGeometry line(1, 8);
  const auto ind = FunctionTable::indicator(line, 0);
  EXPECT_DOUBLE_EQ(edge_energy(ind, kL2, kP2), 0.25);
  const std::vector<double> c{7.0};
  EXPECT_EQ(edge_energy(FunctionTable::constant(line, c), kL2, kP2), 0.0);
  Rng rng(3);
  const auto f = FunctionTable::gaussian(TorusGeometry(2, 6), 2, rng);
  for (double p : {1.0, 1.5, 2.0}) {
    const ExponentSpec e(p);
    EXPECT_NEAR(edge_energy(-3.0 * f, NormSpec::infinity(), e), std::pow(3.0, p) * edge_energy(f, NormSpec::infinity(), e),
                1e-10);
    EXPECT_NEAR(edge_energy(f, NormSpec(1.0), e), oracle::edge_energy(f, NormSpec(1.0), e), 1e-10);
  }
}

TEST(ScaledEnflo, Examples) {
  TorusGeometry g(1, 4);
  const auto r = scaled_enflo_ratio(FunctionTable::indicator(g, 0), kL2, kP2);
  EXPECT_DOUBLE_EQ(r.lhs, 0.5);
  EXPECT_DOUBLE_EQ(r.rhs, 8.0);
  EXPECT_DOUBLE_EQ(*r.ratio, 1.0 / 16.0);
  const std::vector<double> c{2.0};
  EXPECT_TRUE(scaled_enflo_ratio(FunctionTable::constant(g, c), kL2, kP2).degenerate);
  EXPECT_THROW(TorusGeometry(1, 5), std::invalid_argument);
}

TEST(Approximation, WorkedExample) {
  TorusGeometry line(1, 8);
  const auto ind = FunctionTable::indicator(line, 0);
  const auto r = approximation_ratio(ind, SmoothingRadius(3), kL2, kP2);
  EXPECT_NEAR(r.lhs, 1.0 / 12.0, 1e-15);
  EXPECT_NEAR(r.rhs, 1.0, 1e-15);
  // Cross-check lhs against the brute-force box average.
  const auto avg = oracle::box_average(ind, 1U, 3);
  double lhs = 0.0;
  for (std::size_t x = 0; x < 8; ++x) lhs += std::pow(avg.at(x)[0] - ind.at(x)[0], 2.0) / 8.0;
  EXPECT_NEAR(r.lhs, lhs, 1e-15);
}

TEST(Approximation, DegenerateCases) {
  Rng rng(4);
  const auto f = FunctionTable::gaussian(TorusGeometry(2, 8), 2, rng);
  const auto r = approximation_ratio(f, SmoothingRadius(1), kL2, kP2);
  EXPECT_TRUE(r.degenerate);
  EXPECT_EQ(r.lhs, 0.0);
  EXPECT_EQ(r.rhs, 0.0);
  const std::vector<double> c{1.0, -1.0};
  EXPECT_TRUE(approximation_ratio(FunctionTable::constant(f.geometry(), c), SmoothingRadius(3), kL2, kP2).degenerate);
  EXPECT_THROW(approximation_ratio(f, SmoothingRadius(5), kL2, kP2), std::invalid_argument);
}

TEST(Approximation, BoundHoldsOnRandomTables) {
  Rng rng(5);
  for (int trial = 0; trial < 150; ++trial) {
    const int n = 1 + static_cast<int>(rng.below(3));
    const int m = trial % 2 ? 8 : 12;
    const int k = 1 + 2 * static_cast<int>(rng.below(m == 8 ? 2 : 3));
    const auto f = FunctionTable::gaussian(TorusGeometry(n, m), 1 + static_cast<int>(rng.below(3)), rng);
    for (const auto& norm : {NormSpec(1.0), NormSpec(2.0), NormSpec::infinity()})
      for (double p : {1.0, 1.5, 2.0}) EXPECT_TRUE(approximation_ratio(f, SmoothingRadius(k), norm, ExponentSpec(p)).holds(1e-9));
  }
}

TEST(Smoothing, AnnihilatedTableHasZeroRatio) {
  // Along each parity class the values repeat (1, -1, 0), so every window of
  // three consecutive class members sums to zero and Delta f vanishes.
  TorusGeometry line(1, 12);
  FunctionTable f(line, 1);
  const double pattern[3] = {1.0, -1.0, 0.0};
  for (std::size_t x = 0; x < 12; ++x) f.at(x)[0] = pattern[(x / 2) % 3];
  EXPECT_LT(delta(f, {0}, SmoothingRadius(3)).max_abs(), 1e-15);
  const auto r = smoothing_ratio(f, SmoothingRadius(3), kL2, kP2);
  EXPECT_FALSE(r.degenerate);
  EXPECT_EQ(r.lhs, 0.0);
  EXPECT_EQ(*r.ratio, 0.0);
}

TEST(Smoothing, MatchesOracleAndIsHomogeneous) {
  Rng rng(6);
  const auto f = FunctionTable::gaussian(TorusGeometry(2, 8), 2, rng);
  const std::vector<double> c{3.0, 3.0};
  EXPECT_TRUE(smoothing_ratio(FunctionTable::constant(f.geometry(), c), SmoothingRadius(3), kL2, kP2).degenerate);
  for (double p : {1.0, 2.0}) {
    const ExponentSpec e(p);
    const auto r = smoothing_ratio(f, SmoothingRadius(3), NormSpec(1.0), e);
    const double oracle_lhs = oracle::diagonal_energy(oracle::box_average(f, 3U, 3), NormSpec(1.0), e);
    EXPECT_NEAR(r.lhs, oracle_lhs, 1e-12);
    EXPECT_NEAR(*smoothing_ratio(-2.5 * f, SmoothingRadius(3), NormSpec(1.0), e).ratio, *r.ratio, 1e-12);
  }
}

TEST(Pisier, WorkedExample) {
  const auto cube = TorusGeometry::hypercube(2);
  FunctionTable g(cube, 1);
  for (std::size_t e = 0; e < 4; ++e) g.at(e)[0] = SignVector::from_index(2, e)[0];
  const auto r = pisier_ratio(g, kL2, kP2);
  EXPECT_DOUBLE_EQ(r.lhs, 1.0);
  // Enumerate all 16 (eps, eps') pairs directly.
  double inner = 0.0;
  for (std::size_t e = 0; e < 4; ++e) {
    const auto eps = SignVector::from_index(2, e);
    for (std::size_t f = 0; f < 4; ++f) {
      const auto eps2 = SignVector::from_index(2, f);
      double s = 0.0;
      for (int j = 0; j < 2; ++j) s += eps2[j] * (flip_coordinate(eps, j)[0] - eps[0]);
      inner += s * s / 16.0;
    }
  }
  EXPECT_DOUBLE_EQ(inner, 4.0);
  const double expected = 1.0 / (std::pow(std::numbers::e * std::log(2.0), 2.0) * 4.0);
  EXPECT_NEAR(*r.ratio, expected, 1e-15);
  EXPECT_NEAR(*r.ratio, 0.0704, 5e-5);
}

TEST(Pisier, ConstantsAndErrors) {
  Rng rng(7);
  const auto g = FunctionTable::gaussian(TorusGeometry::hypercube(4), 2, rng);
  const std::vector<double> c{0.3, -2.0};
  const auto r1 = pisier_ratio(g, NormSpec(1.0), ExponentSpec(1.0));
  const auto r2 = pisier_ratio(g + FunctionTable::constant(g.geometry(), c), NormSpec(1.0), ExponentSpec(1.0));
  EXPECT_NEAR(*r1.ratio, *r2.ratio, 1e-12);
  EXPECT_TRUE(pisier_ratio(FunctionTable::constant(g.geometry(), c), kL2, kP2).degenerate);
  EXPECT_THROW(pisier_ratio(FunctionTable(TorusGeometry::hypercube(1), 1), kL2, kP2), std::invalid_argument);
  EXPECT_THROW(pisier_ratio(FunctionTable(TorusGeometry::hypercube(9), 1), kL2, kP2), std::invalid_argument);
  EXPECT_THROW(pisier_ratio(FunctionTable(TorusGeometry(2, 4), 1), kL2, kP2), std::invalid_argument);
}

TEST(Pisier, RandomTablesStayBelowOne) {
  Rng rng(8);
  for (int trial = 0; trial < 40; ++trial) {
    const int n = trial % 2 ? 4 : 6;
    const auto g = FunctionTable::gaussian(TorusGeometry::hypercube(n), 2, rng);
    for (const auto& norm : {NormSpec(1.0), NormSpec(2.0), NormSpec::infinity()})
      EXPECT_LE(*pisier_ratio(g, norm, ExponentSpec(trial % 3 ? 2.0 : 1.0)).ratio, 1.0);
  }
}

TEST(SchemeComposite, HoldsAndReducesForIdentitySmoothing) {
  Rng rng(9);
  const auto f = FunctionTable::gaussian(TorusGeometry(2, 8), 1, rng);
  const auto check = scheme_composite_check(f, SmoothingRadius(3), kL2, kP2);
  EXPECT_TRUE(check.report.holds(0.0));
  EXPECT_GT(check.margin, 0.0);

  const auto plain = scheme_composite_check(f, SmoothingRadius(1), kL2, kP2);
  EXPECT_EQ(plain.approximation_term, 0.0);
  // With Delta = identity the bound is 3^(p-1) (m/4)^p E||f(x+eps) - f(x-eps)||^p.
  EXPECT_NEAR(plain.report.rhs, 3.0 * 4.0 * oracle::diagonal_energy(f, kL2, kP2), 1e-12);
  EXPECT_TRUE(plain.report.holds(0.0));

  const std::vector<double> c{1.0};
  EXPECT_TRUE(scheme_composite_check(FunctionTable::constant(f.geometry(), c), SmoothingRadius(3), kL2, kP2).report.degenerate);
  EXPECT_THROW(scheme_composite_check(FunctionTable(TorusGeometry(2, 6), 1), SmoothingRadius(1), kL2, kP2),
               std::invalid_argument);
}

TEST(Invariance, TranslationAndScaling) {
  Rng rng(10);
  TorusGeometry g(2, 8);
  const auto f = FunctionTable::gaussian(g, 2, rng);
  const auto z = TorusPoint(g, {3, 5});
  const auto moved = translate(f, z);
  const auto scaled = -1.7 * f;
  const SmoothingRadius k(3);
  for (const auto& norm : {NormSpec(1.0), NormSpec(2.0), NormSpec::infinity()}) {
    for (double pv : {1.0, 1.5, 2.0}) {
      const ExponentSpec p(pv);
      auto same = [&](const RatioReport& a, const RatioReport& b) { EXPECT_NEAR(*a.ratio, *b.ratio, 1e-12 * *a.ratio); };
      same(scaled_enflo_ratio(f, norm, p), scaled_enflo_ratio(moved, norm, p));
      same(scaled_enflo_ratio(f, norm, p), scaled_enflo_ratio(scaled, norm, p));
      same(approximation_ratio(f, k, norm, p), approximation_ratio(moved, k, norm, p));
      same(approximation_ratio(f, k, norm, p), approximation_ratio(scaled, k, norm, p));
      same(smoothing_ratio(f, k, norm, p), smoothing_ratio(moved, k, norm, p));
      same(smoothing_ratio(f, k, norm, p), smoothing_ratio(scaled, k, norm, p));
      same(scheme_composite_check(f, k, norm, p).report, scheme_composite_check(moved, k, norm, p).report);
      EXPECT_NEAR(scaled_enflo_ratio(scaled, norm, p).lhs, std::pow(1.7, pv) * scaled_enflo_ratio(f, norm, p).lhs, 1e-10);
    }
  }
  const auto cube = TorusGeometry::hypercube(4);
  const auto h = FunctionTable::gaussian(cube, 1, rng);
  const auto h_moved = translate(h, TorusPoint(cube, {1, 0, 1, 1}));
  EXPECT_NEAR(*pisier_ratio(h, kL2, kP2).ratio, *pisier_ratio(h_moved, kL2, kP2).ratio, 1e-12);
  EXPECT_NEAR(*enflo_ratio(h, kL2, kP2).ratio, *enflo_ratio(h_moved, kL2, kP2).ratio, 1e-12);
}

TEST(MakeReport, PositiveOverZeroAborts) {
  EXPECT_THROW(make_report(RatioConfig{"x"}, 1.0, 0.0, 0.0), InvariantViolation);
  const auto r = make_report(RatioConfig{"x"}, 0.0, 0.0, 0.0);
  EXPECT_TRUE(r.degenerate);
  EXPECT_EQ(make_report(RatioConfig{"x"}, 1.0, 4.0, 0.0).ratio, 0.25);
}
