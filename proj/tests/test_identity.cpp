#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "enflo/identity.hpp"
#include "oracle.hpp"

using namespace enflo;

namespace {

std::vector<int> signs_of(const SignVector& e) {
  std::vector<int> out;
  for (int j = 0; j < e.n(); ++j) out.push_back(e[j]);
  return out;
}

double gap(const std::vector<double>& a, const std::vector<double>& b) {
  double out = 0.0;
  for (std::size_t c = 0; c < a.size(); ++c) out = std::max(out, std::fabs(a[c] - b[c]));
  return out;
}

}  // namespace

TEST(AgreementPatterns, CountIsBinomialExhaustive) {
  for (int i = 0; i <= 4; ++i) {
    for (std::size_t e = 0; e < (std::size_t{1} << i); ++e) {
      const auto eps = i == 0 ? std::vector<int>{} : signs_of(SignVector::from_index(i, e));
      for (int l = 0; l <= i; ++l) {
        const auto patterns = agreement_patterns(eps, l);
        EXPECT_EQ(patterns.size(), static_cast<std::size_t>(binomial(i, l)));
        for (const auto& delta : patterns) {
          int disagreements = 0;
          for (int t = 0; t < i; ++t) disagreements += delta[static_cast<std::size_t>(t)] != eps[static_cast<std::size_t>(t)];
          EXPECT_EQ(disagreements, l);
        }
      }
    }
  }
}

TEST(ROperator, ZeroZeroTermIsFullDiagonalDifference) {
  Rng rng(1);
  TorusGeometry g(2, 8);
  const SmoothingRadius k(3);
  const auto f = FunctionTable::gaussian(g, 2, rng);
  const auto full = delta(f, all_axes(2), k);
  for (std::size_t xi = 0; xi < g.size(); xi += 5) {
    const auto x = TorusPoint::from_index(g, xi);
    for (std::size_t e = 0; e < 4; ++e) {
      const auto eps = SignVector::from_index(2, e);
      const auto r = r_operator(f, 0, 0, k, x, eps);
      const auto hi = full.at(x + eps.as_point(g));
      const auto lo = full.at(x - eps.as_point(g));
      for (int c = 0; c < 2; ++c) EXPECT_NEAR(r[static_cast<std::size_t>(c)], hi[static_cast<std::size_t>(c)] - lo[static_cast<std::size_t>(c)], 1e-14);
    }
  }
  EXPECT_NEAR(identity_weight(3, 0, 3), std::pow(3.0 / 4.0, 2.0), 1e-15);
}

TEST(ROperator, TopLevelVanishesExhaustive) {
  Rng rng(2);
  for (int n = 1; n <= 3; ++n) {
    TorusGeometry g(n, 8);
    const auto f = FunctionTable::gaussian(g, 1, rng);
    const RDecomposition r(f, SmoothingRadius(3));
    for (std::size_t xi = 0; xi < g.size(); ++xi)
      for (std::size_t e = 0; e < hypercube_size(n); ++e)
        for (int l = 0; l <= n; ++l)
          EXPECT_EQ(r.value(n, l, TorusPoint::from_index(g, xi), SignVector::from_index(n, e))[0], 0.0);
  }
}

TEST(ROperator, ConstantGivesZeroAndIndicesChecked) {
  TorusGeometry g(2, 8);
  const std::vector<double> c{4.0};
  const auto f = FunctionTable::constant(g, c);
  const SignVector eps({1, -1});
  EXPECT_EQ(r_operator(f, 1, 0, SmoothingRadius(3), TorusPoint(g, {2, 5}), eps)[0], 0.0);
  EXPECT_THROW(r_operator(f, 3, 0, SmoothingRadius(3), TorusPoint(g), eps), std::out_of_range);
  EXPECT_THROW(r_operator(f, 1, 2, SmoothingRadius(3), TorusPoint(g), eps), std::out_of_range);
  EXPECT_THROW(r_operator(f, -1, 0, SmoothingRadius(3), TorusPoint(g), eps), std::out_of_range);
  EXPECT_THROW(r_operator(f, 0, 0, SmoothingRadius(5), TorusPoint(g), eps), std::invalid_argument);
}

TEST(ROperator, LinearInF) {
  Rng rng(3);
  TorusGeometry g(3, 8);
  const SmoothingRadius k(3);
  for (int trial = 0; trial < 10; ++trial) {
    const auto f = FunctionTable::gaussian(g, 2, rng);
    const auto h = FunctionTable::gaussian(g, 2, rng);
    const double a = rng.gaussian();
    const auto x = TorusPoint::from_index(g, rng.below(g.size()));
    const auto eps = SignVector::from_index(3, rng.below(8));
    const int i = static_cast<int>(rng.below(4));
    const int l = static_cast<int>(rng.below(static_cast<std::uint64_t>(i + 1)));
    const auto lhs = r_operator(f + a * h, i, l, k, x, eps);
    auto rhs = r_operator(f, i, l, k, x, eps);
    const auto rh = r_operator(h, i, l, k, x, eps);
    for (std::size_t c = 0; c < rhs.size(); ++c) rhs[c] += a * rh[c];
    EXPECT_LT(gap(lhs, rhs), 1e-12);
  }
}

TEST(ROperator, MatchesBruteForceOracle) {
  Rng rng(4);
  TorusGeometry g(3, 8);
  const SmoothingRadius k(3);
  const auto f = FunctionTable::gaussian(g, 2, rng);
  const RDecomposition r(f, k);
  const auto partial = oracle::partial_averages(f, 3);
  for (int trial = 0; trial < 60; ++trial) {
    const auto x = TorusPoint::from_index(g, rng.below(g.size()));
    const auto eps = SignVector::from_index(3, rng.below(8));
    const int i = static_cast<int>(rng.below(4));
    const int l = static_cast<int>(rng.below(static_cast<std::uint64_t>(i + 1)));
    EXPECT_LT(gap(r.value(i, l, x, eps), oracle::r_value(partial, 3, i, l, x.coords(), signs_of(eps))), 1e-12);
  }
}

TEST(IdentityLhs, Examples) {
  Rng rng(5);
  TorusGeometry line(1, 8);
  for (int kv : {1, 3}) {
    const SmoothingRadius k(kv);
    const auto f = FunctionTable::gaussian(line, 2, rng);
    for (std::size_t xi = 0; xi < 8; ++xi)
      for (std::size_t e = 0; e < 2; ++e) {
        const auto x = TorusPoint::from_index(line, xi);
        const auto eps = SignVector::from_index(1, e);
        EXPECT_LT(gap(identity_lhs(f, k, x, eps), r_operator(f, 0, 0, k, x, eps)), 1e-14);
      }
  }
  TorusGeometry g(2, 8);
  const std::vector<double> c{1.0, 2.0};
  const auto constant = FunctionTable::constant(g, c);
  EXPECT_LT(gap(identity_lhs(constant, SmoothingRadius(3), TorusPoint(g), SignVector({1, -1})), {0.0, 0.0}), 1e-14);

  const auto f = FunctionTable::gaussian(g, 1, rng);
  const IdentityLhs lhs(f, SmoothingRadius(3));
  for (std::size_t xi = 0; xi < g.size(); ++xi)
    for (std::size_t e = 0; e < 4; ++e) {
      const auto x = TorusPoint::from_index(g, xi);
      const auto eps = SignVector::from_index(2, e);
      EXPECT_NEAR(lhs.value(x, -eps)[0], -lhs.value(x, eps)[0], 1e-14);
    }
}

TEST(FitH, OneDimensional) {
  const auto h = fit_h_coefficients(TorusGeometry(1, 8), SmoothingRadius(3), 40, 7);
  EXPECT_NEAR(h.h[0][0], 1.0, 1e-6);
  EXPECT_FALSE(h.h00_pinned);
  EXPECT_TRUE(h.identifiable[0][0]);
  EXPECT_FALSE(h.identifiable[1][0]);
  EXPECT_FALSE(h.identifiable[1][1]);
  EXPECT_EQ(h.rank, 1);
  EXPECT_LT(h.residual, 1e-10);
  Rng rng(1);
  const auto f = FunctionTable::gaussian(TorusGeometry(1, 8), 3, rng);
  EXPECT_LT(verify_identity(h, f, SmoothingRadius(3), 1e-10).max_residual, 1e-10);
}

TEST(FitH, ThreeDimensionalValues) {
  const TorusGeometry g(3, 8);
  const auto h = fit_h_coefficients(g, SmoothingRadius(3), 120, 11);
  EXPECT_EQ(h.rank, 6);
  const std::vector<std::vector<double>> expected{{1.0}, {0.5, 0.5}, {1.0 / 6, 1.0 / 3, 1.0 / 6}};
  for (int i = 0; i <= 2; ++i)
    for (int l = 0; l <= i; ++l) {
      EXPECT_TRUE(h.identifiable[static_cast<std::size_t>(i)][static_cast<std::size_t>(l)]);
      EXPECT_NEAR(h.h[static_cast<std::size_t>(i)][static_cast<std::size_t>(l)],
                  expected[static_cast<std::size_t>(i)][static_cast<std::size_t>(l)], 1e-8);
    }
  for (int l = 0; l <= 3; ++l) EXPECT_FALSE(h.identifiable[3][static_cast<std::size_t>(l)]);
  EXPECT_LT(h.residual, 1e-8);
  for (int i = 0; i <= 2; ++i)
    for (int l = 0; l <= i; ++l)
      EXPECT_LE(std::fabs(h.h[static_cast<std::size_t>(i)][static_cast<std::size_t>(l)]),
                h.c_fit * factorial(i - l) * factorial(l) / std::ldexp(1.0, i) * (1 + 1e-12));
}

TEST(FitH, HeldOutResidualAcrossCells) {
  for (int n = 1; n <= 3; ++n) {
    for (int kv : {1, 3}) {
      const TorusGeometry g(n, 8);
      const auto h = fit_h_coefficients(g, SmoothingRadius(kv), 100, 100 + static_cast<std::uint64_t>(n));
      EXPECT_NEAR(h.h[0][0], 1.0, 1e-6) << n << " " << kv;
      EXPECT_EQ(h.h00_pinned, kv == 1 && n >= 2) << n << " " << kv;
      EXPECT_LT(h.residual, 1e-8) << n << " " << kv;
      const auto check = verify_identity_sampled(h, g, SmoothingRadius(kv), 1e-8, 200, 5);
      EXPECT_TRUE(check.passed) << n << " " << kv << " " << check.max_residual;
      EXPECT_EQ(check.evaluations, 200u);
    }
  }
}

TEST(FitH, ExhaustiveVerificationAndConstants) {
  const TorusGeometry g(2, 8);
  const auto h = fit_h_coefficients(g, SmoothingRadius(3), 60, 3);
  Rng rng(8);
  const auto f = FunctionTable::gaussian(g, 2, rng);
  const auto res = verify_identity(h, f, SmoothingRadius(3), 1e-8);
  EXPECT_TRUE(res.passed);
  EXPECT_EQ(res.evaluations, 64u * 4u);
  const std::vector<double> c{3.0, -1.0};
  EXPECT_LT(verify_identity(h, FunctionTable::constant(g, c), SmoothingRadius(3), 1e-12).max_residual, 1e-12);
  EXPECT_THROW(verify_identity(h, f, SmoothingRadius(1), 1e-8), std::invalid_argument);
  EXPECT_THROW(verify_identity(h, FunctionTable::gaussian(TorusGeometry(3, 8), 1, rng), SmoothingRadius(3), 1e-8),
               std::invalid_argument);
}

TEST(FitH, Errors) {
  EXPECT_THROW(fit_h_coefficients(TorusGeometry(2, 8), SmoothingRadius(3), 23, 1), std::invalid_argument);
  EXPECT_NO_THROW(fit_h_coefficients(TorusGeometry(2, 8), SmoothingRadius(3), 24, 1));
  EXPECT_THROW(fit_h_coefficients(TorusGeometry(2, 6), SmoothingRadius(3), 100, 1), std::invalid_argument);
}

TEST(FitH, JsonRoundTripAndDeterminism) {
  const auto h = fit_h_coefficients(TorusGeometry(2, 8), SmoothingRadius(3), 48, 9);
  const nlohmann::json j = h;
  const auto back = h_coefficients_from_json(nlohmann::json::parse(j.dump()));
  EXPECT_EQ(back.h, h.h);
  EXPECT_EQ(back.identifiable, h.identifiable);
  EXPECT_EQ(back.seed, 9u);
  EXPECT_EQ(back.budget, 48u);
  EXPECT_EQ(nlohmann::json(fit_h_coefficients(TorusGeometry(2, 8), SmoothingRadius(3), 48, 9)).dump(), j.dump());
}

TEST(FitH, MatchesGoldenFiles) {
  const struct {
    int n, k, m;
  } cells[] = {{1, 3, 8}, {2, 1, 8}, {2, 3, 8}, {3, 3, 8}};
  for (const auto& cell : cells) {
    const std::string path = std::string(ENFLO_GOLDEN_DIR) + "/h_coeffs_" + std::to_string(cell.n) + "_" +
                             std::to_string(cell.k) + ".json";
    std::ifstream in(path);
    ASSERT_TRUE(in) << path;
    const auto golden = h_coefficients_from_json(nlohmann::json::parse(in));
    const auto fit = fit_h_coefficients(TorusGeometry(cell.n, cell.m), SmoothingRadius(cell.k), golden.budget, golden.seed,
                                        golden.holdout);
    EXPECT_EQ(fit.identifiable, golden.identifiable) << path;
    EXPECT_EQ(fit.h00_pinned, golden.h00_pinned) << path;
    for (std::size_t i = 0; i < fit.h.size(); ++i)
      for (std::size_t l = 0; l <= i; ++l) EXPECT_NEAR(fit.h[i][l], golden.h[i][l], 1e-9) << path;
  }
}

TEST(RMoment, Examples) {
  Rng rng(10);
  TorusGeometry g(2, 8);
  const auto f = FunctionTable::gaussian(g, 1, rng);
  const NormSpec l2(2.0);
  const ExponentSpec p2(2.0);
  const auto top = r_moment(f, 2, 1, SmoothingRadius(3), l2, p2);
  EXPECT_EQ(top.lhs, 0.0);
  EXPECT_EQ(*top.ratio, 0.0);
  const std::vector<double> c{1.0};
  EXPECT_TRUE(r_moment(FunctionTable::constant(g, c), 1, 0, SmoothingRadius(3), l2, p2).degenerate);
  EXPECT_THROW(r_moment(FunctionTable::gaussian(TorusGeometry(1, 8), 1, rng), 0, 0, SmoothingRadius(3), l2, p2),
               std::invalid_argument);
  EXPECT_THROW(r_moment(f, 3, 0, SmoothingRadius(3), l2, p2), std::out_of_range);

  const auto partial = oracle::partial_averages(f, 3);
  for (int i = 0; i <= 2; ++i)
    for (int l = 0; l <= i; ++l)
      EXPECT_NEAR(*r_moment(f, i, l, SmoothingRadius(3), l2, p2).ratio,
                  oracle::r_moment_ratio(partial, f, 3, i, l, l2, p2), 1e-12);
}

TEST(RMoment, FiniteAcrossSeeds) {
  TorusGeometry g(2, 8);
  double lo = INFINITY, hi = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    const auto r = r_moment(FunctionTable::gaussian(g, 1, rng), 1, 0, SmoothingRadius(3), NormSpec(2.0), ExponentSpec(2.0));
    ASSERT_TRUE(r.ratio.has_value());
    lo = std::min(lo, *r.ratio);
    hi = std::max(hi, *r.ratio);
  }
  EXPECT_GT(lo, 0.0);
  EXPECT_LT(hi, 3.0 * lo);
}
