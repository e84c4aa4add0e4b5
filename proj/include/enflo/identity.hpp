#pragma once

// The decomposition of sum_j eps_j [E_j f(x+e_j) - E_j f(x-e_j)] into the
// signed subset sums R_{i,l} f(x, eps), and recovery of the scalar weights
// h_{i,l} of that decomposition by least squares.
//
// R_{i,l} f(x, eps) sums, over subsets S of size i and sign patterns delta on S
// that disagree with eps on exactly l coordinates,
//
//     D_S(x + k delta_S + eps_{S^c}) - D_S(x + k delta_S - eps_{S^c}),
//
// where D_S = Delta_{[n] \ S} f. The weights enter as
// h_{i,l} * k^(n-i-1) / (k+1)^(n-1) * R_{i,l}.

#include <bit>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "enflo/function_table.hpp"
#include "enflo/inequalities.hpp"
#include "enflo/operators.hpp"
#include "enflo/random.hpp"
#include "enflo/torus.hpp"

namespace enflo {

inline double binomial(int n, int r) {
  if (r < 0 || r > n) return 0.0;
  double out = 1.0;
  for (int t = 1; t <= r; ++t) out = out * (n - r + t) / t;
  return std::round(out);
}

inline double factorial(int n) {
  double out = 1.0;
  for (int t = 2; t <= n; ++t) out *= t;
  return out;
}

/// All delta in {-1,1}^|eps_on_s| whose inner product with eps_on_s is
/// |S| - 2l, found by enumerating every pattern.
inline std::vector<std::vector<int>> agreement_patterns(const std::vector<int>& eps_on_s, int l) {
  const int i = static_cast<int>(eps_on_s.size());
  std::vector<std::vector<int>> out;
  for (std::uint32_t bits = 0; bits < (1U << i); ++bits) {
    std::vector<int> delta(static_cast<std::size_t>(i));
    int inner = 0;
    for (int t = 0; t < i; ++t) {
      delta[static_cast<std::size_t>(t)] = (bits & (1U << t)) ? -1 : 1;
      inner += delta[static_cast<std::size_t>(t)] * eps_on_s[static_cast<std::size_t>(t)];
    }
    if (inner == i - 2 * l) out.push_back(std::move(delta));
  }
  return out;
}

/// Precomputed Delta_{[n] \ S} f for every S, for repeated R evaluations.
class RDecomposition {
 public:
  static constexpr int kMaxDimension = 10;

  RDecomposition(const FunctionTable& f, SmoothingRadius k) : geom_(f.geometry()), k_(k), d_(f.dim()) {
    k.check_against(geom_);
    const int n = geom_.n();
    if (n > kMaxDimension) throw std::invalid_argument("R decomposition supports n <= " + std::to_string(kMaxDimension));
    const std::uint32_t full = (1U << n) - 1U;
    partial_.reserve(std::size_t{1} << n);
    for (std::uint32_t s = 0; s <= full; ++s) partial_.push_back(delta(f, axes_from_mask(full & ~s, n), k));
  }

  const TorusGeometry& geometry() const { return geom_; }
  SmoothingRadius radius() const { return k_; }
  int dim() const { return d_; }

  /// Adds R_{i,l} f(x, eps) into `out` (length d).
  void accumulate(int i, int l, const TorusPoint& x, const SignVector& eps, std::span<double> out) const {
    const int n = geom_.n();
    check_indices(i, l, n);
    require_same_geometry(geom_, x.geometry());
    if (eps.n() != n) throw std::invalid_argument("sign vector dimension mismatch");
    std::vector<int> plus(static_cast<std::size_t>(n)), minus(static_cast<std::size_t>(n)), eps_on_s;
    for (std::uint32_t s = 0; s < (1U << n); ++s) {
      if (std::popcount(s) != i) continue;
      eps_on_s.clear();
      for (int a = 0; a < n; ++a)
        if (s & (1U << a)) eps_on_s.push_back(eps[a]);
      const FunctionTable& table = partial_[s];
      for (const auto& delta_s : agreement_patterns(eps_on_s, l)) {
        std::size_t t = 0;
        for (int a = 0; a < n; ++a) {
          const auto ua = static_cast<std::size_t>(a);
          if (s & (1U << a)) {
            plus[ua] = minus[ua] = x[a] + k_.value() * delta_s[t++];
          } else {
            plus[ua] = x[a] + eps[a];
            minus[ua] = x[a] - eps[a];
          }
        }
        auto hi = table.at(geom_.encode(plus));
        auto lo = table.at(geom_.encode(minus));
        for (int c = 0; c < d_; ++c) out[static_cast<std::size_t>(c)] += hi[static_cast<std::size_t>(c)] - lo[static_cast<std::size_t>(c)];
      }
    }
  }

  std::vector<double> value(int i, int l, const TorusPoint& x, const SignVector& eps) const {
    std::vector<double> out(static_cast<std::size_t>(d_), 0.0);
    accumulate(i, l, x, eps, out);
    return out;
  }

  static void check_indices(int i, int l, int n) {
    if (i < 0 || i > n || l < 0 || l > i)
      throw std::out_of_range("R indices need 0 <= l <= i <= n, got i=" + std::to_string(i) + " l=" + std::to_string(l));
  }

 private:
  TorusGeometry geom_;
  SmoothingRadius k_;
  int d_;
  std::vector<FunctionTable> partial_;  // indexed by the bitmask of S
};

/// R_{i,l} f(x, eps) evaluated from scratch.
inline std::vector<double> r_operator(const FunctionTable& f, int i, int l, SmoothingRadius k, const TorusPoint& x,
                                      const SignVector& eps) {
  RDecomposition::check_indices(i, l, f.geometry().n());
  return RDecomposition(f, k).value(i, l, x, eps);
}

/// Left side of the decomposition, with the E_j tables cached.
class IdentityLhs {
 public:
  IdentityLhs(const FunctionTable& f, SmoothingRadius k) : geom_(f.geometry()), d_(f.dim()) {
    k.check_against(geom_);
    for (int j = 0; j < geom_.n(); ++j) averaged_.push_back(ej_average(f, j, k));
  }

  std::vector<double> value(const TorusPoint& x, const SignVector& eps) const {
    require_same_geometry(geom_, x.geometry());
    if (eps.n() != geom_.n()) throw std::invalid_argument("sign vector dimension mismatch");
    std::vector<double> out(static_cast<std::size_t>(d_), 0.0);
    for (int j = 0; j < geom_.n(); ++j) {
      const TorusPoint e = TorusPoint::unit(geom_, j);
      auto hi = averaged_[static_cast<std::size_t>(j)].at(x + e);
      auto lo = averaged_[static_cast<std::size_t>(j)].at(x - e);
      for (int c = 0; c < d_; ++c)
        out[static_cast<std::size_t>(c)] += eps[j] * (hi[static_cast<std::size_t>(c)] - lo[static_cast<std::size_t>(c)]);
    }
    return out;
  }

 private:
  TorusGeometry geom_;
  int d_;
  std::vector<FunctionTable> averaged_;
};

/// sum_j eps_j [E_j f(x + e_j) - E_j f(x - e_j)].
inline std::vector<double> identity_lhs(const FunctionTable& f, SmoothingRadius k, const TorusPoint& x,
                                        const SignVector& eps) {
  return IdentityLhs(f, k).value(x, eps);
}

/// k^(n-i-1) / (k+1)^(n-1).
inline double identity_weight(int n, int i, int k) {
  return std::pow(static_cast<double>(k), n - i - 1) / std::pow(static_cast<double>(k + 1), n - 1);
}

/// Triangular storage: entry (i, l) sits at i(i+1)/2 + l.
inline std::size_t triangle_index(int i, int l) {
  return static_cast<std::size_t>(i) * static_cast<std::size_t>(i + 1) / 2 + static_cast<std::size_t>(l);
}

inline std::size_t triangle_size(int n) { return triangle_index(n + 1, 0); }

struct HCoefficients {
  int n = 0;
  int m = 0;
  int k = 0;
  std::vector<std::vector<double>> h;             // h[i][l], 0 <= l <= i <= n
  std::vector<std::vector<bool>> identifiable;    // same shape
  bool h00_pinned = false;  // h_{0,0} fixed to 1 because the data leave it free
  int rank = 0;
  double residual = 0.0;  // max held-out |lhs - rhs|
  double c_fit = 0.0;     // max |h_{i,l}| 2^i / ((i-l)! l!) over determined entries
  std::uint64_t seed = 0;
  std::size_t budget = 0;
  std::size_t holdout = 0;

  /// Sum_{i,l} h_{i,l} w_i R_{i,l}, the right side of the decomposition.
  std::vector<double> rhs(const RDecomposition& r, const TorusPoint& x, const SignVector& eps) const {
    std::vector<double> out(static_cast<std::size_t>(r.dim()), 0.0), term(out.size());
    for (int i = 0; i <= n; ++i) {
      const double w = identity_weight(n, i, k);
      for (int l = 0; l <= i; ++l) {
        const double coef = h[static_cast<std::size_t>(i)][static_cast<std::size_t>(l)];
        if (coef == 0.0) continue;
        std::fill(term.begin(), term.end(), 0.0);
        r.accumulate(i, l, x, eps, term);
        for (std::size_t c = 0; c < out.size(); ++c) out[c] += coef * w * term[c];
      }
    }
    return out;
  }
};

inline void to_json(nlohmann::json& j, const HCoefficients& h) {
  j = nlohmann::json{{"n", h.n},
                     {"m", h.m},
                     {"k", h.k},
                     {"h", h.h},
                     {"identifiable", h.identifiable},
                     {"h00_pinned", h.h00_pinned},
                     {"rank", h.rank},
                     {"residual", h.residual},
                     {"c_fit", h.c_fit},
                     {"seed", h.seed},
                     {"budget", h.budget},
                     {"holdout", h.holdout}};
}

inline HCoefficients h_coefficients_from_json(const nlohmann::json& j) {
  HCoefficients h;
  h.n = j.at("n").get<int>();
  h.m = j.at("m").get<int>();
  h.k = j.at("k").get<int>();
  h.h = j.at("h").get<std::vector<std::vector<double>>>();
  h.identifiable = j.at("identifiable").get<std::vector<std::vector<bool>>>();
  h.h00_pinned = j.at("h00_pinned").get<bool>();
  h.rank = j.at("rank").get<int>();
  h.residual = j.at("residual").get<double>();
  h.c_fit = j.at("c_fit").get<double>();
  h.seed = j.at("seed").get<std::uint64_t>();
  h.budget = j.at("budget").get<std::size_t>();
  h.holdout = j.at("holdout").get<std::size_t>();
  return h;
}

namespace detail {

struct IdentitySample {
  double lhs = 0.0;
  std::vector<double> features;  // triangle order
};

/// One scalar Gaussian table with a uniform (x, eps).
inline IdentitySample draw_identity_sample(const TorusGeometry& g, SmoothingRadius k, Rng& rng) {
  const FunctionTable f = FunctionTable::gaussian(g, 1, rng);
  const TorusPoint x = TorusPoint::from_index(g, static_cast<std::size_t>(rng.below(g.size())));
  std::vector<int> signs(static_cast<std::size_t>(g.n()));
  for (int& s : signs) s = rng.sign();
  const SignVector eps(std::move(signs));

  const RDecomposition r(f, k);
  IdentitySample out;
  out.lhs = IdentityLhs(f, k).value(x, eps)[0];
  out.features.resize(triangle_size(g.n()));
  for (int i = 0; i <= g.n(); ++i) {
    const double w = identity_weight(g.n(), i, k.value());
    for (int l = 0; l <= i; ++l) out.features[triangle_index(i, l)] = w * r.value(i, l, x, eps)[0];
  }
  return out;
}

}  // namespace detail

/// Relative singular-value cutoff for rank decisions.
inline constexpr double kRankTolerance = 1e-9;

/// Fits h_{i,l} so that the decomposition holds on random scalar (f, x, eps).
/// Entries are identifiable when the null space of the feature matrix has no
/// component along them. If h_{0,0} is not identifiable it is pinned to 1 and
/// the minimum-norm solution is taken for the rest.
inline HCoefficients fit_h_coefficients(const TorusGeometry& g, SmoothingRadius k, std::size_t budget,
                                        std::uint64_t seed, std::size_t holdout = 200) {
  k.check_against(g);
  const int n = g.n();
  const std::size_t unknowns = triangle_size(n);
  if (budget < 4 * unknowns)
    throw std::invalid_argument("insufficient samples: need at least " + std::to_string(4 * unknowns) + ", got " +
                                std::to_string(budget));

  Rng fit_rng(seed, 0);
  Eigen::MatrixXd a(static_cast<Eigen::Index>(budget), static_cast<Eigen::Index>(unknowns));
  Eigen::VectorXd b(static_cast<Eigen::Index>(budget));
  for (std::size_t s = 0; s < budget; ++s) {
    auto sample = detail::draw_identity_sample(g, k, fit_rng);
    b(static_cast<Eigen::Index>(s)) = sample.lhs;
    for (std::size_t c = 0; c < unknowns; ++c) a(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(c)) = sample.features[c];
  }

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0 || sv(0) == 0.0) throw std::runtime_error("feature matrix has rank 0");
  svd.setThreshold(kRankTolerance);
  const auto rank = svd.rank();

  HCoefficients out;
  out.n = n;
  out.m = g.m();
  out.k = k.value();
  out.rank = static_cast<int>(rank);
  out.seed = seed;
  out.budget = budget;
  out.holdout = holdout;

  const Eigen::MatrixXd null_space = svd.matrixV().rightCols(static_cast<Eigen::Index>(unknowns) - rank);
  std::vector<bool> determined(unknowns);
  for (std::size_t c = 0; c < unknowns; ++c)
    determined[c] = null_space.cols() == 0 || null_space.row(static_cast<Eigen::Index>(c)).norm() < 1e-6;

  Eigen::VectorXd solution(static_cast<Eigen::Index>(unknowns));
  if (determined[0]) {
    solution = svd.solve(b);
  } else {
    out.h00_pinned = true;
    const Eigen::MatrixXd rest = a.rightCols(static_cast<Eigen::Index>(unknowns) - 1);
    Eigen::JacobiSVD<Eigen::MatrixXd> reduced(rest, Eigen::ComputeThinU | Eigen::ComputeThinV);
    reduced.setThreshold(kRankTolerance);
    solution(0) = 1.0;
    solution.tail(static_cast<Eigen::Index>(unknowns) - 1) = reduced.solve(b - a.col(0));
  }

  out.h.resize(static_cast<std::size_t>(n + 1));
  out.identifiable.resize(static_cast<std::size_t>(n + 1));
  for (int i = 0; i <= n; ++i) {
    for (int l = 0; l <= i; ++l) {
      const std::size_t c = triangle_index(i, l);
      const double v = solution(static_cast<Eigen::Index>(c));
      out.h[static_cast<std::size_t>(i)].push_back(std::fabs(v) < 1e-13 ? 0.0 : v);
      out.identifiable[static_cast<std::size_t>(i)].push_back(determined[c]);
      if (determined[c] || c == 0) {
        const double shape = factorial(i - l) * factorial(l) / std::ldexp(1.0, i);
        out.c_fit = std::max(out.c_fit, std::fabs(v) / shape);
      }
    }
  }

  Rng check_rng(seed, 1);
  for (std::size_t s = 0; s < holdout; ++s) {
    auto sample = detail::draw_identity_sample(g, k, check_rng);
    double fitted = 0.0;
    for (std::size_t c = 0; c < unknowns; ++c) fitted += solution(static_cast<Eigen::Index>(c)) * sample.features[c];
    out.residual = std::max(out.residual, std::fabs(sample.lhs - fitted));
  }
  return out;
}

struct IdentityResidual {
  double max_residual = 0.0;
  std::size_t evaluations = 0;
  double tolerance = 0.0;
  bool passed = false;
};

namespace detail {

inline void require_matching_fit(const HCoefficients& h, int n, SmoothingRadius k) {
  if (h.n != n || h.k != k.value())
    throw std::invalid_argument("coefficients fitted for (n=" + std::to_string(h.n) + ", k=" + std::to_string(h.k) +
                                ") used with (n=" + std::to_string(n) + ", k=" + std::to_string(k.value()) + ")");
}

inline double gap(const std::vector<double>& a, const std::vector<double>& b) {
  double out = 0.0;
  for (std::size_t c = 0; c < a.size(); ++c) out = std::max(out, std::fabs(a[c] - b[c]));
  return out;
}

}  // namespace detail

/// Max over every (x, eps) of the componentwise gap between the two sides, for one f.
inline IdentityResidual verify_identity(const HCoefficients& h, const FunctionTable& f, SmoothingRadius k,
                                        double tolerance) {
  const auto& g = f.geometry();
  detail::require_matching_fit(h, g.n(), k);
  const RDecomposition r(f, k);
  const IdentityLhs lhs(f, k);
  IdentityResidual out;
  out.tolerance = tolerance;
  for (std::size_t xi = 0; xi < g.size(); ++xi) {
    const TorusPoint x = TorusPoint::from_index(g, xi);
    for (std::size_t e = 0; e < hypercube_size(g.n()); ++e) {
      const SignVector eps = SignVector::from_index(g.n(), e);
      out.max_residual = std::max(out.max_residual, detail::gap(lhs.value(x, eps), h.rhs(r, x, eps)));
      ++out.evaluations;
    }
  }
  out.passed = out.max_residual < tolerance;
  return out;
}

/// Same check over `samples` fresh scalar Gaussian (f, x, eps).
inline IdentityResidual verify_identity_sampled(const HCoefficients& h, const TorusGeometry& g, SmoothingRadius k,
                                                double tolerance, std::size_t samples, std::uint64_t seed) {
  detail::require_matching_fit(h, g.n(), k);
  Rng rng(seed, 2);
  IdentityResidual out;
  out.tolerance = tolerance;
  for (std::size_t s = 0; s < samples; ++s) {
    const FunctionTable f = FunctionTable::gaussian(g, 1, rng);
    const TorusPoint x = TorusPoint::from_index(g, static_cast<std::size_t>(rng.below(g.size())));
    std::vector<int> signs(static_cast<std::size_t>(g.n()));
    for (int& sg : signs) sg = rng.sign();
    const SignVector eps(std::move(signs));
    const RDecomposition r(f, k);
    out.max_residual = std::max(out.max_residual, detail::gap(IdentityLhs(f, k).value(x, eps), h.rhs(r, x, eps)));
    ++out.evaluations;
  }
  out.passed = out.max_residual < tolerance;
  return out;
}

/// E_{x,eps}||R_{i,l} f||^p against (log n)^p C(n,i)^p C(i,l)^p edge_energy.
inline RatioReport r_moment(const RDecomposition& r, const FunctionTable& f, int i, int l, const NormSpec& norm,
                            const ExponentSpec& p) {
  const auto& g = f.geometry();
  require_same_geometry(g, r.geometry());
  const int n = g.n();
  RDecomposition::check_indices(i, l, n);
  if (n < 2) throw std::invalid_argument("r_moment needs n >= 2 (log 1 = 0)");
  const std::size_t cube = hypercube_size(n);
  std::vector<double> value(static_cast<std::size_t>(f.dim()));
  double lhs = 0.0;
  for (std::size_t xi = 0; xi < g.size(); ++xi) {
    const TorusPoint x = TorusPoint::from_index(g, xi);
    for (std::size_t e = 0; e < cube; ++e) {
      std::fill(value.begin(), value.end(), 0.0);
      r.accumulate(i, l, x, SignVector::from_index(n, e), value);
      lhs += norm_power(norm, p, value);
    }
  }
  lhs /= static_cast<double>(g.size()) * static_cast<double>(cube);
  const double factor = p.power(std::log(static_cast<double>(n)) * binomial(n, i) * binomial(i, l));
  RatioConfig cfg{"r_moment_" + std::to_string(i) + "_" + std::to_string(l), n, g.m(), r.radius().value(), p.p(),
                  norm.q(), f.dim(), 0};
  const double floor = zero_floor(p, f.max_abs());
  const double edges = edge_energy(f, norm, p);
  return make_report(std::move(cfg), lhs, edges <= floor ? 0.0 : factor * edges, floor);
}

inline RatioReport r_moment(const FunctionTable& f, int i, int l, SmoothingRadius k, const NormSpec& norm,
                            const ExponentSpec& p) {
  return r_moment(RDecomposition(f, k), f, i, l, norm, p);
}

}  // namespace enflo
