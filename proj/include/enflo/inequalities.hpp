#pragma once

// Exact evaluators for both sides of the type inequalities. Every expectation
// is a full sum over the grid (and over the sign cube where one appears).

#include <bit>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "enflo/function_table.hpp"
#include "enflo/norm.hpp"
#include "enflo/operators.hpp"
#include "enflo/torus.hpp"

namespace enflo {

/// Raised when an evaluation would contradict a proven inequality outright,
/// i.e. a strictly positive left side against a vanishing right side.
class InvariantViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

struct RatioConfig {
  std::string evaluator;
  int n = 0;
  int m = 0;  // 0 when the evaluator has no torus (rademacher)
  int k = 0;  // 0 when the evaluator has no smoothing radius
  double p = 2.0;
  double q = 2.0;
  int d = 1;
  std::uint64_t seed = 0;
};

struct RatioReport {
  RatioConfig config;
  double lhs = 0.0;
  double rhs = 0.0;
  std::optional<double> ratio;  // empty iff degenerate
  bool degenerate = false;

  /// lhs <= rhs up to relative slack.
  bool holds(double rel_tol) const { return lhs <= rhs * (1.0 + rel_tol); }
};

/// Values at or below this multiple of the table scale count as exact zeros.
inline constexpr double kZeroTolerance = 1e-9;

inline double zero_floor(const ExponentSpec& p, double scale) { return p.power(kZeroTolerance * scale); }

inline RatioReport make_report(RatioConfig cfg, double lhs, double rhs, double floor) {
  RatioReport r;
  r.config = std::move(cfg);
  r.lhs = lhs <= floor ? 0.0 : lhs;
  r.rhs = rhs <= floor ? 0.0 : rhs;
  if (r.rhs == 0.0) {
    if (r.lhs > 0.0)
      throw InvariantViolation(r.config.evaluator + ": lhs = " + std::to_string(lhs) + " > 0 with rhs = 0");
    r.degenerate = true;
    return r;
  }
  r.ratio = r.lhs / r.rhs;
  return r;
}

namespace detail {

inline RatioConfig echo(std::string name, const FunctionTable& f, int k, const NormSpec& norm, const ExponentSpec& p) {
  return RatioConfig{std::move(name), f.geometry().n(), f.geometry().m(), k, p.p(), norm.q(), f.dim(), 0};
}

/// Index map x -> index(x + offset).
inline std::vector<std::size_t> shift_map(const TorusGeometry& g, const std::vector<int>& offset) {
  std::vector<std::size_t> map(g.size());
  std::vector<int> x;
  for (std::size_t i = 0; i < g.size(); ++i) {
    g.decode_into(i, x);
    for (int a = 0; a < g.n(); ++a) x[static_cast<std::size_t>(a)] += offset[static_cast<std::size_t>(a)];
    map[i] = g.encode(x);
  }
  return map;
}

/// Sum over x of ||f(plus[x]) - f(minus[x])||^p.
inline double sum_diff_power(const FunctionTable& f, const std::vector<std::size_t>& plus,
                             const std::vector<std::size_t>& minus, const NormSpec& norm, const ExponentSpec& p) {
  const std::size_t d = static_cast<std::size_t>(f.dim());
  std::vector<double> diff(d);
  double total = 0.0;
  for (std::size_t i = 0; i < f.points(); ++i) {
    auto a = f.at(plus[i]);
    auto b = f.at(minus[i]);
    for (std::size_t c = 0; c < d; ++c) diff[c] = a[c] - b[c];
    total += norm_power(norm, p, diff);
  }
  return total;
}

inline std::vector<std::size_t> identity_map(const TorusGeometry& g) {
  std::vector<std::size_t> map(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) map[i] = i;
  return map;
}

/// E_x ||f(x) - g(x)||^p for two tables on the same grid.
inline double mean_gap_power(const FunctionTable& f, const FunctionTable& g, const NormSpec& norm,
                             const ExponentSpec& p) {
  f.require_compatible(g);
  const std::size_t d = static_cast<std::size_t>(f.dim());
  std::vector<double> diff(d);
  double total = 0.0;
  for (std::size_t i = 0; i < f.points(); ++i) {
    auto a = f.at(i);
    auto b = g.at(i);
    for (std::size_t c = 0; c < d; ++c) diff[c] = a[c] - b[c];
    total += norm_power(norm, p, diff);
  }
  return total / static_cast<double>(f.points());
}

/// E_{x,eps} ||g(x + eps) - g(x - eps)||^p.
inline double diagonal_energy(const FunctionTable& g, const NormSpec& norm, const ExponentSpec& p) {
  const auto& geo = g.geometry();
  const std::size_t cube = hypercube_size(geo.n());
  double total = 0.0;
  for (std::size_t e = 0; e < cube; ++e) {
    const SignVector eps = SignVector::from_index(geo.n(), e);
    total += sum_diff_power(g, shift_map(geo, eps.signs()), shift_map(geo, (-eps).signs()), norm, p);
  }
  return total / (static_cast<double>(geo.size()) * static_cast<double>(cube));
}

/// E_{x,eps} ||f(x + (m/2) eps) - f(x)||^p.
inline double half_shift_energy(const FunctionTable& f, const NormSpec& norm, const ExponentSpec& p) {
  const auto& g = f.geometry();
  const std::size_t cube = hypercube_size(g.n());
  const auto self = identity_map(g);
  double total = 0.0;
  for (std::size_t e = 0; e < cube; ++e) {
    std::vector<int> offset = SignVector::from_index(g.n(), e).signs();
    for (int& c : offset) c *= g.m() / 2;
    total += sum_diff_power(f, shift_map(g, offset), self, norm, p);
  }
  return total / (static_cast<double>(g.size()) * static_cast<double>(cube));
}

inline void require_hypercube(const FunctionTable& f, const char* who) {
  if (!f.geometry().is_hypercube()) throw std::invalid_argument(std::string(who) + " needs a hypercube-domain table (m = 2)");
}

inline double log_n(int n) { return std::log(static_cast<double>(n)); }

}  // namespace detail

/// E_eps ||sum_j eps_j x_j||^p against sum_j ||x_j||^p.
inline RatioReport rademacher_ratio(const std::vector<std::vector<double>>& vectors, const NormSpec& norm,
                                    const ExponentSpec& p) {
  if (vectors.empty()) throw std::invalid_argument("rademacher_ratio needs at least one vector");
  const int n = static_cast<int>(vectors.size());
  const std::size_t d = vectors.front().size();
  if (d == 0) throw std::invalid_argument("vectors must be non-empty");
  double scale = 0.0;
  for (const auto& v : vectors) {
    if (v.size() != d) throw std::invalid_argument("vectors must share one dimension");
    for (double x : v) {
      if (!std::isfinite(x)) throw std::invalid_argument("vectors must be finite");
      scale = std::fmax(scale, std::fabs(x));
    }
  }
  // sums[mask] = sum_j s_j x_j with s_j = +1 iff bit j of mask is set.
  const std::size_t cube = hypercube_size(n);
  std::vector<double> sums(cube * d, 0.0);
  for (std::size_t c = 0; c < d; ++c)
    for (const auto& v : vectors) sums[c] -= v[c];
  double lhs = norm_power(norm, p, std::span<const double>(sums.data(), d));
  for (std::size_t mask = 1; mask < cube; ++mask) {
    const int low = std::countr_zero(mask);
    const std::size_t prev = mask & (mask - 1);
    for (std::size_t c = 0; c < d; ++c)
      sums[mask * d + c] = sums[prev * d + c] + 2.0 * vectors[static_cast<std::size_t>(low)][c];
    lhs += norm_power(norm, p, std::span<const double>(sums.data() + mask * d, d));
  }
  lhs /= static_cast<double>(cube);
  double rhs = 0.0;
  for (const auto& v : vectors) rhs += norm_power(norm, p, v);
  RatioConfig cfg{"rademacher", n, 0, 0, p.p(), norm.q(), static_cast<int>(d), 0};
  return make_report(std::move(cfg), lhs, rhs, zero_floor(p, scale));
}

/// Sum over axes of E_x ||f(x + e_j) - f(x)||^p.
inline double edge_energy(const FunctionTable& f, const NormSpec& norm, const ExponentSpec& p) {
  const auto& g = f.geometry();
  const auto self = detail::identity_map(g);
  double total = 0.0;
  for (int a = 0; a < g.n(); ++a) {
    std::vector<int> e(static_cast<std::size_t>(g.n()), 0);
    e[static_cast<std::size_t>(a)] = 1;
    total += detail::sum_diff_power(f, detail::shift_map(g, e), self, norm, p);
  }
  return total / static_cast<double>(g.size());
}

/// Enflo inequality on {-1,1}^n: diagonal against coordinate flips.
inline RatioReport enflo_ratio(const FunctionTable& f, const NormSpec& norm, const ExponentSpec& p) {
  detail::require_hypercube(f, "enflo_ratio");
  const auto& g = f.geometry();
  const std::size_t cube = g.size();
  std::vector<std::size_t> self = detail::identity_map(g), antipode(cube), flip(cube);
  for (std::size_t i = 0; i < cube; ++i) antipode[i] = i ^ (cube - 1);
  const double lhs = detail::sum_diff_power(f, self, antipode, norm, p) / static_cast<double>(cube);
  double rhs = 0.0;
  for (int j = 0; j < g.n(); ++j) {
    const std::size_t bit = g.stride(j);
    for (std::size_t i = 0; i < cube; ++i) flip[i] = i ^ bit;
    rhs += detail::sum_diff_power(f, self, flip, norm, p) / static_cast<double>(cube);
  }
  return make_report(detail::echo("enflo", f, 0, norm, p), lhs, rhs, zero_floor(p, f.max_abs()));
}

/// E_{x,eps} ||f(x + (m/2) eps) - f(x)||^p against m^p * edge_energy.
inline RatioReport scaled_enflo_ratio(const FunctionTable& f, const NormSpec& norm, const ExponentSpec& p) {
  const int m = f.geometry().m();
  const double lhs = detail::half_shift_energy(f, norm, p);
  const double edges = edge_energy(f, norm, p);
  const double floor = zero_floor(p, f.max_abs());
  if (edges <= floor) return make_report(detail::echo("scaled_enflo", f, 0, norm, p), lhs, 0.0, floor);
  return make_report(detail::echo("scaled_enflo", f, 0, norm, p), lhs, p.power(m) * edges, floor);
}

/// Approximation lemma: E||Delta f - f||^p <= (k-1)^p n^(p-1) edge_energy.
inline RatioReport approximation_ratio(const FunctionTable& f, SmoothingRadius k, const NormSpec& norm,
                                       const ExponentSpec& p) {
  const auto& g = f.geometry();
  const FunctionTable smooth = delta(f, all_axes(g.n()), k);
  const double lhs = detail::mean_gap_power(smooth, f, norm, p);
  const double factor = p.power(k.value() - 1) * std::pow(static_cast<double>(g.n()), p.p() - 1.0);
  const double edges = edge_energy(f, norm, p);
  const double floor = zero_floor(p, f.max_abs());
  return make_report(detail::echo("approximation", f, k.value(), norm, p), lhs, edges <= floor ? 0.0 : factor * edges,
                     floor);
}

/// Smoothing lemma telemetry: E_{x,eps}||Delta f(x+eps) - Delta f(x-eps)||^p against edge_energy.
inline RatioReport smoothing_ratio(const FunctionTable& f, SmoothingRadius k, const NormSpec& norm,
                                   const ExponentSpec& p) {
  const FunctionTable smooth = delta(f, all_axes(f.geometry().n()), k);
  const double lhs = detail::diagonal_energy(smooth, norm, p);
  return make_report(detail::echo("smoothing", f, k.value(), norm, p), lhs, edge_energy(f, norm, p),
                     zero_floor(p, f.max_abs()));
}

/// Largest n for which the 4^n-term Pisier sum is evaluated.
inline constexpr int kPisierMaxDimension = 8;

/// Pisier's inequality on {-1,1}^n with constant (e log n)^p.
inline RatioReport pisier_ratio(const FunctionTable& g, const NormSpec& norm, const ExponentSpec& p) {
  detail::require_hypercube(g, "pisier_ratio");
  const int n = g.geometry().n();
  if (n < 2) throw std::invalid_argument("pisier_ratio needs n >= 2 (log 1 = 0)");
  if (n > kPisierMaxDimension)
    throw std::invalid_argument("pisier_ratio evaluates exactly only up to n = " + std::to_string(kPisierMaxDimension));
  const std::size_t cube = g.points();
  const std::size_t d = static_cast<std::size_t>(g.dim());

  const std::vector<double> mu = g.mean();
  std::vector<double> diff(d);
  double lhs = 0.0;
  for (std::size_t e = 0; e < cube; ++e) {
    auto v = g.at(e);
    for (std::size_t c = 0; c < d; ++c) diff[c] = v[c] - mu[c];
    lhs += norm_power(norm, p, diff);
  }
  lhs /= static_cast<double>(cube);

  // For fixed eps, walk all eps' by flipping one sign of the running sum at a time.
  std::vector<double> grads(static_cast<std::size_t>(n) * d);
  std::vector<double> sums(cube * d);
  double inner = 0.0;
  for (std::size_t e = 0; e < cube; ++e) {
    auto here = g.at(e);
    for (int j = 0; j < n; ++j) {
      auto there = g.at(e ^ g.geometry().stride(j));
      for (std::size_t c = 0; c < d; ++c) grads[static_cast<std::size_t>(j) * d + c] = there[c] - here[c];
    }
    for (std::size_t c = 0; c < d; ++c) {
      double s = 0.0;
      for (int j = 0; j < n; ++j) s -= grads[static_cast<std::size_t>(j) * d + c];
      sums[c] = s;
    }
    inner += norm_power(norm, p, std::span<const double>(sums.data(), d));
    for (std::size_t mask = 1; mask < cube; ++mask) {
      const std::size_t low = static_cast<std::size_t>(std::countr_zero(mask));
      const std::size_t prev = mask & (mask - 1);
      for (std::size_t c = 0; c < d; ++c) sums[mask * d + c] = sums[prev * d + c] + 2.0 * grads[low * d + c];
      inner += norm_power(norm, p, std::span<const double>(sums.data() + mask * d, d));
    }
  }
  inner /= static_cast<double>(cube) * static_cast<double>(cube);
  const double constant = p.power(std::numbers::e * detail::log_n(n));
  return make_report(detail::echo("pisier", g, 0, norm, p), lhs, constant * inner, zero_floor(p, g.max_abs()));
}

/// Both sides of the smoothing-and-approximation chain with its explicit constant.
struct SchemeCheck {
  RatioReport report;
  double approximation_term = 0.0;  // E||Delta f - f||^p
  double smoothing_term = 0.0;      // E||Delta f(x+eps) - Delta f(x-eps)||^p
  double margin = 0.0;              // rhs - lhs
};

/// For m divisible by 4,
///   E||f(x + (m/2)eps) - f(x)||^p <= 3^(p-1) * (2 A + (m/4)^p S),
/// from the three-term convexity split followed by a telescope of m/4 steps of
/// length 2 along eps; each telescope step is a translate of Delta f(x+eps) - Delta f(x-eps).
inline SchemeCheck scheme_composite_check(const FunctionTable& f, SmoothingRadius k, const NormSpec& norm,
                                          const ExponentSpec& p) {
  const auto& g = f.geometry();
  if (g.m() % 4 != 0) throw std::invalid_argument("scheme_composite_check needs m divisible by 4");
  const FunctionTable smooth = delta(f, all_axes(g.n()), k);
  SchemeCheck out;
  out.approximation_term = detail::mean_gap_power(smooth, f, norm, p);
  out.smoothing_term = detail::diagonal_energy(smooth, norm, p);
  const double lhs = detail::half_shift_energy(f, norm, p);
  const double rhs = std::pow(3.0, p.p() - 1.0) *
                     (2.0 * out.approximation_term + p.power(g.m() / 4.0) * out.smoothing_term);
  out.report = make_report(detail::echo("scheme_composite", f, k.value(), norm, p), lhs, rhs, zero_floor(p, f.max_abs()));
  out.margin = out.report.rhs - out.report.lhs;
  return out;
}

}  // namespace enflo
