#pragma once

// Search for tables that push an inequality ratio up. Ascent runs on a
// smoothed log-ratio; every reported value comes from the exact evaluators.

#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "enflo/function_table.hpp"
#include "enflo/inequalities.hpp"
#include "enflo/norm.hpp"
#include "enflo/operators.hpp"
#include "enflo/random.hpp"

namespace enflo {

enum class Objective { scaled_enflo, smoothing, approximation, pisier, enflo };

inline std::string to_string(Objective o) {
  switch (o) {
    case Objective::scaled_enflo: return "scaled_enflo";
    case Objective::smoothing: return "smoothing";
    case Objective::approximation: return "approximation";
    case Objective::pisier: return "pisier";
    case Objective::enflo: return "enflo";
  }
  return "?";
}

inline Objective objective_from_string(const std::string& s) {
  for (auto o : {Objective::scaled_enflo, Objective::smoothing, Objective::approximation, Objective::pisier, Objective::enflo})
    if (to_string(o) == s) return o;
  throw std::invalid_argument("unknown objective '" + s + "'");
}

inline bool needs_radius(Objective o) { return o == Objective::smoothing || o == Objective::approximation; }

struct ObjectiveSpec {
  Objective kind = Objective::scaled_enflo;
  std::optional<SmoothingRadius> k;
};

struct OptimizationConfig {
  int restarts = 8;
  int iterations = 200;
  double step = 0.5;
  std::uint64_t seed = 0;
  double smoothing_eps = 1e-6;
};

/// Runs body(0..count-1); implementations may run the calls concurrently.
using ParallelFor = std::function<void(std::size_t, const std::function<void(std::size_t)>&)>;

inline void serial_for(std::size_t count, const std::function<void(std::size_t)>& body) {
  for (std::size_t i = 0; i < count; ++i) body(i);
}

/// The exact evaluator behind an objective.
inline RatioReport exact_report(const ObjectiveSpec& spec, const FunctionTable& f, const NormSpec& norm,
                                const ExponentSpec& p) {
  switch (spec.kind) {
    case Objective::scaled_enflo: return scaled_enflo_ratio(f, norm, p);
    case Objective::smoothing: return smoothing_ratio(f, spec.k.value(), norm, p);
    case Objective::approximation: return approximation_ratio(f, spec.k.value(), norm, p);
    case Objective::pisier: return pisier_ratio(f, norm, p);
    case Objective::enflo: return enflo_ratio(f, norm, p);
  }
  throw std::logic_error("unreachable objective");
}

namespace detail {

/// (v^2 + s^2)-smoothed l_q norm; q = inf is replaced by l_16.
class SmoothedNorm {
 public:
  static constexpr double kInfinitySurrogate = 16.0;

  SmoothedNorm(const NormSpec& norm, double eps)
      : q_(norm.is_infinite() ? kInfinitySurrogate : norm.q()), eps2_(eps * eps) {}

  /// Returns the norm and writes its gradient into `grad` when non-null.
  double operator()(std::span<const double> v, double* grad) const {
    double top = 0.0;
    for (double x : v) top = std::max(top, std::sqrt(x * x + eps2_));
    double sum = 0.0;
    for (double x : v) sum += std::pow(std::sqrt(x * x + eps2_) / top, q_);
    const double n = top * std::pow(sum, 1.0 / q_);
    if (grad)
      for (std::size_t c = 0; c < v.size(); ++c)
        grad[c] = v[c] / n * std::pow(std::sqrt(v[c] * v[c] + eps2_) / n, q_ - 2.0);
    return n;
  }

 private:
  double q_;
  double eps2_;
};

enum class PreOp { identity, delta, delta_minus_identity, center };

struct Tap {
  std::size_t map;  // into Surrogate::maps
  double coeff;
};

/// scale * sum over stencils and x of ||sum_taps coeff (P f)(x + offset)||^p.
struct Term {
  PreOp pre = PreOp::identity;
  std::vector<std::vector<Tap>> stencils;
  double scale = 1.0;
};

struct Surrogate {
  TorusGeometry geometry;
  std::optional<SmoothingRadius> k;
  std::vector<std::vector<std::size_t>> maps;
  Term lhs, rhs;
  double rhs_factor = 1.0;

  std::size_t map_for(const std::vector<int>& offset) {
    maps.push_back(shift_map(geometry, offset));
    return maps.size() - 1;
  }
};

inline std::vector<int> unit_offset(int n, int axis, int length) {
  std::vector<int> out(static_cast<std::size_t>(n), 0);
  out[static_cast<std::size_t>(axis)] = length;
  return out;
}

inline Term edge_term(Surrogate& s) {
  const int n = s.geometry.n();
  const std::size_t self = s.map_for(std::vector<int>(static_cast<std::size_t>(n), 0));
  Term t;
  for (int j = 0; j < n; ++j) t.stencils.push_back({{s.map_for(unit_offset(n, j, 1)), 1.0}, {self, -1.0}});
  t.scale = 1.0 / static_cast<double>(s.geometry.size());
  return t;
}

inline Surrogate build_surrogate(const ObjectiveSpec& spec, const TorusGeometry& g, const ExponentSpec& p) {
  Surrogate s{g, spec.k, {}, {}, {}, 1.0};
  const int n = g.n();
  const double points = static_cast<double>(g.size());
  const std::size_t cube = hypercube_size(n);
  if (needs_radius(spec.kind)) {
    if (!spec.k) throw std::invalid_argument(to_string(spec.kind) + " needs a smoothing radius k");
    spec.k->check_against(g);
  }
  if ((spec.kind == Objective::pisier || spec.kind == Objective::enflo) && !g.is_hypercube())
    throw std::invalid_argument(to_string(spec.kind) + " needs a hypercube-domain table (m = 2)");
  const std::size_t self = s.map_for(std::vector<int>(static_cast<std::size_t>(n), 0));

  switch (spec.kind) {
    case Objective::scaled_enflo:
      for (std::size_t e = 0; e < cube; ++e) {
        auto offset = SignVector::from_index(n, e).signs();
        for (int& c : offset) c *= g.m() / 2;
        s.lhs.stencils.push_back({{s.map_for(offset), 1.0}, {self, -1.0}});
      }
      s.lhs.scale = 1.0 / (points * static_cast<double>(cube));
      s.rhs = edge_term(s);
      s.rhs_factor = p.power(g.m());
      break;
    case Objective::smoothing:
      s.lhs.pre = PreOp::delta;
      for (std::size_t e = 0; e < cube; ++e) {
        const auto eps = SignVector::from_index(n, e);
        s.lhs.stencils.push_back({{s.map_for(eps.signs()), 1.0}, {s.map_for((-eps).signs()), -1.0}});
      }
      s.lhs.scale = 1.0 / (points * static_cast<double>(cube));
      s.rhs = edge_term(s);
      break;
    case Objective::approximation:
      if (spec.k->value() == 1) throw std::runtime_error("all starts degenerate: approximation with k = 1 is 0/0");
      s.lhs.pre = PreOp::delta_minus_identity;
      s.lhs.stencils.push_back({{self, 1.0}});
      s.lhs.scale = 1.0 / points;
      s.rhs = edge_term(s);
      s.rhs_factor = p.power(spec.k->value() - 1) * std::pow(static_cast<double>(n), p.p() - 1.0);
      break;
    case Objective::pisier: {
      if (n < 2 || n > kPisierMaxDimension)
        throw std::invalid_argument("pisier objective needs 2 <= n <= " + std::to_string(kPisierMaxDimension));
      s.lhs.pre = PreOp::center;
      s.lhs.stencils.push_back({{self, 1.0}});
      s.lhs.scale = 1.0 / points;
      std::vector<std::size_t> flips;
      for (int j = 0; j < n; ++j) flips.push_back(s.map_for(unit_offset(n, j, 1)));
      for (std::size_t e = 0; e < cube; ++e) {
        const auto eps = SignVector::from_index(n, e);
        std::vector<Tap> taps;
        double centre = 0.0;
        for (int j = 0; j < n; ++j) {
          taps.push_back({flips[static_cast<std::size_t>(j)], static_cast<double>(eps[j])});
          centre -= eps[j];
        }
        if (centre != 0.0) taps.push_back({self, centre});
        s.rhs.stencils.push_back(std::move(taps));
      }
      s.rhs.scale = 1.0 / (points * static_cast<double>(cube));
      s.rhs_factor = p.power(std::numbers::e * log_n(n));
      break;
    }
    case Objective::enflo:
      s.lhs.stencils.push_back({{self, 1.0}, {s.map_for(std::vector<int>(static_cast<std::size_t>(n), 1)), -1.0}});
      s.lhs.scale = 1.0 / points;
      s.rhs = edge_term(s);
      break;
  }
  return s;
}

inline FunctionTable apply_pre(PreOp pre, const FunctionTable& f, const std::optional<SmoothingRadius>& k) {
  switch (pre) {
    case PreOp::identity: return f;
    case PreOp::delta: return delta(f, all_axes(f.geometry().n()), *k);
    case PreOp::delta_minus_identity: return delta(f, all_axes(f.geometry().n()), *k) - f;
    case PreOp::center: {
      const auto mu = f.mean();
      return f - FunctionTable::constant(f.geometry(), mu);
    }
  }
  throw std::logic_error("unreachable pre-operator");
}

/// Term value; accumulates d(value)/df into `grad` when non-null. Every
/// pre-operator is self-adjoint, so the pulled-back gradient is P applied to
/// the gradient with respect to P f.
inline double term_value(const Surrogate& s, const Term& t, const FunctionTable& f, const SmoothedNorm& norm,
                         const ExponentSpec& p, FunctionTable* grad) {
  const FunctionTable pf = apply_pre(t.pre, f, s.k);
  const std::size_t d = static_cast<std::size_t>(f.dim());
  std::vector<double> v(d), nabla(d);
  std::optional<FunctionTable> g_pf;
  if (grad) g_pf.emplace(f.geometry(), f.dim());
  long double total = 0.0L;
  for (const auto& stencil : t.stencils) {
    for (std::size_t x = 0; x < f.points(); ++x) {
      std::fill(v.begin(), v.end(), 0.0);
      for (const auto& tap : stencil) {
        auto val = pf.at(s.maps[tap.map][x]);
        for (std::size_t c = 0; c < d; ++c) v[c] += tap.coeff * val[c];
      }
      const double nv = norm(v, grad ? nabla.data() : nullptr);
      total += p.power(nv);
      if (grad) {
        const double outer = p.p() * std::pow(nv, p.p() - 1.0);
        for (const auto& tap : stencil) {
          auto slot = g_pf->at(s.maps[tap.map][x]);
          for (std::size_t c = 0; c < d; ++c) slot[c] += t.scale * tap.coeff * outer * nabla[c];
        }
      }
    }
  }
  if (grad) *grad += apply_pre(t.pre, *g_pf, s.k);
  return t.scale * static_cast<double>(total);
}

/// log lhs - log rhs of the surrogate, with gradient into `grad` when non-null.
inline double log_ratio(const Surrogate& s, const FunctionTable& f, const SmoothedNorm& norm, const ExponentSpec& p,
                        FunctionTable* grad) {
  std::optional<FunctionTable> gl, gr;
  if (grad) {
    gl.emplace(f.geometry(), f.dim());
    gr.emplace(f.geometry(), f.dim());
  }
  const double l = term_value(s, s.lhs, f, norm, p, grad ? &*gl : nullptr);
  const double r = s.rhs_factor * term_value(s, s.rhs, f, norm, p, grad ? &*gr : nullptr);
  if (grad) *grad = (1.0 / l) * *gl - (s.rhs_factor / r) * *gr;
  return std::log(l) - std::log(r);
}

inline void project_mean(FunctionTable& f) {
  const auto mu = f.mean();
  f -= FunctionTable::constant(f.geometry(), mu);
}

inline double rms(const FunctionTable& f) {
  double sum = 0.0;
  for (double v : f.values()) sum += v * v;
  return std::sqrt(sum / static_cast<double>(f.values().size()));
}

/// Mean zero and unit RMS; both leave every objective unchanged.
inline void normalize(FunctionTable& f) {
  project_mean(f);
  const double r = rms(f);
  if (r > 0.0) f *= 1.0 / r;
}

}  // namespace detail

/// Surrogate log-ratio and its gradient with respect to the table entries.
inline std::pair<double, FunctionTable> objective_gradient(const ObjectiveSpec& spec, const FunctionTable& f,
                                                           const NormSpec& norm, const ExponentSpec& p,
                                                           double smoothing_eps = OptimizationConfig{}.smoothing_eps) {
  const auto s = detail::build_surrogate(spec, f.geometry(), p);
  FunctionTable grad(f.geometry(), f.dim());
  const double value = detail::log_ratio(s, f, detail::SmoothedNorm(norm, smoothing_eps), p, &grad);
  return {value, std::move(grad)};
}

struct RestartTrace {
  std::vector<double> objective;  // surrogate log-ratio after each accepted step
  std::optional<RatioReport> report;
};

struct MaximizeResult {
  FunctionTable best;
  RatioReport report;
  std::size_t best_restart = 0;
  std::vector<RestartTrace> traces;
};

/// Projected backtracking ascent from cfg.restarts Gaussian starts. Restart r
/// draws from Rng(cfg.seed, r); the best exact ratio wins, ties to the lower r.
inline MaximizeResult maximize_ratio(const ObjectiveSpec& spec, const TorusGeometry& g, int d, const NormSpec& norm,
                                     const ExponentSpec& p, const OptimizationConfig& cfg,
                                     const ParallelFor& parallel = serial_for) {
  if (cfg.restarts < 1) throw std::invalid_argument("restarts must be >= 1");
  if (cfg.iterations < 0) throw std::invalid_argument("iterations must be >= 0");
  if (!(cfg.step > 0.0)) throw std::invalid_argument("step must be positive");
  if (!(cfg.smoothing_eps > 0.0)) throw std::invalid_argument("smoothing_eps must be positive");
  if (static_cast<std::size_t>(d) * g.size() <= 1) throw std::runtime_error("all starts degenerate: d * m^n <= 1");
  const auto surrogate = detail::build_surrogate(spec, g, p);
  const detail::SmoothedNorm smooth(norm, cfg.smoothing_eps);

  std::vector<RestartTrace> traces(static_cast<std::size_t>(cfg.restarts));
  std::vector<std::optional<FunctionTable>> finals(traces.size());
  parallel(traces.size(), [&](std::size_t r) {
    Rng rng(cfg.seed, r);
    FunctionTable f = FunctionTable::gaussian(g, d, rng);
    detail::normalize(f);
    FunctionTable grad(g, d);
    double value = detail::log_ratio(surrogate, f, smooth, p, &grad);
    auto& trace = traces[r].objective;
    trace.push_back(value);
    double step = cfg.step;
    for (int it = 0; it < cfg.iterations; ++it) {
      detail::project_mean(grad);
      const double gnorm = detail::rms(grad);
      if (!(gnorm > 1e-14)) break;
      bool accepted = false;
      for (int halvings = 0; halvings < 40 && !accepted; ++halvings) {
        FunctionTable candidate = f + (step / gnorm) * grad;
        detail::normalize(candidate);
        FunctionTable candidate_grad(g, d);
        const double cv = detail::log_ratio(surrogate, candidate, smooth, p, &candidate_grad);
        if (std::isfinite(cv) && cv >= value) {
          accepted = true;
          f = std::move(candidate);
          grad = std::move(candidate_grad);
          value = cv;
          step = std::min(step * 1.5, 4.0);
        } else {
          step *= 0.5;
        }
      }
      if (!accepted) break;
      trace.push_back(value);
    }
    const auto report = exact_report(spec, f, norm, p);
    if (!report.degenerate) {
      traces[r].report = report;
      finals[r] = std::move(f);
    }
  });

  std::optional<std::size_t> winner;
  for (std::size_t r = 0; r < traces.size(); ++r)
    if (traces[r].report && (!winner || *traces[r].report->ratio > *traces[*winner].report->ratio)) winner = r;
  if (!winner) throw std::runtime_error("all starts degenerate for objective " + to_string(spec.kind));
  MaximizeResult out{std::move(*finals[*winner]), *traces[*winner].report, *winner, std::move(traces)};
  out.report.config.seed = cfg.seed;
  return out;
}

/// Max relative error between the analytic surrogate gradient and central
/// differences with step h, over 20 coordinates drawn from Rng(seed, 3) among
/// those whose component is at least 1e-3 of the largest.
inline double gradient_check(const ObjectiveSpec& spec, FunctionTable f, const NormSpec& norm, const ExponentSpec& p,
                             double h, std::uint64_t seed = 0,
                             double smoothing_eps = OptimizationConfig{}.smoothing_eps) {
  if (!(p.p() > 1.0)) throw std::invalid_argument("gradient_check needs p > 1");
  const auto s = detail::build_surrogate(spec, f.geometry(), p);
  const detail::SmoothedNorm smooth(norm, smoothing_eps);
  Rng rng(seed, 3);

  // Move f off the kinks: no stencil vector may come within 10 eps of zero.
  auto near_kink = [&](const FunctionTable& t) {
    for (const detail::Term* term : {&s.lhs, &s.rhs}) {
      const FunctionTable pf = detail::apply_pre(term->pre, t, s.k);
      std::vector<double> v(static_cast<std::size_t>(t.dim()));
      for (const auto& stencil : term->stencils)
        for (std::size_t x = 0; x < t.points(); ++x) {
          std::fill(v.begin(), v.end(), 0.0);
          for (const auto& tap : stencil) {
            auto val = pf.at(s.maps[tap.map][x]);
            for (std::size_t c = 0; c < v.size(); ++c) v[c] += tap.coeff * val[c];
          }
          double mag = 0.0;
          for (double c : v) mag = std::max(mag, std::fabs(c));
          if (mag < 10.0 * smoothing_eps) return true;
        }
    }
    return false;
  };
  for (int attempt = 0; attempt < 10 && near_kink(f); ++attempt)
    f += (1e-3 * std::max(1.0, f.max_abs())) * FunctionTable::gaussian(f.geometry(), f.dim(), rng);

  FunctionTable grad(f.geometry(), f.dim());
  detail::log_ratio(s, f, smooth, p, &grad);
  double scale = 0.0;
  for (double v : grad.values()) scale = std::max(scale, std::fabs(v));
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    // Components far below the largest one are resampled: their central
    // differences are dominated by cancellation in the objective.
    std::size_t idx = static_cast<std::size_t>(rng.below(f.values().size()));
    for (int redraw = 0; redraw < 100 && std::fabs(grad.values()[idx]) < 1e-3 * scale; ++redraw)
      idx = static_cast<std::size_t>(rng.below(f.values().size()));
    FunctionTable up = f, down = f;
    up.values()[idx] += h;
    down.values()[idx] -= h;
    const double fd = (detail::log_ratio(s, up, smooth, p, nullptr) - detail::log_ratio(s, down, smooth, p, nullptr)) / (2.0 * h);
    const double analytic = grad.values()[idx];
    const double denom = std::max({std::fabs(analytic), std::fabs(fd), 1e-8 * scale});
    if (denom > 0.0) worst = std::max(worst, std::fabs(analytic - fd) / denom);
  }
  return worst;
}

struct KChoice {
  int k = 1;
  bool cap_binds = false;
};

/// Largest odd k <= min(m/2 - 1, ceil(n log n)), with log n read as 1 at n = 1.
inline KChoice default_k_rule(int n, int m) {
  const int cap = m / 2 - 1;
  if (cap < 1) throw std::invalid_argument("no odd k < m/2 for m = " + std::to_string(m));
  const double log_term = n == 1 ? 1.0 : std::log(static_cast<double>(n));
  const int target = std::max(1, static_cast<int>(std::ceil(n * log_term - 1e-12)));
  int k = std::min(cap, target);
  if (k % 2 == 0) --k;
  return {k, target > cap};
}

using KRule = std::function<KChoice(int, int)>;

struct ScanRow {
  std::string objective;
  int n = 0;
  int m = 0;
  int k = 0;
  double p = 2.0;
  double q = 2.0;
  int d = 1;
  double empirical_theta = 0.0;  // ratio^(1/p)
  double lhs = 0.0;
  double rhs = 0.0;
  int restarts = 0;
  int iterations = 0;
  std::uint64_t seed = 0;
  bool cap_binds = false;
  std::size_t best_restart = 0;
};

/// Scaled Enflo suprema over the (n, m) grid, rows in n-major order.
inline std::vector<ScanRow> scan_m(const std::vector<int>& n_values, const std::vector<int>& m_values,
                                   const KRule& k_rule, const ExponentSpec& p, const NormSpec& norm, int d,
                                   const OptimizationConfig& cfg, const ParallelFor& parallel = serial_for) {
  for (int m : m_values)
    if (m < 4 || m % 4 != 0) throw std::invalid_argument("scan needs every m divisible by 4, got m = " + std::to_string(m));
  std::vector<ScanRow> rows;
  for (int n : n_values) {
    for (int m : m_values) {
      const KChoice choice = k_rule(n, m);
      SmoothingRadius(choice.k).check_against(TorusGeometry(n, m));
      const auto best = maximize_ratio({Objective::scaled_enflo, std::nullopt}, TorusGeometry(n, m), d, norm, p, cfg, parallel);
      ScanRow row;
      row.objective = "scaled_enflo";
      row.n = n;
      row.m = m;
      row.k = choice.k;
      row.p = p.p();
      row.q = norm.q();
      row.d = d;
      row.empirical_theta = std::pow(*best.report.ratio, 1.0 / p.p());
      row.lhs = best.report.lhs;
      row.rhs = best.report.rhs;
      row.restarts = cfg.restarts;
      row.iterations = cfg.iterations;
      row.seed = cfg.seed;
      row.cap_binds = choice.cap_binds;
      row.best_restart = best.best_restart;
      rows.push_back(row);
    }
  }
  return rows;
}

}  // namespace enflo
