#pragma once

// Averaging operators on Z_m^n.
//
// Every support used here is symmetric under negation, so averaging f(x + y)
// over the support is the same as convolving with the uniform measure on it.
// Both supports are also coordinate product sets of arithmetic progressions
// with step 2, which is what the separable path exploits: one sliding sum per
// axis along each parity class, independent of k.

#include <algorithm>
#include <cstdint>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "enflo/function_table.hpp"
#include "enflo/torus.hpp"

namespace enflo {

/// Odd smoothing radius k. Validated against a grid with `check_against`.
class SmoothingRadius {
 public:
  explicit SmoothingRadius(int k) : k_(k) {
    if (k < 1 || k % 2 == 0) throw std::invalid_argument("k must be an odd positive integer, got " + std::to_string(k));
  }
  int value() const { return k_; }

  void check_against(const TorusGeometry& g) const {
    if (2 * k_ >= g.m())
      throw std::invalid_argument("k must satisfy k < m/2, got k=" + std::to_string(k_) + " m=" + std::to_string(g.m()));
  }

 private:
  int k_;
};

/// Sorted, duplicate-free list of 0-based axes.
using AxisSet = std::vector<int>;

inline AxisSet normalize_axes(const TorusGeometry& g, AxisSet axes) {
  std::sort(axes.begin(), axes.end());
  if (std::adjacent_find(axes.begin(), axes.end()) != axes.end()) throw std::invalid_argument("duplicate axis in subset");
  for (int a : axes)
    if (a < 0 || a >= g.n()) throw std::out_of_range("axis " + std::to_string(a) + " out of range");
  return axes;
}

inline AxisSet axes_from_mask(std::uint32_t mask, int n) {
  AxisSet out;
  for (int a = 0; a < n; ++a)
    if (mask & (1U << a)) out.push_back(a);
  return out;
}

inline AxisSet all_axes(int n) { return axes_from_mask((n >= 32) ? ~0U : ((1U << n) - 1U), n); }

/// Finite set of offsets carrying the uniform probability measure.
class SupportSet {
 public:
  SupportSet(const TorusGeometry& g, std::vector<TorusPoint> offsets) : geom_(g), offsets_(std::move(offsets)) {
    if (offsets_.empty()) throw std::invalid_argument("support set must be non-empty");
    std::set<std::size_t> seen;
    for (const auto& y : offsets_) {
      require_same_geometry(g, y.geometry());
      if (!seen.insert(y.index()).second) throw std::invalid_argument("support offsets must be distinct");
    }
    for (const auto& y : offsets_)
      if (!seen.count((-y).index())) throw std::logic_error("support set is not symmetric under negation");
  }

  const TorusGeometry& geometry() const { return geom_; }
  const std::vector<TorusPoint>& offsets() const { return offsets_; }
  std::size_t size() const { return offsets_.size(); }
  /// Mass of each offset; weight() * size() == 1.
  double weight() const { return 1.0 / static_cast<double>(offsets_.size()); }

 private:
  TorusGeometry geom_;
  std::vector<TorusPoint> offsets_;
};

inline void to_json(nlohmann::json& j, const SupportSet& s) {
  j = nlohmann::json::array();
  for (const auto& y : s.offsets()) j.push_back(y.coords());
}

/// L_B: offsets vanishing off B, even everywhere, l-infinity length < k.
/// Built by filtering the whole grid against the definition.
inline SupportSet build_L_B(const TorusGeometry& g, const AxisSet& axes, SmoothingRadius k) {
  k.check_against(g);
  const AxisSet b = normalize_axes(g, axes);
  std::vector<bool> in_b(static_cast<std::size_t>(g.n()), false);
  for (int a : b) in_b[static_cast<std::size_t>(a)] = true;
  const TorusPoint zero(g);
  std::vector<TorusPoint> offsets;
  for (std::size_t i = 0; i < g.size(); ++i) {
    TorusPoint y = TorusPoint::from_index(g, i);
    bool ok = true;
    for (int a = 0; a < g.n() && ok; ++a) {
      if (!in_b[static_cast<std::size_t>(a)] && y[a] != 0) ok = false;
      if (y[a] % 2 != 0) ok = false;
    }
    if (ok && linf_dist(zero, y) < k.value()) offsets.push_back(std::move(y));
  }
  return SupportSet(g, std::move(offsets));
}

/// S(j,k): coordinate j even, every other coordinate odd, l-infinity length <= k.
inline SupportSet build_S_jk(const TorusGeometry& g, int axis, SmoothingRadius k) {
  k.check_against(g);
  if (axis < 0 || axis >= g.n()) throw std::out_of_range("axis " + std::to_string(axis) + " out of range");
  const TorusPoint zero(g);
  std::vector<TorusPoint> offsets;
  for (std::size_t i = 0; i < g.size(); ++i) {
    TorusPoint y = TorusPoint::from_index(g, i);
    bool ok = true;
    for (int a = 0; a < g.n() && ok; ++a) {
      const bool even = y[a] % 2 == 0;
      ok = (a == axis) ? even : !even;
    }
    if (ok && linf_dist(zero, y) <= k.value()) offsets.push_back(std::move(y));
  }
  return SupportSet(g, std::move(offsets));
}

/// Naive stencil: x -> mean over y in s of f(x + y). Cost O(|s| m^n d).
inline FunctionTable convolve(const FunctionTable& f, const SupportSet& s) {
  const auto& g = f.geometry();
  require_same_geometry(g, s.geometry());
  const int d = f.dim();
  FunctionTable out(g, d);
  std::vector<int> x, shifted_coords(static_cast<std::size_t>(g.n()));
  for (std::size_t i = 0; i < g.size(); ++i) {
    g.decode_into(i, x);
    auto dst = out.at(i);
    for (const auto& y : s.offsets()) {
      for (int a = 0; a < g.n(); ++a)
        shifted_coords[static_cast<std::size_t>(a)] = x[static_cast<std::size_t>(a)] + y[a];
      auto src = f.at(g.encode(shifted_coords));
      for (int c = 0; c < d; ++c) dst[static_cast<std::size_t>(c)] += src[static_cast<std::size_t>(c)];
    }
    for (int c = 0; c < d; ++c) dst[static_cast<std::size_t>(c)] *= s.weight();
  }
  return out;
}

namespace detail {

/// One factor of a product support: offsets first, first+2, ..., first+2(count-1) on `axis`.
struct AxisProgression {
  int axis;
  int first;
  int count;
};

/// Unnormalized sum x -> sum_t f(x + (first + 2t) e_axis), computed by a
/// running window along each parity class of each line.
inline FunctionTable progression_sum(const FunctionTable& in, const AxisProgression& prog) {
  const auto& g = in.geometry();
  const int m = g.m();
  if (prog.count < 1 || 2 * prog.count > m) throw std::invalid_argument("progression does not fit in one parity class");
  const std::size_t d = static_cast<std::size_t>(in.dim());
  const std::size_t stride = g.stride(prog.axis);
  const std::size_t line = stride * static_cast<std::size_t>(m);
  const std::size_t outer_count = g.size() / line;
  auto wrap = [m](long long v) { return static_cast<std::size_t>(((v % m) + m) % m); };

  FunctionTable out(g, in.dim());
  const double* src = in.values().data();
  double* dst = out.values().data();
  const long long last = prog.first + 2LL * (prog.count - 1);
  for (std::size_t outer = 0; outer < outer_count; ++outer) {
    for (std::size_t inner = 0; inner < stride; ++inner) {
      const std::size_t base = outer * line + inner;
      auto pos = [&](long long coord) { return (base + wrap(coord) * stride) * d; };
      for (int parity = 0; parity < 2; ++parity) {
        for (std::size_t c = 0; c < d; ++c) {
          double acc = 0.0;
          for (int t = 0; t < prog.count; ++t) acc += src[pos(parity + prog.first + 2LL * t) + c];
          dst[pos(parity) + c] = acc;
          for (int x = parity + 2; x < m; x += 2) {
            acc += src[pos(x + last) + c] - src[pos(x - 2 + prog.first) + c];
            dst[pos(x) + c] = acc;
          }
        }
      }
    }
  }
  return out;
}

/// Average over a product of progressions; one exact division at the end.
inline FunctionTable product_average(const FunctionTable& f, const std::vector<AxisProgression>& factors) {
  if (factors.empty()) return f;
  FunctionTable acc = progression_sum(f, factors.front());
  double cells = factors.front().count;
  for (std::size_t i = 1; i < factors.size(); ++i) {
    acc = progression_sum(acc, factors[i]);
    cells *= factors[i].count;
  }
  acc *= 1.0 / cells;
  return acc;
}

}  // namespace detail

/// Separable Delta_B: n successive 1-D sliding sums, O(|B| m^n d).
inline FunctionTable convolve_box_separable(const FunctionTable& f, const AxisSet& axes, SmoothingRadius k) {
  k.check_against(f.geometry());
  std::vector<detail::AxisProgression> factors;
  for (int a : normalize_axes(f.geometry(), axes)) factors.push_back({a, -(k.value() - 1), k.value()});
  return detail::product_average(f, factors);
}

/// Delta_B f(x) = average of f(x + y) over L_B.
inline FunctionTable delta(const FunctionTable& f, const AxisSet& axes, SmoothingRadius k) {
  k.check_against(f.geometry());
  const AxisSet b = normalize_axes(f.geometry(), axes);
  if (b.empty() || k.value() == 1) return f;
  if (b.size() >= 2) return convolve_box_separable(f, b, k);
  return convolve(f, build_L_B(f.geometry(), b, k));
}

/// E_j f(x) = average of f(x + y) over S(j,k). Uses the separable path.
inline FunctionTable ej_average(const FunctionTable& f, int axis, SmoothingRadius k) {
  const auto& g = f.geometry();
  k.check_against(g);
  if (axis < 0 || axis >= g.n()) throw std::out_of_range("axis " + std::to_string(axis) + " out of range");
  std::vector<detail::AxisProgression> factors;
  for (int a = 0; a < g.n(); ++a) {
    if (a == axis)
      factors.push_back({a, -(k.value() - 1), k.value()});
    else
      factors.push_back({a, -k.value(), k.value() + 1});
  }
  return detail::product_average(f, factors);
}

}  // namespace enflo
