#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "enflo/random.hpp"
#include "enflo/torus.hpp"

namespace enflo {

/// Dense table of R^d-valued samples over Z_m^n, stored point-major: the d
/// components of point `idx` (row-major index, see torus.hpp) occupy
/// values[idx * d, idx * d + d).
class FunctionTable {
 public:
  FunctionTable(const TorusGeometry& g, int d) : geom_(g), d_(check_dim(d)), values_(g.size() * static_cast<std::size_t>(d), 0.0) {}

  FunctionTable(const TorusGeometry& g, int d, std::vector<double> values)
      : geom_(g), d_(check_dim(d)), values_(std::move(values)) {
    if (values_.size() != g.size() * static_cast<std::size_t>(d))
      throw std::invalid_argument("table needs " + std::to_string(g.size() * static_cast<std::size_t>(d)) +
                                  " values, got " + std::to_string(values_.size()));
    for (double v : values_)
      if (!std::isfinite(v)) throw std::invalid_argument("table entries must be finite");
  }

  static FunctionTable constant(const TorusGeometry& g, std::span<const double> v) {
    FunctionTable t(g, static_cast<int>(v.size()));
    for (std::size_t i = 0; i < g.size(); ++i) std::copy(v.begin(), v.end(), t.at(i).begin());
    return t;
  }

  /// i.i.d. standard Gaussian entries.
  static FunctionTable gaussian(const TorusGeometry& g, int d, Rng& rng) {
    FunctionTable t(g, d);
    for (double& v : t.values_) v = rng.gaussian();
    return t;
  }

  /// Scalar indicator of the point `idx`.
  static FunctionTable indicator(const TorusGeometry& g, std::size_t idx) {
    FunctionTable t(g, 1);
    t.values_.at(idx) = 1.0;
    return t;
  }

  const TorusGeometry& geometry() const { return geom_; }
  int dim() const { return d_; }
  std::size_t points() const { return geom_.size(); }

  std::span<const double> at(std::size_t idx) const {
    return {values_.data() + idx * static_cast<std::size_t>(d_), static_cast<std::size_t>(d_)};
  }
  std::span<double> at(std::size_t idx) {
    return {values_.data() + idx * static_cast<std::size_t>(d_), static_cast<std::size_t>(d_)};
  }
  std::span<const double> at(const TorusPoint& x) const {
    require_same_geometry(geom_, x.geometry());
    return at(x.index());
  }

  const std::vector<double>& values() const { return values_; }
  std::vector<double>& values() { return values_; }

  FunctionTable& operator+=(const FunctionTable& o) {
    require_compatible(o);
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += o.values_[i];
    return *this;
  }
  FunctionTable& operator-=(const FunctionTable& o) {
    require_compatible(o);
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= o.values_[i];
    return *this;
  }
  FunctionTable& operator*=(double c) {
    for (double& v : values_) v *= c;
    return *this;
  }
  friend FunctionTable operator+(FunctionTable a, const FunctionTable& b) { return a += b; }
  friend FunctionTable operator-(FunctionTable a, const FunctionTable& b) { return a -= b; }
  friend FunctionTable operator*(double c, FunctionTable a) { return a *= c; }

  /// Componentwise mean over all points.
  std::vector<double> mean() const {
    std::vector<double> mu(static_cast<std::size_t>(d_), 0.0);
    for (std::size_t i = 0; i < points(); ++i) {
      auto v = at(i);
      for (int c = 0; c < d_; ++c) mu[static_cast<std::size_t>(c)] += v[static_cast<std::size_t>(c)];
    }
    for (double& v : mu) v /= static_cast<double>(points());
    return mu;
  }

  double max_abs() const {
    double best = 0.0;
    for (double v : values_) best = std::max(best, std::fabs(v));
    return best;
  }

  void require_compatible(const FunctionTable& o) const {
    require_same_geometry(geom_, o.geom_);
    if (d_ != o.d_) throw std::invalid_argument("target dimension mismatch");
  }

 private:
  static int check_dim(int d) {
    if (d < 1) throw std::invalid_argument("target dimension d must be >= 1");
    return d;
  }

  TorusGeometry geom_;
  int d_;
  std::vector<double> values_;
};

/// f(x + z).
inline std::span<const double> shift_eval(const FunctionTable& f, const TorusPoint& x, const TorusPoint& z) {
  return f.at(x + z);
}

/// Table of x -> f(x + offset).
inline FunctionTable shifted(const FunctionTable& f, const TorusPoint& offset) {
  require_same_geometry(f.geometry(), offset.geometry());
  const auto& g = f.geometry();
  FunctionTable out(g, f.dim());
  std::vector<int> coords;
  for (std::size_t i = 0; i < g.size(); ++i) {
    g.decode_into(i, coords);
    for (int j = 0; j < g.n(); ++j) coords[static_cast<std::size_t>(j)] += offset[j];
    auto src = f.at(g.encode(coords));
    std::copy(src.begin(), src.end(), out.at(i).begin());
  }
  return out;
}

/// x -> f(x + e_axis) - f(x), axis 0-based.
inline FunctionTable discrete_derivative(const FunctionTable& f, int axis) {
  FunctionTable out = shifted(f, TorusPoint::unit(f.geometry(), axis));
  out -= f;
  return out;
}

// Flat record {n, m, d, values}; values are point-major as in memory.
inline void to_json(nlohmann::json& j, const FunctionTable& f) {
  j = nlohmann::json{{"n", f.geometry().n()}, {"m", f.geometry().m()}, {"d", f.dim()}, {"values", f.values()}};
}

inline FunctionTable table_from_json(const nlohmann::json& j) {
  TorusGeometry g(j.at("n").get<int>(), j.at("m").get<int>());
  return FunctionTable(g, j.at("d").get<int>(), j.at("values").get<std::vector<double>>());
}

}  // namespace enflo
