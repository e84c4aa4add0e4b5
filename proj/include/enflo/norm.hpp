#pragma once

#include <cmath>
#include <cstdio>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>

namespace enflo {

/// The l_q norm on R^d, q in [1, inf].
class NormSpec {
 public:
  explicit NormSpec(double q = 2.0) : q_(q) {
    if (!(q >= 1.0)) throw std::invalid_argument("norm exponent q must be in [1, inf]");
  }
  static NormSpec infinity() { return NormSpec(std::numeric_limits<double>::infinity()); }

  double q() const { return q_; }
  bool is_infinite() const { return std::isinf(q_); }

  double operator()(std::span<const double> v) const {
    if (is_infinite()) {
      double best = 0.0;
      for (double x : v) best = std::fmax(best, std::fabs(x));
      return best;
    }
    if (q_ == 1.0) {
      double s = 0.0;
      for (double x : v) s += std::fabs(x);
      return s;
    }
    if (q_ == 2.0) {
      double s = 0.0;
      for (double x : v) s += x * x;
      return std::sqrt(s);
    }
    double s = 0.0;
    for (double x : v) s += std::pow(std::fabs(x), q_);
    return std::pow(s, 1.0 / q_);
  }

  std::string label() const {
    if (is_infinite()) return "inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", q_);
    return buf;
  }

 private:
  double q_;
};

/// Type exponent p in [1, 2].
class ExponentSpec {
 public:
  explicit ExponentSpec(double p = 2.0) : p_(p) {
    if (!(p >= 1.0 && p <= 2.0)) throw std::invalid_argument("type exponent p must lie in [1, 2]");
  }
  double p() const { return p_; }

  /// t^p for t >= 0.
  double power(double t) const {
    if (p_ == 1.0) return t;
    if (p_ == 2.0) return t * t;
    return std::pow(t, p_);
  }

 private:
  double p_;
};

/// ||v||_q^p.
inline double norm_power(const NormSpec& norm, const ExponentSpec& p, std::span<const double> v) {
  if (norm.q() == 2.0 && p.p() == 2.0) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return s;
  }
  return p.power(norm(v));
}

}  // namespace enflo
