#pragma once

// Geometry of the discrete torus Z_m^n and of the hypercube {-1,1}^n.
//
// Points of Z_m^n are stored with canonical residues in [0, m). A point is
// encoded as a flat row-major index with coordinate 0 slowest:
//
//     index(x) = x_0 * m^(n-1) + x_1 * m^(n-2) + ... + x_(n-1)
//
// The hypercube {-1,1}^n is the torus with m = 2 under the identification
// residue 0 <-> sign +1 and residue 1 <-> sign -1. Flipping sign j is then a
// shift by e_j and negating every sign is a shift by (1, ..., 1).

#include <cstddef>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace enflo {

/// Grid Z_m^n. m must be even and at least 2.
class TorusGeometry {
 public:
  /// Largest table the library will allocate points for.
  static constexpr std::size_t kMaxPoints = std::size_t{1} << 26;

  TorusGeometry(int n, int m) : n_(n), m_(m) {
    if (n < 1) throw std::invalid_argument("n must be >= 1, got " + std::to_string(n));
    if (m < 2 || m % 2 != 0)
      throw std::invalid_argument("m must be an even integer >= 2, got " + std::to_string(m));
    std::size_t count = 1;
    for (int j = 0; j < n; ++j) {
      if (count > kMaxPoints / static_cast<std::size_t>(m))
        throw std::invalid_argument("m^n exceeds the supported table size");
      count *= static_cast<std::size_t>(m);
    }
    size_ = count;
  }

  static TorusGeometry hypercube(int n) { return TorusGeometry(n, 2); }

  int n() const { return n_; }
  int m() const { return m_; }
  std::size_t size() const { return size_; }
  bool is_hypercube() const { return m_ == 2; }

  /// Index distance between neighbours along `axis`.
  std::size_t stride(int axis) const {
    std::size_t s = 1;
    for (int j = n_ - 1; j > axis; --j) s *= static_cast<std::size_t>(m_);
    return s;
  }

  int reduce(long long v) const {
    long long r = v % m_;
    return static_cast<int>(r < 0 ? r + m_ : r);
  }

  std::size_t encode(const std::vector<int>& coords) const {
    std::size_t idx = 0;
    for (int c : coords) idx = idx * static_cast<std::size_t>(m_) + static_cast<std::size_t>(reduce(c));
    return idx;
  }

  std::vector<int> decode(std::size_t idx) const {
    std::vector<int> coords(static_cast<std::size_t>(n_));
    decode_into(idx, coords);
    return coords;
  }

  void decode_into(std::size_t idx, std::vector<int>& coords) const {
    coords.resize(static_cast<std::size_t>(n_));
    for (int j = n_ - 1; j >= 0; --j) {
      coords[static_cast<std::size_t>(j)] = static_cast<int>(idx % static_cast<std::size_t>(m_));
      idx /= static_cast<std::size_t>(m_);
    }
  }

  friend bool operator==(const TorusGeometry&, const TorusGeometry&) = default;

 private:
  int n_;
  int m_;
  std::size_t size_ = 1;
};

inline void require_same_geometry(const TorusGeometry& a, const TorusGeometry& b) {
  if (!(a == b))
    throw std::invalid_argument("geometry mismatch: Z_" + std::to_string(a.m()) + "^" +
                                std::to_string(a.n()) + " vs Z_" + std::to_string(b.m()) + "^" +
                                std::to_string(b.n()));
}

/// A point of Z_m^n with every coordinate kept in [0, m).
class TorusPoint {
 public:
  explicit TorusPoint(const TorusGeometry& g) : geom_(g), coords_(static_cast<std::size_t>(g.n()), 0) {}

  TorusPoint(const TorusGeometry& g, std::vector<int> coords) : geom_(g), coords_(std::move(coords)) {
    if (coords_.size() != static_cast<std::size_t>(g.n()))
      throw std::invalid_argument("point has " + std::to_string(coords_.size()) +
                                  " coordinates, geometry needs " + std::to_string(g.n()));
    for (int& c : coords_) c = geom_.reduce(c);
  }

  static TorusPoint from_index(const TorusGeometry& g, std::size_t idx) {
    return TorusPoint(g, g.decode(idx));
  }

  /// e_axis (0-based axis).
  static TorusPoint unit(const TorusGeometry& g, int axis) {
    if (axis < 0 || axis >= g.n()) throw std::out_of_range("axis " + std::to_string(axis) + " out of range");
    TorusPoint p(g);
    p.coords_[static_cast<std::size_t>(axis)] = g.reduce(1);
    return p;
  }

  const TorusGeometry& geometry() const { return geom_; }
  const std::vector<int>& coords() const { return coords_; }
  int operator[](int axis) const { return coords_.at(static_cast<std::size_t>(axis)); }
  std::size_t index() const { return geom_.encode(coords_); }

  TorusPoint operator+(const TorusPoint& o) const {
    require_same_geometry(geom_, o.geom_);
    TorusPoint r(geom_);
    for (std::size_t j = 0; j < coords_.size(); ++j) r.coords_[j] = geom_.reduce(coords_[j] + o.coords_[j]);
    return r;
  }
  TorusPoint operator-() const {
    TorusPoint r(geom_);
    for (std::size_t j = 0; j < coords_.size(); ++j) r.coords_[j] = geom_.reduce(-coords_[j]);
    return r;
  }
  TorusPoint operator-(const TorusPoint& o) const { return *this + (-o); }
  TorusPoint scaled(long long c) const {
    TorusPoint r(geom_);
    for (std::size_t j = 0; j < coords_.size(); ++j) r.coords_[j] = geom_.reduce(c * coords_[j]);
    return r;
  }

  friend bool operator==(const TorusPoint&, const TorusPoint&) = default;

 private:
  TorusGeometry geom_;
  std::vector<int> coords_;
};

/// |z| = min(z, m - z) for a residue z in [0, m).
inline int residue_abs(int z, int m) {
  if (z < 0 || z >= m) throw std::out_of_range("residue " + std::to_string(z) + " not in [0, m)");
  return z < m - z ? z : m - z;
}

/// Sum of residue_abs over coordinates.
inline int ell1_length(const TorusPoint& z) {
  int total = 0;
  for (int c : z.coords()) total += residue_abs(c, z.geometry().m());
  return total;
}

/// l-infinity torus metric. This is the metric under which the even box of
/// radius < k has exactly k^n points.
inline int linf_dist(const TorusPoint& x, const TorusPoint& y) {
  require_same_geometry(x.geometry(), y.geometry());
  int best = 0;
  const int m = x.geometry().m();
  for (int j = 0; j < x.geometry().n(); ++j) {
    int d = residue_abs(x.geometry().reduce(x[j] - y[j]), m);
    if (d > best) best = d;
  }
  return best;
}

/// +1 when z is its own absolute value, -1 otherwise. Undefined at 0.
inline int sgn(int z, int m) {
  if (z == 0) throw std::domain_error("sgn is undefined at residue 0");
  return residue_abs(z, m) == z ? 1 : -1;
}

/// A point of {-1,1}^n.
class SignVector {
 public:
  explicit SignVector(int n) : signs_(static_cast<std::size_t>(n), 1) {
    if (n < 1) throw std::invalid_argument("sign vector needs n >= 1");
  }
  explicit SignVector(std::vector<int> signs) : signs_(std::move(signs)) {
    if (signs_.empty()) throw std::invalid_argument("sign vector needs n >= 1");
    for (int s : signs_)
      if (s != 1 && s != -1) throw std::invalid_argument("sign entries must be +1 or -1");
  }

  /// Bit j of the hypercube index (coordinate 0 most significant) set <=> sign -1.
  static SignVector from_index(int n, std::size_t idx) {
    SignVector v(n);
    for (int j = n - 1; j >= 0; --j, idx >>= 1) v.signs_[static_cast<std::size_t>(j)] = (idx & 1U) ? -1 : 1;
    return v;
  }

  int n() const { return static_cast<int>(signs_.size()); }
  int operator[](int j) const { return signs_.at(static_cast<std::size_t>(j)); }
  const std::vector<int>& signs() const { return signs_; }

  std::size_t index() const {
    std::size_t idx = 0;
    for (int s : signs_) idx = (idx << 1) | (s < 0 ? 1U : 0U);
    return idx;
  }

  SignVector operator-() const {
    SignVector r(*this);
    for (int& s : r.signs_) s = -s;
    return r;
  }

  /// The sign vector embedded in Z_m^n (-1 becomes m - 1).
  TorusPoint as_point(const TorusGeometry& g) const { return TorusPoint(g, signs_); }

  friend bool operator==(const SignVector&, const SignVector&) = default;

 private:
  std::vector<int> signs_;
};

/// Negates sign `axis` (0-based).
inline SignVector flip_coordinate(const SignVector& eps, int axis) {
  if (axis < 0 || axis >= eps.n()) throw std::out_of_range("axis " + std::to_string(axis) + " out of range");
  std::vector<int> s = eps.signs();
  s[static_cast<std::size_t>(axis)] = -s[static_cast<std::size_t>(axis)];
  return SignVector(std::move(s));
}

/// Number of sign vectors, 2^n.
inline std::size_t hypercube_size(int n) {
  if (n < 1 || n > 30) throw std::invalid_argument("hypercube dimension out of range");
  return std::size_t{1} << n;
}

}  // namespace enflo
