#pragma once

// Small fixed-capacity linear algebra for SDE state spaces.  State dimensions
// in this library are tiny (d <= 8), so Vec/Mat are value types backed by
// std::array -- no heap traffic in the per-step hot loop.

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string_view>

namespace jsde {

inline constexpr int kMaxDim = 8;

namespace detail {
inline int checked_dim(int dim) {
  if (dim < 1 || dim > kMaxDim)
    throw std::invalid_argument("jsde: dimension must be in [1, " +
                                std::to_string(kMaxDim) + "], got " +
                                std::to_string(dim));
  return dim;
}
}  // namespace detail

/// Euclidean vector in R^d, d <= kMaxDim.  Zero-initialised.
class Vec {
 public:
  Vec() = default;
  explicit Vec(int dim) : dim_(detail::checked_dim(dim)) {}
  Vec(std::initializer_list<double> xs)
      : dim_(detail::checked_dim(static_cast<int>(xs.size()))) {
    int i = 0;
    for (double v : xs) data_[i++] = v;
  }

  static Vec zero(int dim) { return Vec(dim); }
  static Vec axis(int dim, int k, double value = 1.0) {
    Vec v(dim);
    if (k < 0 || k >= dim) throw std::invalid_argument("jsde: axis index out of range");
    v[k] = value;
    return v;
  }

  int dim() const { return dim_; }
  double& operator[](int i) { return data_[i]; }
  double operator[](int i) const { return data_[i]; }
  const double* data() const { return data_.data(); }
  double* data() { return data_.data(); }

  Vec& operator+=(const Vec& o) {
    for (int i = 0; i < dim_; ++i) data_[i] += o.data_[i];
    return *this;
  }
  Vec& operator-=(const Vec& o) {
    for (int i = 0; i < dim_; ++i) data_[i] -= o.data_[i];
    return *this;
  }
  Vec& operator*=(double s) {
    for (int i = 0; i < dim_; ++i) data_[i] *= s;
    return *this;
  }

  friend Vec operator+(Vec a, const Vec& b) { return a += b; }
  friend Vec operator-(Vec a, const Vec& b) { return a -= b; }
  friend Vec operator*(Vec a, double s) { return a *= s; }
  friend Vec operator*(double s, Vec a) { return a *= s; }

  friend bool operator==(const Vec& a, const Vec& b) {
    if (a.dim_ != b.dim_) return false;
    for (int i = 0; i < a.dim_; ++i)
      if (a.data_[i] != b.data_[i]) return false;
    return true;
  }

 private:
  int dim_ = 0;
  std::array<double, kMaxDim> data_{};
};

inline double dot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (int i = 0; i < a.dim(); ++i) s += a[i] * b[i];
  return s;
}

inline double squared_norm(const Vec& a) { return dot(a, a); }
inline double norm(const Vec& a) { return std::sqrt(squared_norm(a)); }

inline bool all_finite(const Vec& a) {
  for (int i = 0; i < a.dim(); ++i)
    if (!std::isfinite(a[i])) return false;
  return true;
}

/// Square d x d matrix (diffusion fields sigma : R^d -> R^{d x d}).
class Mat {
 public:
  Mat() = default;
  explicit Mat(int dim) : dim_(detail::checked_dim(dim)) {}

  static Mat identity(int dim, double scale = 1.0) {
    Mat m(dim);
    for (int i = 0; i < dim; ++i) m(i, i) = scale;
    return m;
  }
  static Mat diagonal(const Vec& d) {
    Mat m(d.dim());
    for (int i = 0; i < d.dim(); ++i) m(i, i) = d[i];
    return m;
  }

  int dim() const { return dim_; }
  double& operator()(int r, int c) { return data_[r * kMaxDim + c]; }
  double operator()(int r, int c) const { return data_[r * kMaxDim + c]; }

  Mat& operator-=(const Mat& o) {
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
  }
  friend Mat operator-(Mat a, const Mat& b) { return a -= b; }
  Mat& operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
  }
  friend Mat operator*(Mat a, double s) { return a *= s; }

  friend Vec operator*(const Mat& m, const Vec& v) {
    Vec out(v.dim());
    for (int r = 0; r < m.dim_; ++r) {
      double s = 0.0;
      for (int c = 0; c < m.dim_; ++c) s += m(r, c) * v[c];
      out[r] = s;
    }
    return out;
  }

 private:
  int dim_ = 0;
  std::array<double, kMaxDim * kMaxDim> data_{};
};

/// Squared Hilbert-Schmidt (Frobenius) norm, the matrix norm used by every
/// growth and one-sided-Lipschitz functional in this library.
inline double hs_squared_norm(const Mat& m) {
  double s = 0.0;
  for (int r = 0; r < m.dim(); ++r)
    for (int c = 0; c < m.dim(); ++c) s += m(r, c) * m(r, c);
  return s;
}

inline bool all_finite(const Mat& m) {
  for (int r = 0; r < m.dim(); ++r)
    for (int c = 0; c < m.dim(); ++c)
      if (!std::isfinite(m(r, c))) return false;
  return true;
}

/// FNV-1a 64-bit digest; used to fingerprint artifacts and check
/// run-to-run determinism.
inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ull) {
  std::uint64_t h = seed;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace jsde
