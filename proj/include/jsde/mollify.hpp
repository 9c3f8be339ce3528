#pragma once

// Kernel smoothing of bounded continuous drift fields.
//
// For a drift b with |b|^2 <= M everywhere, the smoothed field of order k is
//
//   b^k(x) = integral of b(x - z/k) j(z) dz,
//
// where j(z) = c_d (1 - |z|^2)^3 on the unit ball (0 outside) is a normalised
// C^1 bump.  b^k is globally Lipschitz with constant at most
// k^{d+1} sqrt(M) G, where G = sup|grad j| * vol(unit ball), and
// |b^k - b| inherits the modulus of continuity of b at scale 1/k.
//
// The integral is evaluated by a tensor-product midpoint rule on [-1,1]^d
// with weights proportional to j at the nodes, renormalised to sum to one, so
// the rule integrates constants exactly.  Nodes are stored as mirrored pairs
// (z, -z) and each pair is summed together before weighting; this makes the
// rule reproduce affine fields exactly (up to roundoff) and send odd fields
// to an exact zero at the origin.

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <vector>

#include "jsde/coefficients.hpp"
#include "jsde/core.hpp"

namespace jsde {

/// Analytic constants of the bump kernel j in dimension d:
///   first_abs = integral |z| j(z) dz, second = integral |z|^2 j(z) dz,
///   grad_sup_integral = sup|grad j| * vol(unit ball).
struct KernelMoments {
  double first_abs = 0.0;
  double second = 0.0;
  double grad_sup_integral = 0.0;
};

namespace detail {

// Normaliser c_d with 1/c_d = integral over the unit ball of (1-|z|^2)^3.
inline double bump_normaliser(int dim) {
  switch (dim) {
    case 1: return 35.0 / 32.0;
    case 2: return 4.0 / M_PI;
    case 3: return 315.0 / (64.0 * M_PI);
    default: throw std::invalid_argument("jsde: mollify supports dim <= 3");
  }
}

inline double unit_ball_volume(int dim) {
  switch (dim) {
    case 1: return 2.0;
    case 2: return M_PI;
    case 3: return 4.0 * M_PI / 3.0;
    default: throw std::invalid_argument("jsde: mollify supports dim <= 3");
  }
}

inline KernelMoments bump_kernel_moments(int dim) {
  KernelMoments m;
  switch (dim) {
    case 1: m.first_abs = 35.0 / 128.0; m.second = 1.0 / 9.0; break;
    case 2: m.first_abs = 128.0 / 315.0; m.second = 1.0 / 5.0; break;
    case 3: m.first_abs = 63.0 / 128.0; m.second = 3.0 / 11.0; break;
    default: throw std::invalid_argument("jsde: mollify supports dim <= 3");
  }
  // sup over the ball of |grad (1-r^2)^3| = 6 r (1-r^2)^2 is attained at
  // r = 1/sqrt(5) with value 96 / (25 sqrt(5)).
  m.grad_sup_integral =
      bump_normaliser(dim) * (96.0 / (25.0 * std::sqrt(5.0))) * unit_ball_volume(dim);
  return m;
}

}  // namespace detail

/// Smoothed drift field of one order k.  Cheap to copy: the node table is
/// shared.
class MollifiedDrift {
 public:
  MollifiedDrift(DriftField base, int dim, int order, double drift_bound,
                 int nodes_per_axis = 33) {
    if (dim < 1 || dim > 3)
      throw std::invalid_argument("jsde: mollify supports dim in [1,3]");
    if (order < 1) throw std::invalid_argument("jsde: mollify order must be >= 1");
    if (!(drift_bound > 0.0))
      throw std::invalid_argument("jsde: mollify needs drift_bound > 0");
    if (nodes_per_axis < 2)
      throw std::invalid_argument("jsde: mollify needs nodes_per_axis >= 2");
    if (!base) throw std::invalid_argument("jsde: mollify needs a non-null drift");
    auto im = std::make_shared<Impl>();
    im->base = std::move(base);
    im->dim = dim;
    im->order = order;
    im->bound = drift_bound;
    im->moments = detail::bump_kernel_moments(dim);
    build_nodes(*im, nodes_per_axis);
    impl_ = std::move(im);
  }

  int dim() const { return impl_->dim; }
  int order() const { return impl_->order; }
  double drift_bound() const { return impl_->bound; }
  const KernelMoments& kernel_moments() const { return impl_->moments; }

  /// Global Lipschitz bound k^{d+1} sqrt(M) G for this order.
  double lipschitz_bound() const {
    const Impl& im = *impl_;
    return std::pow(static_cast<double>(im.order), im.dim + 1) * std::sqrt(im.bound) *
           im.moments.grad_sup_integral;
  }

  /// Moments of the discrete quadrature measure itself (they converge to
  /// kernel_moments().first_abs / .second as nodes_per_axis grows).
  double quadrature_first_abs() const { return impl_->quad_first_abs; }
  double quadrature_second() const { return impl_->quad_second; }

  Vec operator()(const Vec& x) const {
    const Impl& im = *impl_;
    const double inv_k = 1.0 / im.order;
    Vec acc = Vec::zero(im.dim);
    if (im.center_weight != 0.0) acc += probe(im, x) * im.center_weight;
    for (const auto& nd : im.pairs) {
      const Vec shift = nd.z * inv_k;
      // Sum the mirrored pair before weighting: for affine b the pair sum is
      // 2 b(x) and the displacement cancels algebraically.
      acc += (probe(im, x - shift) + probe(im, x + shift)) * nd.w;
    }
    return acc;
  }

  DriftField as_field() const {
    auto impl = impl_;
    return [impl](const Vec& x) { return MollifiedDrift(impl)(x); };
  }

 private:
  struct PairNode {
    Vec z;     // representative of the pair {z, -z}
    double w;  // normalised weight per node
  };
  struct Impl {
    DriftField base;
    int dim = 0;
    int order = 0;
    double bound = 0.0;
    double center_weight = 0.0;
    std::vector<PairNode> pairs;
    KernelMoments moments;
    double quad_first_abs = 0.0;
    double quad_second = 0.0;
  };

  explicit MollifiedDrift(std::shared_ptr<const Impl> impl) : impl_(std::move(impl)) {}

  static Vec probe(const Impl& im, const Vec& p) {
    Vec v = im.base(p);
    if (!all_finite(v) || squared_norm(v) > im.bound * (1.0 + 1e-9) + 1e-12)
      throw std::domain_error("jsde: drift bound violated while smoothing: |b|^2 = " +
                              std::to_string(squared_norm(v)) + " > " +
                              std::to_string(im.bound));
    return v;
  }

  static void build_nodes(Impl& im, int n) {
    // Midpoint coordinates on [-1,1]; the upper half is the explicit negation
    // of the lower half so mirrored pairs are exact in floating point.
    std::vector<double> coord(n);
    for (int i = 0; i < n / 2; ++i) {
      coord[i] = -1.0 + (2.0 * i + 1.0) / n;
      coord[n - 1 - i] = -coord[i];
    }
    if (n % 2 == 1) coord[n / 2] = 0.0;

    std::vector<int> idx(im.dim, 0);
    double total = 0.0;
    std::vector<PairNode> raw;
    double center_raw = 0.0;
    for (;;) {
      // Classify the multi-index against its mirror (n-1-i per axis).
      int cmp = 0;  // <0: keep as pair rep, 0: self-mirrored centre, >0: skip
      for (int a = 0; a < im.dim && cmp == 0; ++a) cmp = idx[a] - (n - 1 - idx[a]);
      if (cmp <= 0) {
        Vec z(im.dim);
        for (int a = 0; a < im.dim; ++a) z[a] = coord[idx[a]];
        const double r2 = squared_norm(z);
        if (r2 < 1.0) {
          const double raw_w = (1.0 - r2) * (1.0 - r2) * (1.0 - r2);
          if (cmp == 0) {
            center_raw = raw_w;
            total += raw_w;
          } else {
            raw.push_back({z, raw_w});
            total += 2.0 * raw_w;
          }
        }
      }
      int a = 0;
      while (a < im.dim && ++idx[a] == n) idx[a++] = 0;
      if (a == im.dim) break;
    }
    if (!(total > 0.0)) throw std::logic_error("jsde: empty mollifier quadrature");

    im.center_weight = center_raw / total;
    im.pairs = std::move(raw);
    for (auto& nd : im.pairs) {
      nd.w /= total;
      im.quad_first_abs += 2.0 * nd.w * norm(nd.z);
      im.quad_second += 2.0 * nd.w * squared_norm(nd.z);
    }
  }

  std::shared_ptr<const Impl> impl_;
};

inline MollifiedDrift mollify(DriftField base, int dim, int order, double drift_bound,
                              int nodes_per_axis = 33) {
  return MollifiedDrift(std::move(base), dim, order, drift_bound, nodes_per_axis);
}

}  // namespace jsde
