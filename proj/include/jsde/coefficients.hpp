#pragma once

// Coefficient fields of the jump SDE
//
//   dX_t = b(X_t) dt + sigma(X_t) dW_t + jumps driven by (kernel, activity)
//
// plus the smooth ball truncation used to localise coefficients that are only
// locally well-behaved: fields are multiplied by a radial cutoff that is
// identically 1 on B_R and identically 0 outside B_{R+1}.

#include <cmath>
#include <functional>
#include <stdexcept>

#include "jsde/core.hpp"
#include "jsde/jumps.hpp"

namespace jsde {

using DriftField = std::function<Vec(const Vec&)>;
using DiffusionField = std::function<Mat(const Vec&)>;

/// Complete coefficient tuple of one equation.
struct CoefficientSet {
  int dim = 0;
  DriftField drift;
  DiffusionField diffusion;
  JumpKernel jump;
  JumpActivity activity = JumpActivity::none();
};

inline CoefficientSet make_coefficients(int dim, DriftField drift, DiffusionField diffusion,
                                        JumpKernel jump, JumpActivity activity) {
  detail::checked_dim(dim);
  if (!drift || !diffusion || !jump.eval)
    throw std::invalid_argument("jsde: coefficient fields must be non-null");
  return CoefficientSet{dim, std::move(drift), std::move(diffusion), std::move(jump), activity};
}

// ---------------------------------------------------------------------------
// Built-in fields
// ---------------------------------------------------------------------------

inline DriftField zero_drift(int dim) {
  return [dim](const Vec&) { return Vec::zero(dim); };
}

/// b(x) = gain * x.
inline DriftField linear_drift(int /*dim*/, double gain) {
  return [gain](const Vec& x) { return x * gain; };
}

/// Radial power drift b(x) = -x |x|^{-alpha}, b(0) = 0, alpha in (0, 1).
/// One-sided Lipschitz with constant 0 on every ball, yet not locally
/// Lipschitz at the origin -- the canonical stress test for one-sided-only
/// assumptions.
inline DriftField alpha_drift(int /*dim*/, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw std::invalid_argument("jsde: alpha_drift needs alpha in (0,1)");
  return [alpha](const Vec& x) {
    const double r = norm(x);
    if (r == 0.0) return Vec::zero(x.dim());
    return x * (-std::pow(r, -alpha));
  };
}

/// b(x) = -x |x|^{-alpha} - K x: the radial power drift plus a linear
/// restoring term, which makes the field dissipative with margin K.
inline DriftField dissipative_alpha_drift(int dim, double alpha, double K) {
  if (!(K > 0.0)) throw std::invalid_argument("jsde: dissipative_alpha_drift needs K > 0");
  DriftField core = alpha_drift(dim, alpha);
  return [core, K](const Vec& x) { return core(x) - x * K; };
}

/// Componentwise b_i(x) = clamp(-x_i, [-limit, limit]): globally bounded,
/// globally Lipschitz, linear near the origin.
inline DriftField clamp_drift(int /*dim*/, double limit) {
  if (!(limit > 0.0)) throw std::invalid_argument("jsde: clamp_drift needs limit > 0");
  return [limit](const Vec& x) {
    Vec out(x.dim());
    for (int i = 0; i < x.dim(); ++i) out[i] = std::clamp(-x[i], -limit, limit);
    return out;
  };
}

inline DiffusionField zero_diffusion(int dim) {
  return [dim](const Vec&) { return Mat(dim); };
}

/// sigma(x) = value * I.
inline DiffusionField constant_diffusion(int dim, double value) {
  return [dim, value](const Vec&) { return Mat::identity(dim, value); };
}

/// sigma(x) = diag(scale * tanh(x_i)): bounded, globally Lipschitz,
/// state-dependent.
inline DiffusionField tanh_diagonal_diffusion(int /*dim*/, double scale) {
  return [scale](const Vec& x) {
    Vec d(x.dim());
    for (int i = 0; i < x.dim(); ++i) d[i] = scale * std::tanh(x[i]);
    return Mat::diagonal(d);
  };
}

/// sigma(x) = diag(scale * x_i): linear growth, unbounded.
inline DiffusionField linear_diagonal_diffusion(int /*dim*/, double scale) {
  return [scale](const Vec& x) {
    Vec d(x.dim());
    for (int i = 0; i < x.dim(); ++i) d[i] = scale * x[i];
    return Mat::diagonal(d);
  };
}

// ---------------------------------------------------------------------------
// Radial cutoff
// ---------------------------------------------------------------------------

/// Radial bump eta_R: eta_R(x) = 1 for |x| <= R, 0 for |x| >= R + 1, and a
/// monotone C^1 quintic ramp in between.  Values lie in [0, 1]; the sharpest
/// slope of the ramp is exactly 15/8, so eta_R is globally Lipschitz with
/// that constant.
class CutoffFunction {
 public:
  explicit CutoffFunction(double radius) : radius_(radius) {
    if (!(radius > 0.0)) throw std::invalid_argument("jsde: cutoff radius must be > 0");
  }

  double radius() const { return radius_; }

  /// Largest |profile'|: the quintic ramp s(u) = 1 - u^3 (10 - 15u + 6u^2)
  /// has s'(u) = -30 u^2 (1-u)^2, maximised at u = 1/2 with value 15/8.
  double lipschitz_constant() const { return 15.0 / 8.0; }

  double operator()(const Vec& x) const { return value_at_radius(norm(x)); }
  double value_at_radius(double r) const { return profile(r - radius_); }

  /// Ramp profile on the unit shell: 1 for u <= 0, 0 for u >= 1.
  static double profile(double u) {
    if (u <= 0.0) return 1.0;
    if (u >= 1.0) return 0.0;
    return 1.0 - u * u * u * (10.0 - 15.0 * u + 6.0 * u * u);
  }

 private:
  double radius_;
};

inline CutoffFunction make_cutoff(double radius) { return CutoffFunction(radius); }

// ---------------------------------------------------------------------------
// Ball truncation
// ---------------------------------------------------------------------------

/// Constants of the base coefficients on the enlarged ball B_{R+1}:
/// `one_sided` bounds the one-sided Lipschitz quotient there, `bound` bounds
/// |b|^2 + |sigma|^2 + nu-second-moment there.
struct LocalConstants {
  double one_sided = 0.0;
  double bound = 0.0;
};

/// One-sided Lipschitz constant inherited by the truncated coefficients:
/// the local constant plus the cross and square terms contributed by the
/// cutoff's slope against the local bound,
///   C(R) = C_{R+1} + sqrt(M_{R+1}) * L + M_{R+1} * L^2,  L = Lip(eta_R).
inline double one_sided_truncation_constant(double local_one_sided, double local_bound,
                                            double cutoff_lipschitz) {
  if (!(local_bound > 0.0))
    throw std::invalid_argument("jsde: local bound must be > 0");
  if (!(cutoff_lipschitz > 0.0))
    throw std::invalid_argument("jsde: cutoff Lipschitz constant must be > 0");
  return local_one_sided + std::sqrt(local_bound) * cutoff_lipschitz +
         local_bound * cutoff_lipschitz * cutoff_lipschitz;
}

/// Coefficients multiplied by eta_R, together with the global constants they
/// inherit from the base fields' local ones.
class TruncatedCoefficients {
 public:
  TruncatedCoefficients(CoefficientSet base, double radius, LocalConstants local)
      : base_(std::move(base)), cutoff_(radius), local_(local) {
    if (!(radius >= 1.0))
      throw std::invalid_argument("jsde: truncation radius must be >= 1");
    one_sided_const_ =
        one_sided_truncation_constant(local.one_sided, local.bound, cutoff_.lipschitz_constant());
    bound_ = local.bound;  // eta in [0,1] preserves the bound globally
    build_truncated();
  }

  const CoefficientSet& coefficients() const { return truncated_; }
  const CoefficientSet& base() const { return base_; }
  const CutoffFunction& cutoff() const { return cutoff_; }
  double radius() const { return cutoff_.radius(); }
  /// Global one-sided Lipschitz constant C(R) of the truncated fields.
  double one_sided_const() const { return one_sided_const_; }
  /// Global bound M(R) on |b_R|^2 + |sigma_R|^2 + nu-second-moment.
  double bound() const { return bound_; }
  const LocalConstants& local() const { return local_; }

 private:
  void build_truncated() {
    const CutoffFunction cut = cutoff_;
    const int dim = base_.dim;

    DriftField b = base_.drift;
    DiffusionField s = base_.diffusion;
    JumpKernel g = base_.jump;

    truncated_.dim = dim;
    truncated_.activity = base_.activity;
    // eta == 1 and eta == 0 short-circuits keep the truncated fields
    // bitwise equal to the base on the plateau and exactly zero outside
    // the support shell.
    truncated_.drift = [cut, b, dim](const Vec& x) {
      const double e = cut(x);
      if (e == 0.0) return Vec::zero(dim);
      Vec v = b(x);
      return e == 1.0 ? v : v * e;
    };
    truncated_.diffusion = [cut, s, dim](const Vec& x) {
      const double e = cut(x);
      if (e == 0.0) return Mat(dim);
      Mat m = s(x);
      return e == 1.0 ? m : m * e;
    };
    truncated_.jump.id = g.id + "*cutoff";
    truncated_.jump.eval = [cut, g, dim](const Vec& x, double u) {
      const double e = cut(x);
      if (e == 0.0) return Vec::zero(dim);
      Vec v = g.eval(x, u);
      return e == 1.0 ? v : v * e;
    };
    if (g.linear_factor) {
      truncated_.jump.linear_factor = [cut, g, dim](const Vec& x) {
        const double e = cut(x);
        if (e == 0.0) return Vec::zero(dim);
        Vec v = g.linear_factor(x);
        return e == 1.0 ? v : v * e;
      };
    }
  }

  CoefficientSet base_;
  CutoffFunction cutoff_;
  LocalConstants local_;
  double one_sided_const_ = 0.0;
  double bound_ = 0.0;
  CoefficientSet truncated_;
};

inline TruncatedCoefficients truncate(CoefficientSet base, double radius, LocalConstants local) {
  return TruncatedCoefficients(std::move(base), radius, local);
}

}  // namespace jsde
