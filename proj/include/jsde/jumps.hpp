#pragma once

// Jump-noise machinery: mark laws, jump intensity measures nu(du) = rate *
// law(du), Poisson jump trains, and the nu-integrals that enter growth /
// one-sided-Lipschitz functionals and the compensator drift.
//
// Two activity regimes are supported:
//   * finite      -- nu is a finite measure, every jump is kept;
//   * truncated   -- stand-in for infinite activity: marks with |u| <= cutoff
//                    are discarded, so the simulated measure is nu restricted
//                    to {|u| > cutoff}.  All closed-form moments below are
//                    moments of that restricted measure.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "jsde/core.hpp"
#include "jsde/rng.hpp"

namespace jsde {

namespace detail {
inline std::string fmt_g(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}
}  // namespace detail

/// Moments of a mark law restricted to {|u| > eps}:
///   mass = P(|U| > eps), mean_part = E[U; |U| > eps],
///   second_part = E[U^2; |U| > eps].
struct TailMoments {
  double mass = 0.0;
  double mean_part = 0.0;
  double second_part = 0.0;
};

/// Scalar mark distribution with closed-form restricted moments.
class MarkDistribution {
 public:
  enum class Kind { Normal, Uniform, Constant };

  static MarkDistribution normal(double mu, double sigma) {
    if (!(sigma > 0.0)) throw std::invalid_argument("jsde: normal marks need sigma > 0");
    return MarkDistribution(Kind::Normal, mu, sigma);
  }
  static MarkDistribution uniform(double a, double b) {
    if (!(a < b)) throw std::invalid_argument("jsde: uniform marks need a < b");
    return MarkDistribution(Kind::Uniform, a, b);
  }
  static MarkDistribution constant(double c) { return MarkDistribution(Kind::Constant, c, 0.0); }

  Kind kind() const { return kind_; }

  double sample(Engine& eng) const {
    switch (kind_) {
      case Kind::Normal: {
        std::normal_distribution<double> d(p1_, p2_);
        return d(eng);
      }
      case Kind::Uniform: {
        std::uniform_real_distribution<double> d(p1_, p2_);
        return d(eng);
      }
      case Kind::Constant:
      default:
        return p1_;
    }
  }

  /// Restricted moments over {|u| > eps}, eps >= 0.  eps == 0 recovers the
  /// full mean / second moment (an atom at u = 0 contributes nothing).
  TailMoments tail_moments(double eps) const {
    if (eps < 0.0) throw std::invalid_argument("jsde: tail cutoff must be >= 0");
    switch (kind_) {
      case Kind::Normal: {
        // Split into upper tail {u > eps} and, via U -> -U symmetry of the
        // family, lower tail {u < -eps} as the upper tail of N(-mu, sigma).
        TailMoments up = normal_upper_tail(p1_, p2_, eps);
        TailMoments dn = normal_upper_tail(-p1_, p2_, eps);
        return {up.mass + dn.mass, up.mean_part - dn.mean_part,
                up.second_part + dn.second_part};
      }
      case Kind::Uniform: {
        TailMoments t = uniform_piece(std::max(p1_, eps), p2_);
        TailMoments lo = uniform_piece(p1_, std::min(p2_, -eps));
        return {t.mass + lo.mass, t.mean_part + lo.mean_part,
                t.second_part + lo.second_part};
      }
      case Kind::Constant:
      default: {
        if (std::abs(p1_) > eps) return {1.0, p1_, p1_ * p1_};
        return {0.0, 0.0, 0.0};
      }
    }
  }

  double mean() const { return tail_moments(0.0).mean_part; }
  double second_moment() const { return tail_moments(0.0).second_part; }

  std::string id() const {
    using detail::fmt_g;
    switch (kind_) {
      case Kind::Normal:
        return "normal(mu=" + fmt_g(p1_) + ",sigma=" + fmt_g(p2_) + ")";
      case Kind::Uniform:
        return "uniform(a=" + fmt_g(p1_) + ",b=" + fmt_g(p2_) + ")";
      case Kind::Constant:
      default:
        return "constant(value=" + fmt_g(p1_) + ")";
    }
  }

 private:
  MarkDistribution(Kind k, double a, double b) : kind_(k), p1_(a), p2_(b) {}

  // E[1], E[U], E[U^2] of N(mu, sigma^2) restricted to {u > t}.
  static TailMoments normal_upper_tail(double mu, double sigma, double t) {
    const double a = (t - mu) / sigma;
    const double phi = std::exp(-0.5 * a * a) / std::sqrt(2.0 * M_PI);
    const double tail = 0.5 * std::erfc(a / std::sqrt(2.0));
    return {tail, mu * tail + sigma * phi,
            (mu * mu + sigma * sigma) * tail + sigma * (2.0 * mu + sigma * a) * phi};
  }

  // Moments of Uniform(p1, p2) restricted to the interval [lo, hi].
  TailMoments uniform_piece(double lo, double hi) const {
    if (!(hi > lo)) return {};
    const double inv = 1.0 / (p2_ - p1_);
    return {(hi - lo) * inv, 0.5 * (hi * hi - lo * lo) * inv,
            (hi * hi * hi - lo * lo * lo) / 3.0 * inv};
  }

  Kind kind_;
  double p1_, p2_;
};

/// Jump coefficient g : R^d x R -> R^d.  When the kernel is linear in the
/// mark, g(x, u) = linear_factor(x) * u, the field `linear_factor` is set and
/// every nu-integral below has a closed form; otherwise it is left empty and
/// integrals fall back to a deterministic Monte Carlo panel.
struct JumpKernel {
  std::function<Vec(const Vec&, double)> eval;
  std::function<Vec(const Vec&)> linear_factor;  // empty => general kernel
  std::string id = "custom";
};

inline JumpKernel zero_kernel(int dim) {
  JumpKernel k;
  k.linear_factor = [dim](const Vec&) { return Vec::zero(dim); };
  k.eval = [dim](const Vec&, double) { return Vec::zero(dim); };
  k.id = "none";
  return k;
}

/// g(x, u) = scale * u * (1, ..., 1): state-independent isotropic jumps.
inline JumpKernel additive_kernel(int dim, double scale) {
  JumpKernel k;
  Vec ones(dim);
  for (int i = 0; i < dim; ++i) ones[i] = scale;
  k.linear_factor = [ones](const Vec&) { return ones; };
  k.eval = [ones](const Vec&, double u) { return ones * u; };
  k.id = "additive(scale=" + detail::fmt_g(scale) + ")";
  return k;
}

/// g(x, u) = scale * u * x: jumps proportional to the current state.
inline JumpKernel multiplicative_kernel(double scale) {
  JumpKernel k;
  k.linear_factor = [scale](const Vec& x) { return x * scale; };
  k.eval = [scale](const Vec& x, double u) { return x * (scale * u); };
  k.id = "multiplicative(scale=" + detail::fmt_g(scale) + ")";
  return k;
}

/// Intensity measure nu = rate * law(marks), optionally truncated to
/// {|u| > cutoff} as the computable surrogate for infinite activity.
class JumpActivity {
 public:
  enum class Mode { Finite, TruncatedInfinite };

  static JumpActivity none() { return finite(0.0, MarkDistribution::constant(0.0)); }

  static JumpActivity finite(double rate, MarkDistribution marks) {
    if (!(rate >= 0.0)) throw std::invalid_argument("jsde: jump rate must be >= 0");
    return JumpActivity(Mode::Finite, rate, marks, 0.0);
  }

  static JumpActivity truncated(double rate, MarkDistribution marks, double cutoff) {
    if (!(rate >= 0.0)) throw std::invalid_argument("jsde: jump rate must be >= 0");
    if (!(cutoff > 0.0))
      throw std::invalid_argument("jsde: truncated activity needs cutoff > 0");
    return JumpActivity(Mode::TruncatedInfinite, rate, marks, cutoff);
  }

  Mode mode() const { return mode_; }
  double rate() const { return rate_; }
  double cutoff() const { return cutoff_; }
  const MarkDistribution& marks() const { return marks_; }

  /// Raw restricted moments of the simulated measure, divided by `rate`:
  /// mass = P(kept), mean_part = E[U; kept], second_part = E[U^2; kept].
  TailMoments kept_moments() const {
    return mode_ == Mode::Finite ? TailMoments{1.0, marks_.mean(), marks_.second_moment()}
                                 : marks_.tail_moments(cutoff_);
  }

  /// Total mass of the simulated measure: the Poisson rate actually used.
  double effective_rate() const { return rate_ * kept_moments().mass; }

  /// One kept mark (rejection against the cutoff in truncated mode).
  double sample_mark(Engine& eng) const {
    if (mode_ == Mode::Finite) return marks_.sample(eng);
    for (int tries = 0; tries < 1'000'000; ++tries) {
      double u = marks_.sample(eng);
      if (std::abs(u) > cutoff_) return u;
    }
    throw std::runtime_error("jsde: mark rejection stalled; cutoff removes almost all mass");
  }

  std::string id() const {
    std::string s = (mode_ == Mode::Finite ? "finite(rate=" : "truncated(rate=");
    s += detail::fmt_g(rate_) + ",marks=" + marks_.id();
    if (mode_ == Mode::TruncatedInfinite) s += ",cutoff=" + detail::fmt_g(cutoff_);
    return s + ")";
  }

 private:
  JumpActivity(Mode m, double rate, MarkDistribution marks, double cutoff)
      : mode_(m), rate_(rate), marks_(marks), cutoff_(cutoff) {}

  Mode mode_;
  double rate_;
  MarkDistribution marks_;
  double cutoff_;
};

/// Jump times (sorted, within [0, horizon)) and the matching marks.
struct JumpTrain {
  std::vector<double> times;
  std::vector<double> marks;
  std::size_t size() const { return times.size(); }
};

/// Poisson(effective_rate * horizon) events, times uniform on [0, horizon),
/// sorted; marks drawn afterwards so the time draw count never shifts the
/// mark stream.
inline JumpTrain sample_train(const JumpActivity& a, double horizon, std::uint64_t seed) {
  if (!(horizon > 0.0)) throw std::invalid_argument("jsde: train horizon must be > 0");
  JumpTrain tr;
  const double lam = a.effective_rate() * horizon;
  if (lam == 0.0) return tr;
  Engine eng(seed);
  std::poisson_distribution<long> pd(lam);
  const long n = pd(eng);
  tr.times.resize(n);
  std::uniform_real_distribution<double> ud(0.0, horizon);
  for (long i = 0; i < n; ++i) tr.times[i] = ud(eng);
  std::sort(tr.times.begin(), tr.times.end());
  tr.marks.resize(n);
  for (long i = 0; i < n; ++i) tr.marks[i] = a.sample_mark(eng);
  return tr;
}

namespace detail {
// Fixed sub-seed for the deterministic mark panel used by the Monte Carlo
// fallbacks; same panel for every (x, y), which also acts as common random
// numbers for difference moments.
inline constexpr std::uint64_t kMarkPanelSeed = 0x6d61726b70616e6cull;
inline constexpr int kDefaultPanel = 4096;
}  // namespace detail

/// integral of |g(x,u)|^2 over the (restricted) intensity measure.
inline double nu_second_moment(const JumpActivity& a, const JumpKernel& g, const Vec& x,
                               int mc_samples = detail::kDefaultPanel) {
  if (a.rate() == 0.0) return 0.0;
  if (g.linear_factor)
    return a.rate() * a.kept_moments().second_part * squared_norm(g.linear_factor(x));
  if (mc_samples < 1) throw std::invalid_argument("jsde: mc_samples must be >= 1");
  const double lam = a.effective_rate();
  if (lam == 0.0) return 0.0;
  Engine eng(detail::kMarkPanelSeed);
  double acc = 0.0;
  for (int i = 0; i < mc_samples; ++i) acc += squared_norm(g.eval(x, a.sample_mark(eng)));
  return lam * acc / mc_samples;
}

/// integral of |g(x,u) - g(y,u)|^2 over the (restricted) intensity measure.
inline double nu_difference_moment(const JumpActivity& a, const JumpKernel& g, const Vec& x,
                                   const Vec& y, int mc_samples = detail::kDefaultPanel) {
  if (x == y) return 0.0;
  if (a.rate() == 0.0) return 0.0;
  if (g.linear_factor)
    return a.rate() * a.kept_moments().second_part *
           squared_norm(g.linear_factor(x) - g.linear_factor(y));
  if (mc_samples < 1) throw std::invalid_argument("jsde: mc_samples must be >= 1");
  const double lam = a.effective_rate();
  if (lam == 0.0) return 0.0;
  Engine eng(detail::kMarkPanelSeed);
  double acc = 0.0;
  for (int i = 0; i < mc_samples; ++i) {
    const double u = a.sample_mark(eng);
    acc += squared_norm(g.eval(x, u) - g.eval(y, u));
  }
  return lam * acc / mc_samples;
}

/// Mean jump displacement per unit time, integral of g(x,u) nu(du): the drift
/// removed each step when driving against compensated jump noise.
inline Vec compensator_drift(const JumpActivity& a, const JumpKernel& g, const Vec& x,
                             int mc_samples = detail::kDefaultPanel) {
  if (a.rate() == 0.0) return Vec::zero(x.dim());
  if (g.linear_factor) {
    const double scale = a.rate() * a.kept_moments().mean_part;
    if (scale == 0.0) return Vec::zero(x.dim());
    return g.linear_factor(x) * scale;
  }
  if (mc_samples < 1) throw std::invalid_argument("jsde: mc_samples must be >= 1");
  const double lam = a.effective_rate();
  if (lam == 0.0) return Vec::zero(x.dim());
  Engine eng(detail::kMarkPanelSeed);
  Vec acc = Vec::zero(x.dim());
  for (int i = 0; i < mc_samples; ++i) acc += g.eval(x, a.sample_mark(eng));
  return acc * (lam / mc_samples);
}

}  // namespace jsde
