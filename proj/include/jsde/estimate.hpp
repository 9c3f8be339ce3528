#pragma once

// Ensemble statistics and long-run (invariant-measure) estimation.
//
// Everything here consumes PathBatch ensembles or coefficient sets plus a
// SimConfig and produces plain-value summaries: moment curves with standard
// errors, decay certificates, tail probabilities with exact binomial
// (Wilson) intervals, synchronous-coupling moduli, time-averaged occupation
// measures in the Krylov-Bogoliubov style, and distances between empirical
// measures (exact 1-d Wasserstein-1, energy distance in general dimension).
//
// Exploded paths are excluded from moment statistics; estimators report the
// excluded fraction so callers can fail runs where it exceeds their budget.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <stdexcept>
#include <vector>

#include "jsde/core.hpp"
#include "jsde/rng.hpp"
#include "jsde/simulate.hpp"

namespace jsde {

// ---------------------------------------------------------------------------
// Moment curves
// ---------------------------------------------------------------------------

/// Second-moment curve t -> E|X_t|^2 and running-sup curve
/// t -> E sup_{s<=t} |X_s|^2 across the ensemble, with standard errors.
struct MomentSeries {
  std::vector<double> times;
  std::vector<double> second_moment;
  std::vector<double> second_stderr;
  std::vector<double> sup_moment;
  std::vector<double> sup_stderr;
  long paths_total = 0;
  long paths_used = 0;
  double excluded_fraction() const {
    return paths_total == 0 ? 0.0
                            : static_cast<double>(paths_total - paths_used) / paths_total;
  }
};

inline MomentSeries moment_series(const PathBatch& b) {
  MomentSeries s;
  s.times = b.grid;
  s.paths_total = b.paths;
  const long T = b.times();
  std::vector<double> mean2(T, 0.0), m2sq(T, 0.0), means(T, 0.0), m2sup(T, 0.0);
  long n = 0;
  for (long p = 0; p < b.paths; ++p) {
    if (b.exploded(p)) continue;
    ++n;
    double run = 0.0;
    for (long t = 0; t < T; ++t) {
      const double v = squared_norm(b.state(p, t));
      run = std::max(run, v);
      // Welford updates, one per curve.
      const double d2 = v - mean2[t];
      mean2[t] += d2 / n;
      m2sq[t] += d2 * (v - mean2[t]);
      const double ds = run - means[t];
      means[t] += ds / n;
      m2sup[t] += ds * (run - means[t]);
    }
  }
  if (n == 0) throw std::runtime_error("jsde: every path exploded; no moments available");
  s.paths_used = n;
  s.second_moment = std::move(mean2);
  s.sup_moment = std::move(means);
  s.second_stderr.resize(T);
  s.sup_stderr.resize(T);
  for (long t = 0; t < T; ++t) {
    const double var2 = n > 1 ? m2sq[t] / (n - 1) : 0.0;
    const double vars = n > 1 ? m2sup[t] / (n - 1) : 0.0;
    s.second_stderr[t] = std::sqrt(var2 / n);
    s.sup_stderr[t] = std::sqrt(vars / n);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Decay certificate
// ---------------------------------------------------------------------------

/// Comparison of a second-moment curve against the exponential envelope
///   E|X_t|^2 <= E|X_0|^2 e^{-2Kt} + M/K
/// implied by dissipativity with margin K and offset M.  A point violates
/// the envelope only if it exceeds it by more than three standard errors.
struct DecayCheck {
  bool pass = false;
  double max_excess = 0.0;  // worst (moment - envelope - 3 stderr), > 0 fails
  double worst_time = 0.0;
  double stationary_bound = 0.0;  // M / K
  double excluded_fraction = 0.0;
};

inline DecayCheck decay_check(const MomentSeries& s, double K, double M,
                              double initial_second_moment) {
  if (!(K > 0.0) || !(M > 0.0))
    throw std::invalid_argument("jsde: decay check needs K > 0 and M > 0");
  DecayCheck d;
  d.stationary_bound = M / K;
  d.excluded_fraction = s.excluded_fraction();
  d.max_excess = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < s.times.size(); ++i) {
    const double env =
        initial_second_moment * std::exp(-2.0 * K * s.times[i]) + d.stationary_bound;
    const double excess = s.second_moment[i] - env - 3.0 * s.second_stderr[i];
    if (excess > d.max_excess) {
      d.max_excess = excess;
      d.worst_time = s.times[i];
    }
  }
  d.pass = d.max_excess <= 0.0 && d.excluded_fraction <= 0.01;
  return d;
}

// ---------------------------------------------------------------------------
// Tail probability (boundedness in probability)
// ---------------------------------------------------------------------------

/// P(|X_t| > R) estimated across the ensemble with a 95% Wilson interval.
/// Exploded paths count as exceedances (they left every bounded set).
struct TailProbability {
  double radius = 0.0;
  double time = 0.0;
  long paths = 0;
  long exceed_count = 0;
  double estimate = 0.0;
  double wilson_low = 0.0;
  double wilson_high = 1.0;
};

inline TailProbability bounded_in_probability(const PathBatch& b, double radius, double t) {
  if (!(radius > 0.0)) throw std::invalid_argument("jsde: tail radius must be > 0");
  const long ti = grid_index(b.grid, t);
  TailProbability tp;
  tp.radius = radius;
  tp.time = b.grid[ti];
  tp.paths = b.paths;
  for (long p = 0; p < b.paths; ++p)
    if (b.exploded(p) || norm(b.state(p, ti)) > radius) ++tp.exceed_count;
  const double n = static_cast<double>(b.paths);
  const double phat = tp.exceed_count / n;
  tp.estimate = phat;
  const double z = 1.959963984540054;  // 97.5% normal quantile
  const double z2 = z * z;
  const double denom = 1.0 + z2 / n;
  const double centre = (phat + z2 / (2.0 * n)) / denom;
  const double half =
      z * std::sqrt(phat * (1.0 - phat) / n + z2 / (4.0 * n * n)) / denom;
  tp.wilson_low = std::max(0.0, centre - half);
  tp.wilson_high = std::min(1.0, centre + half);
  return tp;
}

// ---------------------------------------------------------------------------
// Synchronous-coupling modulus
// ---------------------------------------------------------------------------

/// Mean squared separation at the horizon of synchronously coupled pairs
/// started delta apart, normalised by delta^2, across several deltas.  If
/// the normalised ratios stay within a bounded band as delta -> 0 the map
/// x -> law(X_t(x)) behaves continuously on the sampled scale.
struct FellerModulus {
  std::vector<double> deltas;
  std::vector<double> ratios;  // E|X(x) - X(x + delta e1)|^2 / delta^2 at the horizon
  double max_ratio = 0.0;
  double spread = 0.0;  // max ratio / min ratio
  double spread_limit = 0.0;
  bool bounded = false;
};

inline FellerModulus feller_modulus(const CoefficientSet& c, const SimConfig& cfg, const Vec& x,
                                    const std::vector<double>& deltas,
                                    double spread_limit = 3.0) {
  if (deltas.empty()) throw std::invalid_argument("jsde: feller_modulus needs deltas");
  FellerModulus fm;
  fm.deltas = deltas;
  fm.spread_limit = spread_limit;
  for (double d : deltas) {
    if (!(d > 0.0)) throw std::invalid_argument("jsde: deltas must be > 0");
    const Vec y = x + Vec::axis(c.dim, 0, d);
    const CoupledBatch cb = simulate_coupled(c, cfg, x, y);
    const long T = cb.first.times();
    double acc = 0.0;
    long n = 0;
    for (long p = 0; p < cb.first.paths; ++p) {
      if (cb.first.exploded(p) || cb.second.exploded(p)) continue;
      acc += squared_norm(cb.first.state(p, T - 1) - cb.second.state(p, T - 1));
      ++n;
    }
    if (n == 0) throw std::runtime_error("jsde: all coupled pairs exploded");
    fm.ratios.push_back(acc / n / (d * d));
  }
  const double lo = *std::min_element(fm.ratios.begin(), fm.ratios.end());
  const double hi = *std::max_element(fm.ratios.begin(), fm.ratios.end());
  fm.max_ratio = hi;
  if (hi == 0.0)
    fm.spread = 1.0;  // all pairs collapsed; trivially bounded
  else
    fm.spread = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
  fm.bounded = fm.spread <= spread_limit;
  return fm;
}

// ---------------------------------------------------------------------------
// Empirical measures
// ---------------------------------------------------------------------------

struct EmpiricalMeasure {
  int dim = 0;
  std::vector<Vec> atoms;
  std::vector<double> weights;

  std::size_t size() const { return atoms.size(); }
  double total_weight() const {
    double s = 0.0;
    for (double w : weights) s += w;
    return s;
  }
  double second_moment() const {
    double s = 0.0;
    for (std::size_t i = 0; i < atoms.size(); ++i) s += weights[i] * squared_norm(atoms[i]);
    return s;
  }
};

inline EmpiricalMeasure point_mass(const Vec& x) {
  return EmpiricalMeasure{x.dim(), {x}, {1.0}};
}

namespace detail {
inline void validate_measure(const EmpiricalMeasure& m, const char* who) {
  if (m.atoms.empty() || m.atoms.size() != m.weights.size())
    throw std::invalid_argument(std::string("jsde: ") + who + ": malformed measure");
  for (double w : m.weights)
    if (!(w >= 0.0))
      throw std::invalid_argument(std::string("jsde: ") + who + ": negative weight");
  if (std::abs(m.total_weight() - 1.0) > 1e-9)
    throw std::invalid_argument(std::string("jsde: ") + who + ": weights must sum to 1");
}
}  // namespace detail

/// Equal-weight occupation measure of all grid states with time in
/// (t_begin, t_end], exploded paths excluded.
inline EmpiricalMeasure occupation_from_batch(const PathBatch& b, double t_begin, double t_end) {
  if (!(t_begin >= 0.0) || !(t_begin < t_end))
    throw std::invalid_argument("jsde: occupation window needs 0 <= t_begin < t_end");
  EmpiricalMeasure m;
  m.dim = b.dim;
  for (long p = 0; p < b.paths; ++p) {
    if (b.exploded(p)) continue;
    for (long t = 0; t < b.times(); ++t) {
      const double tt = b.grid[t];
      if (tt > t_begin && tt <= t_end) m.atoms.push_back(b.state(p, t));
    }
  }
  if (m.atoms.empty())
    throw std::runtime_error("jsde: empty occupation window (all exploded or no grid points)");
  m.weights.assign(m.atoms.size(), 1.0 / m.atoms.size());
  return m;
}

/// Time-averaged law over (burn_in, horizon] of a fresh ensemble: the
/// constructive candidate for an invariant measure.
inline EmpiricalMeasure krylov_bogoliubov(const CoefficientSet& c, const SimConfig& cfg,
                                          double burn_in) {
  if (!(burn_in >= 0.0) || !(burn_in < cfg.horizon))
    throw std::invalid_argument("jsde: burn_in must lie in [0, horizon)");
  const PathBatch b = simulate(c, cfg);
  return occupation_from_batch(b, burn_in, cfg.horizon);
}

/// Mean and standard error of the occupation second moment, computed from
/// per-path window averages (paths are the independent replicates).
struct OccupationMoment {
  double mean = 0.0;
  double stderr_mean = 0.0;
  long paths_used = 0;
};

inline OccupationMoment occupation_second_moment(const PathBatch& b, double t_begin,
                                                 double t_end) {
  if (!(t_begin >= 0.0) || !(t_begin < t_end))
    throw std::invalid_argument("jsde: occupation window needs 0 <= t_begin < t_end");
  OccupationMoment om;
  double mean = 0.0, m2 = 0.0;
  for (long p = 0; p < b.paths; ++p) {
    if (b.exploded(p)) continue;
    double acc = 0.0;
    long cnt = 0;
    for (long t = 0; t < b.times(); ++t) {
      const double tt = b.grid[t];
      if (tt > t_begin && tt <= t_end) {
        acc += squared_norm(b.state(p, t));
        ++cnt;
      }
    }
    if (cnt == 0) continue;
    const double v = acc / cnt;
    ++om.paths_used;
    const double d = v - mean;
    mean += d / om.paths_used;
    m2 += d * (v - mean);
  }
  if (om.paths_used == 0) throw std::runtime_error("jsde: empty occupation window");
  om.mean = mean;
  om.stderr_mean =
      om.paths_used > 1 ? std::sqrt(m2 / (om.paths_used - 1) / om.paths_used) : 0.0;
  return om;
}

// ---------------------------------------------------------------------------
// Distances between empirical measures
// ---------------------------------------------------------------------------

/// Exact Wasserstein-1 distance between two probability measures on R:
/// the integral of |F_mu - F_nu| via one sweep over the merged atom
/// positions.  Throws for dim != 1 (use energy_distance there).
inline double wasserstein1_1d(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu) {
  detail::validate_measure(mu, "wasserstein1_1d");
  detail::validate_measure(nu, "wasserstein1_1d");
  if (mu.dim != 1 || nu.dim != 1)
    throw std::invalid_argument("jsde: wasserstein1_1d needs dim == 1");
  auto flat = [](const EmpiricalMeasure& m) {
    std::vector<std::pair<double, double>> v(m.size());
    for (std::size_t i = 0; i < m.size(); ++i) v[i] = {m.atoms[i][0], m.weights[i]};
    std::sort(v.begin(), v.end());
    return v;
  };
  const auto a = flat(mu), b = flat(nu);
  std::size_t i = 0, j = 0;
  double F1 = 0.0, F2 = 0.0, w = 0.0, prev = 0.0;
  bool started = false;
  while (i < a.size() || j < b.size()) {
    const double va = i < a.size() ? a[i].first : std::numeric_limits<double>::infinity();
    const double vb = j < b.size() ? b[j].first : std::numeric_limits<double>::infinity();
    const double v = std::min(va, vb);
    if (started) w += std::abs(F1 - F2) * (v - prev);
    while (i < a.size() && a[i].first == v) F1 += a[i++].second;
    while (j < b.size() && b[j].first == v) F2 += b[j++].second;
    prev = v;
    started = true;
  }
  return w;
}

namespace detail {
inline constexpr std::uint64_t kResampleSeed = 0x656e65726779ull;

inline EmpiricalMeasure resample_measure(const EmpiricalMeasure& m, std::size_t target,
                                         std::uint64_t salt) {
  if (m.size() <= target) return m;
  Engine eng(derive_seed(kResampleSeed, salt));
  std::discrete_distribution<std::size_t> pick(m.weights.begin(), m.weights.end());
  EmpiricalMeasure out;
  out.dim = m.dim;
  out.atoms.reserve(target);
  for (std::size_t i = 0; i < target; ++i) out.atoms.push_back(m.atoms[pick(eng)]);
  out.weights.assign(target, 1.0 / target);
  return out;
}
}  // namespace detail

/// Energy distance 2 E|X-Y| - E|X-X'| - E|Y-Y'| between two probability
/// measures on R^d; zero iff the measures coincide.  Exact for inputs of at
/// most `max_atoms` atoms per side; larger inputs are reduced by a
/// deterministic weighted resample first.
inline double energy_distance(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu,
                              std::size_t max_atoms = 4096) {
  detail::validate_measure(mu, "energy_distance");
  detail::validate_measure(nu, "energy_distance");
  if (mu.dim != nu.dim)
    throw std::invalid_argument("jsde: energy_distance needs matching dimensions");
  if (max_atoms < 1) throw std::invalid_argument("jsde: max_atoms must be >= 1");
  const EmpiricalMeasure a = detail::resample_measure(mu, max_atoms, 1);
  const EmpiricalMeasure b = detail::resample_measure(nu, max_atoms, 2);
  auto cross = [](const EmpiricalMeasure& p, const EmpiricalMeasure& q) {
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < q.size(); ++j) row += q.weights[j] * norm(p.atoms[i] - q.atoms[j]);
      s += p.weights[i] * row;
    }
    return s;
  };
  return std::max(0.0, 2.0 * cross(a, b) - cross(a, a) - cross(b, b));
}

// ---------------------------------------------------------------------------
// Invariance defect
// ---------------------------------------------------------------------------

/// Distance between a candidate measure and its pushforward under the
/// dynamics over `step_horizon`: every atom is evolved once (per-atom seeds
/// derived from cfg.seed) and the weighted terminal cloud is compared with
/// the original measure (exact W1 in 1-d, energy distance otherwise).
inline double invariance_gap(const CoefficientSet& c, const EmpiricalMeasure& mu,
                             double step_horizon, const SimConfig& cfg) {
  detail::validate_measure(mu, "invariance_gap");
  if (mu.dim != c.dim) throw std::invalid_argument("jsde: invariance_gap dimension mismatch");
  const std::vector<double> grid = make_time_grid(cfg.dt, step_horizon);
  const long steps = static_cast<long>(grid.size()) - 1;
  EmpiricalMeasure pushed;
  pushed.dim = mu.dim;
  pushed.atoms.resize(mu.size());
  pushed.weights = mu.weights;
  const std::uint64_t base = derive_seed(cfg.seed, stream::kProbe);
  detail::parallel_paths(static_cast<long>(mu.size()), [&](long i) {
    const NoiseRealization noise = draw_noise(
        c.activity, c.dim, steps, step_horizon, derive_seed(base, static_cast<std::uint64_t>(i)));
    pushed.atoms[i] = drive(c, mu.atoms[i], grid, noise).final_state;
  });
  return c.dim == 1 ? wasserstein1_1d(mu, pushed) : energy_distance(mu, pushed);
}

// ---------------------------------------------------------------------------
// Smoothing cascade rate
// ---------------------------------------------------------------------------

/// Pairwise sup-gap statistics of a family of ensembles simulated under
/// smoothed drifts of different orders against shared noise.  For orders
/// k < l the theory predicts
///   E sup_{t<=T} |X^k_t - X^l_t|^2  <=  const * |1/k - 1/l|,
/// so each pair's gap is normalised by its separation |1/k - 1/l|; the family
/// is `bounded` when no ratio exceeds spread_limit times the ratio of the
/// most separated pair.
struct CascadeRate {
  struct Entry {
    int k = 0;
    int l = 0;
    double separation = 0.0;  // |1/k - 1/l|
    double gap = 0.0;         // mean over paths of sup_t |X^k - X^l|^2
    double ratio = 0.0;       // gap / separation
  };
  std::vector<Entry> entries;
  double fitted_constant = 0.0;   // max ratio
  double reference_ratio = 0.0;   // ratio of the most separated pair
  double spread_limit = 0.0;
  bool bounded = false;
};

inline CascadeRate cascade_rate(const std::map<int, PathBatch>& family,
                                double spread_limit = 3.0) {
  if (family.size() < 2)
    throw std::invalid_argument("jsde: cascade_rate needs at least two orders");
  const PathBatch& ref = family.begin()->second;
  for (const auto& [k, b] : family) {
    if (b.grid != ref.grid || b.paths != ref.paths || b.dim != ref.dim)
      throw std::invalid_argument("jsde: cascade batches must share grid, paths and dim");
    (void)k;
  }
  CascadeRate cr;
  cr.spread_limit = spread_limit;
  for (auto it = family.begin(); it != family.end(); ++it) {
    for (auto jt = std::next(it); jt != family.end(); ++jt) {
      const PathBatch& bk = it->second;
      const PathBatch& bl = jt->second;
      double acc = 0.0;
      long n = 0;
      for (long p = 0; p < bk.paths; ++p) {
        if (bk.exploded(p) || bl.exploded(p)) continue;
        double sup = 0.0;
        for (long t = 0; t < bk.times(); ++t)
          sup = std::max(sup, squared_norm(bk.state(p, t) - bl.state(p, t)));
        acc += sup;
        ++n;
      }
      if (n == 0) throw std::runtime_error("jsde: all cascade paths exploded");
      CascadeRate::Entry e;
      e.k = it->first;
      e.l = jt->first;
      e.separation = std::abs(1.0 / e.k - 1.0 / e.l);
      e.gap = acc / n;
      e.ratio = e.gap / e.separation;
      cr.entries.push_back(e);
    }
  }
  for (const auto& e : cr.entries) cr.fitted_constant = std::max(cr.fitted_constant, e.ratio);
  const auto most_separated =
      std::max_element(cr.entries.begin(), cr.entries.end(),
                       [](const auto& a, const auto& b) { return a.separation < b.separation; });
  cr.reference_ratio = most_separated->ratio;
  cr.bounded = cr.fitted_constant <= spread_limit * cr.reference_ratio ||
               cr.fitted_constant == 0.0;
  return cr;
}

// ---------------------------------------------------------------------------
// Sup-moment envelope
// ---------------------------------------------------------------------------

/// Affine fit of t -> log(1 + E sup_{s<=t} |X_s|^2) over the early part of
/// the horizon, checked against the rest: if the curve admits an exponential
/// envelope K (1 + |x|^2) e^{Ct}, the log-curve must not escape the affine
/// extrapolation of its own early segment.
struct EnvelopeFit {
  double intercept = 0.0;
  double slope = 0.0;
  double split_time = 0.0;
  double max_overshoot = 0.0;  // max over late t of (y - fit) / max(1, fit)
  double overshoot_limit = 0.0;
  bool within = false;
};

inline EnvelopeFit sup_moment_envelope(const MomentSeries& s, double fit_fraction = 0.5,
                                       double overshoot_limit = 0.10) {
  if (!(fit_fraction > 0.0 && fit_fraction < 1.0))
    throw std::invalid_argument("jsde: fit_fraction must lie in (0,1)");
  EnvelopeFit ef;
  ef.overshoot_limit = overshoot_limit;
  ef.split_time = fit_fraction * s.times.back();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  long n = 0;
  for (std::size_t i = 0; i < s.times.size(); ++i) {
    if (s.times[i] > ef.split_time) continue;
    const double x = s.times[i];
    const double y = std::log1p(s.sup_moment[i]);
    sx += x; sy += y; sxx += x * x; sxy += x * y;
    ++n;
  }
  if (n < 2) throw std::invalid_argument("jsde: envelope fit needs >= 2 early points");
  const double det = n * sxx - sx * sx;
  if (det == 0.0) throw std::runtime_error("jsde: degenerate envelope fit");
  ef.slope = (n * sxy - sx * sy) / det;
  ef.intercept = (sy - ef.slope * sx) / n;
  ef.max_overshoot = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < s.times.size(); ++i) {
    if (s.times[i] <= ef.split_time) continue;
    const double fit = ef.intercept + ef.slope * s.times[i];
    const double over = (std::log1p(s.sup_moment[i]) - fit) / std::max(1.0, fit);
    ef.max_overshoot = std::max(ef.max_overshoot, over);
  }
  if (!std::isfinite(ef.max_overshoot))
    throw std::invalid_argument("jsde: envelope fit needs points after the split");
  ef.within = ef.max_overshoot <= overshoot_limit;
  return ef;
}

}  // namespace jsde
