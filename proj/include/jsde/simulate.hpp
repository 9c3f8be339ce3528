#pragma once

// Euler scheme for jump diffusions driven by compensated Poisson noise.
//
// One explicit step over [t, t+h] with Wiener increment dW and the jump marks
// u_1..u_m falling inside the step window:
//
//   x' = x + b(x) h + sigma(x) dW - h * integral g(x,u) nu(du)
//   then, in time order:  x' <- x' + g(x', u_i)
//
// i.e. the continuous part sees the compensator drift of the *current* state
// and jumps are applied sequentially at the end of the step, each evaluated
// at the running post-jump state.
//
// Noise is materialised per path before driving (Gaussian table + jump
// train), derived from domain-separated per-path seeds.  Because a path's
// noise depends only on (master seed, path index), synchronous couplings and
// smoothing cascades reuse identical noise without any extra plumbing, and
// results are bitwise reproducible for any thread count.

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "jsde/coefficients.hpp"
#include "jsde/core.hpp"
#include "jsde/jumps.hpp"
#include "jsde/mollify.hpp"
#include "jsde/rng.hpp"

namespace jsde {

/// States beyond this norm (or any non-finite state) count as exploded.
inline constexpr double kExplosionNorm = 1e12;

/// Uniform grid 0, dt, 2dt, ..., horizon with ceil(horizon/dt) steps; the
/// last step is shortened so the grid ends at `horizon` exactly.
inline std::vector<double> make_time_grid(double dt, double horizon) {
  if (!(dt > 0.0)) throw std::invalid_argument("jsde: dt must be > 0");
  if (!(horizon >= dt)) throw std::invalid_argument("jsde: horizon must be >= dt");
  long n = static_cast<long>(std::ceil(horizon / dt - 1e-9));
  if (n < 1) n = 1;
  std::vector<double> grid(n + 1);
  for (long i = 0; i < n; ++i) grid[i] = static_cast<double>(i) * dt;
  grid[n] = horizon;
  for (long i = 0; i < n; ++i)
    if (!(grid[i] < grid[i + 1])) throw std::logic_error("jsde: degenerate time grid");
  return grid;
}

struct SimConfig {
  double dt = 1e-3;
  double horizon = 1.0;
  long paths = 1;
  std::uint64_t seed = 0;
  std::vector<Vec> initial;  // one entry (broadcast) or one per path
};

/// An ensemble of paths on a common grid.  Storage is flat and path-major:
/// state i of path p at grid index t lives at data[(p * times + t) * dim + i].
struct PathBatch {
  std::vector<double> grid;
  int dim = 0;
  long paths = 0;
  std::vector<double> data;
  std::vector<std::uint64_t> path_seeds;
  std::vector<long> explosion_step;  // step index that exploded, -1 if none

  long times() const { return static_cast<long>(grid.size()); }
  long steps() const { return times() - 1; }
  double horizon() const { return grid.back(); }

  Vec state(long p, long t) const {
    Vec v(dim);
    const double* src = &data[(static_cast<std::size_t>(p) * times() + t) * dim];
    for (int i = 0; i < dim; ++i) v[i] = src[i];
    return v;
  }

  bool exploded(long p) const { return explosion_step[p] >= 0; }
  long exploded_count() const {
    long n = 0;
    for (long e : explosion_step) n += (e >= 0);
    return n;
  }
  double exploded_fraction() const {
    return paths == 0 ? 0.0 : static_cast<double>(exploded_count()) / paths;
  }
};

/// Pre-drawn randomness of one path: a table of standard normals (step-major,
/// `steps * dim` entries) and the jump train over the whole horizon.
struct NoiseRealization {
  std::vector<double> gauss;
  JumpTrain train;
};

inline NoiseRealization draw_noise(const JumpActivity& activity, int dim, long steps,
                                   double horizon, std::uint64_t path_seed) {
  NoiseRealization nr;
  Engine weng(derive_seed(path_seed, stream::kWiener));
  std::normal_distribution<double> gauss(0.0, 1.0);
  nr.gauss.resize(static_cast<std::size_t>(steps) * dim);
  for (double& g : nr.gauss) g = gauss(weng);
  nr.train = sample_train(activity, horizon, derive_seed(path_seed, stream::kJumps));
  return nr;
}

/// Jump marks falling inside one step window, already in time order.
struct StepJumps {
  const double* marks = nullptr;
  std::size_t count = 0;
};

/// One Euler step; dW is the actual Wiener increment over the step.
inline Vec step(const CoefficientSet& c, const Vec& x, double h, const Vec& dW,
                const StepJumps& jumps) {
  Vec next = x + c.drift(x) * h + c.diffusion(x) * dW;
  if (c.activity.rate() > 0.0) {
    next -= compensator_drift(c.activity, c.jump, x) * h;
    for (std::size_t j = 0; j < jumps.count; ++j) next += c.jump.eval(next, jumps.marks[j]);
  }
  return next;
}

struct DriveResult {
  Vec final_state;
  long explosion_step = -1;
};

/// Evolve one path over the grid against fixed noise.  When `out` is non-null
/// it receives all grid states (grid.size() * dim doubles).  On explosion the
/// path is frozen at its last finite state and the offending step recorded.
inline DriveResult drive(const CoefficientSet& c, const Vec& x0, const std::vector<double>& grid,
                         const NoiseRealization& noise, double* out = nullptr) {
  const int dim = c.dim;
  const long steps = static_cast<long>(grid.size()) - 1;
  Vec x = x0;
  DriveResult res;
  auto record = [&](long t, const Vec& v) {
    if (!out) return;
    double* dst = out + static_cast<std::size_t>(t) * dim;
    for (int i = 0; i < dim; ++i) dst[i] = v[i];
  };
  record(0, x);
  std::size_t jc = 0;  // cursor into the sorted jump train
  for (long s = 0; s < steps; ++s) {
    if (res.explosion_step < 0) {
      const double h = grid[s + 1] - grid[s];
      Vec dW(dim);
      const double sqrt_h = std::sqrt(h);
      for (int i = 0; i < dim; ++i)
        dW[i] = sqrt_h * noise.gauss[static_cast<std::size_t>(s) * dim + i];
      StepJumps sj;
      const std::size_t first = jc;
      while (jc < noise.train.times.size() && noise.train.times[jc] < grid[s + 1]) ++jc;
      sj.marks = noise.train.marks.data() + first;
      sj.count = jc - first;
      const Vec next = step(c, x, h, dW, sj);
      if (!all_finite(next) || norm(next) > kExplosionNorm)
        res.explosion_step = s;  // keep x frozen from here on
      else
        x = next;
    }
    record(s + 1, x);
  }
  res.final_state = x;
  return res;
}

namespace detail {

inline void validate_sim(const CoefficientSet& c, const SimConfig& cfg) {
  if (!c.drift || !c.diffusion || !c.jump.eval)
    throw std::invalid_argument("jsde: coefficient fields must be non-null");
  if (cfg.paths < 1) throw std::invalid_argument("jsde: paths must be >= 1");
  if (cfg.initial.empty())
    throw std::invalid_argument("jsde: initial states must not be empty");
  if (cfg.initial.size() != 1 && static_cast<long>(cfg.initial.size()) != cfg.paths)
    throw std::invalid_argument("jsde: need one initial state or one per path");
  for (const Vec& v : cfg.initial)
    if (v.dim() != c.dim)
      throw std::invalid_argument("jsde: initial state dimension mismatch");
}

inline int thread_count_from_env() {
  const char* s = std::getenv("JSDE_THREADS");
  if (!s || !*s) return 1;
  char* end = nullptr;
  const long v = std::strtol(s, &end, 10);
  if (end == s || *end != '\0' || v < 1)
    throw std::invalid_argument("jsde: JSDE_THREADS must be a positive integer");
  return static_cast<int>(std::min(v, 256L));
}

// Run fn(p) for p in [0, paths), possibly across threads.  Work items only
// write disjoint state, and each item's randomness is derived from its own
// index, so the result is identical for every thread count.
template <typename Fn>
inline void parallel_paths(long paths, const Fn& fn) {
  const int want = thread_count_from_env();
  const int nt = static_cast<int>(std::min<long>(want, paths));
  if (nt <= 1) {
    for (long p = 0; p < paths; ++p) fn(p);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(nt);
  for (int t = 0; t < nt; ++t) {
    const long lo = paths * t / nt;
    const long hi = paths * (t + 1) / nt;
    pool.emplace_back([lo, hi, &fn] {
      for (long p = lo; p < hi; ++p) fn(p);
    });
  }
  for (auto& th : pool) th.join();
}

inline PathBatch empty_batch(const CoefficientSet& c, const SimConfig& cfg,
                             std::vector<double> grid) {
  PathBatch b;
  b.grid = std::move(grid);
  b.dim = c.dim;
  b.paths = cfg.paths;
  b.data.resize(static_cast<std::size_t>(cfg.paths) * b.times() * c.dim);
  b.path_seeds.resize(cfg.paths);
  b.explosion_step.assign(cfg.paths, -1);
  return b;
}

}  // namespace detail

/// Simulate an ensemble.  Path p's randomness depends only on
/// (cfg.seed, p); the JSDE_THREADS environment variable may parallelise
/// across paths without changing any output byte.
inline PathBatch simulate(const CoefficientSet& c, const SimConfig& cfg) {
  detail::validate_sim(c, cfg);
  PathBatch b = detail::empty_batch(c, cfg, make_time_grid(cfg.dt, cfg.horizon));
  const long T = b.times();
  detail::parallel_paths(cfg.paths, [&](long p) {
    const std::uint64_t ps = derive_seed(cfg.seed, static_cast<std::uint64_t>(p));
    b.path_seeds[p] = ps;
    const NoiseRealization noise = draw_noise(c.activity, c.dim, b.steps(), cfg.horizon, ps);
    const Vec& x0 = cfg.initial.size() == 1 ? cfg.initial[0] : cfg.initial[p];
    const DriveResult r =
        drive(c, x0, b.grid, noise, &b.data[static_cast<std::size_t>(p) * T * c.dim]);
    b.explosion_step[p] = r.explosion_step;
  });
  return b;
}

/// Two ensembles driven by the *same* noise per path index, started from x
/// and y (synchronous coupling).  With x == y the batches are bitwise equal.
struct CoupledBatch {
  PathBatch first;
  PathBatch second;
};

inline CoupledBatch simulate_coupled(const CoefficientSet& c, const SimConfig& cfg, const Vec& x,
                                     const Vec& y) {
  if (x.dim() != c.dim || y.dim() != c.dim)
    throw std::invalid_argument("jsde: coupled initial state dimension mismatch");
  SimConfig local = cfg;
  local.initial = {x};
  detail::validate_sim(c, local);
  const std::vector<double> grid = make_time_grid(cfg.dt, cfg.horizon);
  CoupledBatch out;
  out.first = detail::empty_batch(c, local, grid);
  out.second = detail::empty_batch(c, local, grid);
  const long T = static_cast<long>(grid.size());
  detail::parallel_paths(cfg.paths, [&](long p) {
    const std::uint64_t ps = derive_seed(cfg.seed, static_cast<std::uint64_t>(p));
    out.first.path_seeds[p] = ps;
    out.second.path_seeds[p] = ps;
    const NoiseRealization noise =
        draw_noise(c.activity, c.dim, T - 1, cfg.horizon, ps);
    const std::size_t off = static_cast<std::size_t>(p) * T * c.dim;
    out.first.explosion_step[p] = drive(c, x, grid, noise, &out.first.data[off]).explosion_step;
    out.second.explosion_step[p] = drive(c, y, grid, noise, &out.second.data[off]).explosion_step;
  });
  return out;
}

/// First-exit data of one path from the open ball of radius R: the first grid
/// time with |X_t| >= R, +infinity if the path never leaves the ball.
struct StoppingTimeRecord {
  double radius = 0.0;
  double tau = std::numeric_limits<double>::infinity();
  long exit_index = -1;  // grid index attaining the exit
  Vec exit_state;
  bool exited() const { return exit_index >= 0; }
};

struct TruncatedSimResult {
  PathBatch batch;
  std::vector<StoppingTimeRecord> exits;
};

/// Simulate the ball-truncated coefficients and record, per path, the exit
/// time from the truncation ball.  Paths that stay inside the ball never see
/// the cutoff's ramp, so they agree bitwise with paths of the untruncated
/// system under the same config.
inline TruncatedSimResult simulate_truncated(const TruncatedCoefficients& tc,
                                             const SimConfig& cfg) {
  TruncatedSimResult res;
  res.batch = simulate(tc.coefficients(), cfg);
  const double R = tc.radius();
  res.exits.resize(res.batch.paths);
  for (long p = 0; p < res.batch.paths; ++p) {
    StoppingTimeRecord rec;
    rec.radius = R;
    for (long t = 0; t < res.batch.times(); ++t) {
      const Vec xt = res.batch.state(p, t);
      if (norm(xt) >= R) {
        rec.tau = res.batch.grid[t];
        rec.exit_index = t;
        rec.exit_state = xt;
        break;
      }
    }
    res.exits[p] = rec;
  }
  return res;
}

/// Simulate the same equation under smoothed drifts of several orders k,
/// reusing identical noise per path index across the whole family.
inline std::map<int, PathBatch> mollified_cascade(const CoefficientSet& c, const SimConfig& cfg,
                                                  const std::vector<int>& orders,
                                                  double drift_bound, int nodes_per_axis = 33) {
  if (orders.empty()) throw std::invalid_argument("jsde: cascade needs at least one order");
  for (std::size_t i = 0; i < orders.size(); ++i) {
    if (orders[i] < 1) throw std::invalid_argument("jsde: cascade orders must be >= 1");
    if (i > 0 && orders[i] <= orders[i - 1])
      throw std::invalid_argument("jsde: cascade orders must be strictly increasing");
  }
  std::map<int, PathBatch> out;
  for (int k : orders) {
    CoefficientSet ck = c;
    ck.drift = mollify(c.drift, c.dim, k, drift_bound, nodes_per_axis).as_field();
    out.emplace(k, simulate(ck, cfg));
  }
  return out;
}

/// Index of grid time t (relative tolerance 1e-9); throws if t is off-grid.
inline long grid_index(const std::vector<double>& grid, double t) {
  const double tol = 1e-9 * std::max(1.0, std::abs(t));
  for (long i = 0; i < static_cast<long>(grid.size()); ++i)
    if (std::abs(grid[i] - t) <= tol) return i;
  throw std::invalid_argument("jsde: time " + std::to_string(t) + " is not on the grid");
}

}  // namespace jsde
