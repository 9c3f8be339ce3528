#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdlib>
#include <vector>

#include "jsde/coefficients.hpp"
#include "jsde/estimate.hpp"
#include "jsde/simulate.hpp"

using namespace jsde;

namespace {

CoefficientSet drift_only(int dim, DriftField b) {
  return make_coefficients(dim, std::move(b), zero_diffusion(dim), zero_kernel(dim),
                           JumpActivity::none());
}

CoefficientSet ou_model(double sigma) {
  return make_coefficients(1, linear_drift(1, -1.0), constant_diffusion(1, sigma),
                           zero_kernel(1), JumpActivity::none());
}

struct EnvGuard {
  ~EnvGuard() { unsetenv("JSDE_THREADS"); }
};

}  // namespace

TEST_CASE("time grids end exactly on the horizon") {
  const std::vector<double> g = make_time_grid(0.1, 0.35);
  REQUIRE(g.size() == 5);
  REQUIRE(g[0] == 0.0);
  REQUIRE(g[1] == 0.1);
  REQUIRE(g[3] == 0.30000000000000004);  // 3 * 0.1 in binary
  REQUIRE(g[4] == 0.35);

  const std::vector<double> whole = make_time_grid(0.1, 1.0);
  REQUIRE(whole.size() == 11);
  REQUIRE(whole.back() == 1.0);

  const std::vector<double> awkward = make_time_grid(0.1, 0.3);
  REQUIRE(awkward.size() == 4);
  REQUIRE(awkward.back() == 0.3);

  REQUIRE_THROWS_AS(make_time_grid(0.0, 1.0), std::invalid_argument);
  REQUIRE_THROWS_AS(make_time_grid(0.5, 0.25), std::invalid_argument);

  REQUIRE(grid_index(whole, 0.5) == 5);
  REQUIRE(grid_index(whole, 1.0) == 10);
  REQUIRE_THROWS_AS(grid_index(whole, 0.55), std::invalid_argument);
}

TEST_CASE("single steps") {
  const CoefficientSet still = drift_only(1, zero_drift(1));
  const Vec x{1.25};
  REQUIRE(step(still, x, 0.1, Vec::zero(1), StepJumps{}) == x);

  const CoefficientSet pull = drift_only(1, linear_drift(1, -1.0));
  REQUIRE(step(pull, Vec{1.0}, 0.1, Vec::zero(1), StepJumps{})[0] == 0.9);

  // one jump of a mean-zero additive train adds exactly its mark
  const CoefficientSet jumpy = make_coefficients(
      1, zero_drift(1), zero_diffusion(1), additive_kernel(1, 1.0),
      JumpActivity::finite(1.0, MarkDistribution::normal(0, 1)));
  const double mark = 0.3;
  REQUIRE(step(jumpy, Vec{2.0}, 0.1, Vec::zero(1), StepJumps{&mark, 1})[0] == 2.3);
}

TEST_CASE("jumps inside one step compound sequentially in time order") {
  const CoefficientSet c = make_coefficients(
      1, zero_drift(1), zero_diffusion(1), multiplicative_kernel(1.0),
      JumpActivity::finite(1.0, MarkDistribution::normal(0, 1)));
  const double marks[2] = {0.2, -0.4};
  const Vec got = step(c, Vec{1.5}, 0.01, Vec::zero(1), StepJumps{marks, 2});
  Vec want{1.5};
  want += want * (1.0 * marks[0]);
  want += want * (1.0 * marks[1]);
  REQUIRE(got == want);
}

TEST_CASE("zero coefficients keep every state at the initial condition") {
  SimConfig cfg;
  cfg.dt = 0.05;
  cfg.horizon = 1.0;
  cfg.paths = 7;
  cfg.seed = 4;
  cfg.initial = {Vec{2.0, -1.0}};
  const PathBatch b = simulate(drift_only(2, zero_drift(2)), cfg);
  REQUIRE(b.paths == 7);
  for (long p = 0; p < b.paths; ++p) {
    REQUIRE(!b.exploded(p));
    for (long t = 0; t < b.times(); ++t) REQUIRE(b.state(p, t) == cfg.initial[0]);
  }
}

TEST_CASE("noiseless linear decay tracks the exponential") {
  SimConfig cfg;
  cfg.dt = 1e-3;
  cfg.horizon = 1.0;
  cfg.paths = 1;
  cfg.initial = {Vec{1.0}};
  const PathBatch b = simulate(drift_only(1, linear_drift(1, -1.0)), cfg);
  REQUIRE(std::abs(b.state(0, b.times() - 1)[0] - std::exp(-1.0)) < 2e-3);
}

TEST_CASE("driven linear model matches its stationary variance") {
  SimConfig cfg;
  cfg.dt = 0.01;
  cfg.horizon = 5.0;
  cfg.paths = 10000;
  cfg.seed = 21;
  cfg.initial = {Vec{0.0}};
  const PathBatch b = simulate(ou_model(1.0), cfg);
  double s = 0.0, ss = 0.0;
  for (long p = 0; p < b.paths; ++p) {
    const double v = b.state(p, b.times() - 1)[0];
    s += v;
    ss += v * v;
  }
  const double var = (ss - s * s / cfg.paths) / (cfg.paths - 1);
  const double want = (1.0 - std::exp(-10.0)) / 2.0;
  // 3 sigma for a variance estimate of a roughly Gaussian sample
  REQUIRE(std::abs(var - want) < 3.0 * std::sqrt(2.0 * want * want / cfg.paths) + 3e-3);
}

TEST_CASE("compensated jump noise is a martingale with the predicted variance") {
  const CoefficientSet c = make_coefficients(
      1, zero_drift(1), zero_diffusion(1), additive_kernel(1, 1.0),
      JumpActivity::finite(2.0, MarkDistribution::normal(0, 1)));
  SimConfig cfg;
  cfg.dt = 0.01;
  cfg.horizon = 2.0;
  cfg.paths = 4000;
  cfg.seed = 8;
  cfg.initial = {Vec{0.0}};
  const PathBatch b = simulate(c, cfg);
  double s = 0.0, ss = 0.0;
  for (long p = 0; p < b.paths; ++p) {
    const double v = b.state(p, b.times() - 1)[0];
    s += v;
    ss += v * v;
  }
  const double mean = s / cfg.paths;
  const double second = ss / cfg.paths;
  const double lam_t = 2.0 * 2.0;  // rate * horizon, unit mark second moment
  REQUIRE(std::abs(mean) < 3.0 * std::sqrt(lam_t / cfg.paths));
  const double var_of_sq = 3.0 * lam_t * lam_t + lam_t * 3.0 - lam_t * lam_t;
  REQUIRE(std::abs(second - lam_t) < 3.0 * std::sqrt(var_of_sq / cfg.paths));
}

TEST_CASE("synchronous coupling from equal starts reproduces the plain batch bitwise") {
  const CoefficientSet c = make_coefficients(
      1, dissipative_alpha_drift(1, 0.5, 1.0), constant_diffusion(1, 0.5),
      additive_kernel(1, 0.2), JumpActivity::finite(1.0, MarkDistribution::normal(0, 1)));
  SimConfig cfg;
  cfg.dt = 0.01;
  cfg.horizon = 1.0;
  cfg.paths = 50;
  cfg.seed = 33;
  cfg.initial = {Vec{0.7}};
  const CoupledBatch cb = simulate_coupled(c, cfg, Vec{0.7}, Vec{0.7});
  REQUIRE(cb.first.data == cb.second.data);
  const PathBatch plain = simulate(c, cfg);
  REQUIRE(cb.first.data == plain.data);
  REQUIRE(cb.first.path_seeds == plain.path_seeds);
}

TEST_CASE("noiseless coupled gap contracts at the exact linear rate") {
  SimConfig cfg;
  cfg.dt = 0.1;
  cfg.horizon = 1.0;
  cfg.paths = 1;
  cfg.seed = 1;
  const CoupledBatch cb = simulate_coupled(drift_only(1, linear_drift(1, -1.0)), cfg,
                                           Vec{2.0}, Vec{1.0});
  const long last = cb.first.times() - 1;
  const double gap = cb.first.state(0, last)[0] - cb.second.state(0, last)[0];
  REQUIRE_THAT(gap * gap, Catch::Matchers::WithinRel(std::pow(0.9, 20), 1e-9));
}

TEST_CASE("coupled mean-square gap of the dissipative power drift stays bounded") {
  const CoefficientSet c = make_coefficients(1, alpha_drift(1, 0.5),
                                             constant_diffusion(1, 0.3), zero_kernel(1),
                                             JumpActivity::none());
  SimConfig cfg;
  cfg.dt = 1e-3;
  cfg.horizon = 1.0;
  cfg.paths = 1000;
  cfg.seed = 13;
  const double d0 = 0.01;
  const CoupledBatch cb = simulate_coupled(c, cfg, Vec{1.0}, Vec{1.0 + d0});
  double acc = 0.0;
  const long last = cb.first.times() - 1;
  for (long p = 0; p < cfg.paths; ++p)
    acc += squared_norm(cb.first.state(p, last) - cb.second.state(p, last));
  REQUIRE(acc / cfg.paths <= 10.0 * d0 * d0);
}

TEST_CASE("ball-truncated runs agree with the base dynamics while inside the ball") {
  const CoefficientSet base = ou_model(0.3);
  const TruncatedCoefficients tc = truncate(base, 5.0, LocalConstants{0.0, 50.0});
  SimConfig cfg;
  cfg.dt = 0.01;
  cfg.horizon = 1.0;
  cfg.paths = 200;
  cfg.seed = 10;
  cfg.initial = {Vec{1.0}};
  const TruncatedSimResult res = simulate_truncated(tc, cfg);
  const PathBatch plain = simulate(base, cfg);
  long stayed = 0;
  for (long p = 0; p < cfg.paths; ++p) {
    if (res.exits[p].exited()) continue;
    ++stayed;
    for (long t = 0; t < plain.times(); ++t)
      REQUIRE(res.batch.state(p, t) == plain.state(p, t));
  }
  REQUIRE(stayed == cfg.paths);  // dissipative start far inside the ball
  // boundedness of the exit fraction, trivially zero here
  REQUIRE(res.batch.exploded_count() == 0);
}

TEST_CASE("exit records") {
  const CoefficientSet base = drift_only(1, zero_drift(1));
  const TruncatedCoefficients tc = truncate(base, 1.0, LocalConstants{0.0, 1.0});
  SimConfig cfg;
  cfg.dt = 0.1;
  cfg.horizon = 0.5;
  cfg.paths = 1;

  cfg.initial = {Vec{1.5}};
  const TruncatedSimResult out = simulate_truncated(tc, cfg);
  REQUIRE(out.exits[0].exited());
  REQUIRE(out.exits[0].tau == 0.0);
  REQUIRE(out.exits[0].exit_index == 0);
  REQUIRE(out.exits[0].exit_state == Vec{1.5});

  cfg.initial = {Vec{0.5}};
  const TruncatedSimResult in = simulate_truncated(tc, cfg);
  REQUIRE(!in.exits[0].exited());
  REQUIRE(std::isinf(in.exits[0].tau));
}

TEST_CASE("smoothed-drift family under shared noise collapses for affine drifts") {
  const CoefficientSet c = ou_model(0.5);
  SimConfig cfg;
  cfg.dt = 1e-3;
  cfg.horizon = 1.0;
  cfg.paths = 20;
  cfg.seed = 77;
  cfg.initial = {Vec{1.0}};
  const std::map<int, PathBatch> fam = mollified_cascade(c, cfg, {1, 3, 9}, 50.0);
  REQUIRE(fam.size() == 3);
  const PathBatch& ref = fam.at(1);
  for (const auto& [k, batch] : fam) {
    REQUIRE(batch.path_seeds == ref.path_seeds);
    double worst = 0.0;
    for (std::size_t i = 0; i < batch.data.size(); ++i)
      worst = std::max(worst, std::abs(batch.data[i] - ref.data[i]));
    REQUIRE(worst < 1e-12);
  }
  REQUIRE_THROWS_AS(mollified_cascade(c, cfg, {4, 2}, 50.0), std::invalid_argument);
  REQUIRE_THROWS_AS(mollified_cascade(c, cfg, {}, 50.0), std::invalid_argument);
}

TEST_CASE("explosions freeze the path and are reported, not fatal") {
  const DriftField cubic = [](const Vec& x) { return Vec{x[0] * x[0] * x[0]}; };
  SimConfig cfg;
  cfg.dt = 0.5;
  cfg.horizon = 3.0;
  cfg.paths = 3;
  cfg.seed = 2;
  cfg.initial = {Vec{3.0}};
  const PathBatch b = simulate(drift_only(1, cubic), cfg);
  REQUIRE(b.exploded_count() == 3);
  REQUIRE(b.exploded_fraction() == 1.0);
  for (long p = 0; p < b.paths; ++p) {
    const long s = b.explosion_step[p];
    REQUIRE(s >= 0);
    for (long t = 0; t < b.times(); ++t) {
      REQUIRE(all_finite(b.state(p, t)));
      if (t >= s) REQUIRE(b.state(p, t) == b.state(p, s));
    }
  }
  REQUIRE_THROWS_AS(moment_series(b), std::runtime_error);
}

TEST_CASE("worker count changes nothing but wall time") {
  EnvGuard guard;
  unsetenv("JSDE_THREADS");
  const CoefficientSet c = make_coefficients(
      1, dissipative_alpha_drift(1, 0.5, 1.0), constant_diffusion(1, 0.5),
      additive_kernel(1, 0.2), JumpActivity::finite(1.0, MarkDistribution::normal(0, 1)));
  SimConfig cfg;
  cfg.dt = 0.01;
  cfg.horizon = 1.0;
  cfg.paths = 101;  // not divisible by the worker count
  cfg.seed = 55;
  cfg.initial = {Vec{0.3}};
  const PathBatch serial = simulate(c, cfg);

  setenv("JSDE_THREADS", "4", 1);
  const PathBatch parallel = simulate(c, cfg);
  REQUIRE(serial.data == parallel.data);
  REQUIRE(serial.path_seeds == parallel.path_seeds);
  REQUIRE(serial.explosion_step == parallel.explosion_step);

  setenv("JSDE_THREADS", "abc", 1);
  REQUIRE_THROWS_AS(simulate(c, cfg), std::invalid_argument);
  setenv("JSDE_THREADS", "0", 1);
  REQUIRE_THROWS_AS(simulate(c, cfg), std::invalid_argument);
}

TEST_CASE("discretisation bias of the terminal second moment shrinks with the step") {
  const double exact = (1.0 - std::exp(-2.0)) / 2.0;
  double coarse_err = 0.0, fine_err = 0.0;
  for (int round = 0; round < 2; ++round) {
    SimConfig cfg;
    cfg.dt = round == 0 ? 0.2 : 0.05;
    cfg.horizon = 1.0;
    cfg.paths = 50000;
    cfg.seed = 99;
    cfg.initial = {Vec{0.0}};
    const PathBatch b = simulate(ou_model(1.0), cfg);
    double ss = 0.0;
    for (long p = 0; p < b.paths; ++p) ss += squared_norm(b.state(p, b.times() - 1));
    const double err = std::abs(ss / cfg.paths - exact);
    (round == 0 ? coarse_err : fine_err) = err;
  }
  REQUIRE(fine_err < coarse_err);
}

TEST_CASE("configuration validation") {
  const CoefficientSet c = drift_only(1, zero_drift(1));
  SimConfig cfg;
  cfg.initial = {Vec{0.0}};
  cfg.paths = 0;
  REQUIRE_THROWS_AS(simulate(c, cfg), std::invalid_argument);
  cfg.paths = 2;
  cfg.initial = {Vec{0.0}, Vec{1.0}, Vec{2.0}};
  REQUIRE_THROWS_AS(simulate(c, cfg), std::invalid_argument);
  cfg.initial = {Vec{0.0, 1.0}};
  REQUIRE_THROWS_AS(simulate(c, cfg), std::invalid_argument);
  cfg.initial.clear();
  REQUIRE_THROWS_AS(simulate(c, cfg), std::invalid_argument);
}
