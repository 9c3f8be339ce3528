#pragma once

// Empirical structural-condition checkers.
//
// Each checker samples points (or pairs) uniformly from a ball, evaluates the
// defining quotient of one structural condition on the coefficient fields,
// and reports the largest value seen together with the witness that attained
// it.  Checkers never prove a condition; they estimate the best constant on
// the sampled region and, when a claimed constant is supplied, compare
// against it.
//
// Conditions on pairs (x, y):
//   LOL / GOL              (<b(x)-b(y), x-y> + |s(x)-s(y)|^2 + D(x,y)) / |x-y|^2
//   GL                     (|b(x)-b(y)|^2  + |s(x)-s(y)|^2 + D(x,y)) / |x-y|^2
//   SEP_LOCAL_LIPSCHITZ    (|s(x)-s(y)|^2 + D(x,y)) / |x-y|^2
// Conditions on points x:
//   GOLG                   (<b(x), x> + |s(x)|^2 + Q(x)) / (1 + |x|^2)
//   GLG                    (|b(x)|^2 + |s(x)|^2 + Q(x)) / (1 + |x|^2)
//   SEP_LINEAR_GROWTH      (|s(x)|^2 + Q(x)) / (1 + |x|^2)
//   LOCAL_BOUND            |b(x)|^2 + |s(x)|^2 + Q(x)
//   DISSIPATIVE            <b(x), x> + |s(x)|^2 + Q(x) + K |x|^2 - M   (excess; pass iff <= 0)
// with |.| the Hilbert-Schmidt norm on matrices, Q the nu-second moment and
// D the nu-difference moment of the jump part.

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

#include "jsde/coefficients.hpp"
#include "jsde/core.hpp"
#include "jsde/jumps.hpp"
#include "jsde/rng.hpp"

namespace jsde {

enum class ConditionId {
  LOL,                  // local one-sided Lipschitz (sampled on a ball)
  GOLG,                 // global one-sided linear growth
  GL,                   // global Lipschitz
  GLG,                  // global linear growth
  GOL,                  // global one-sided Lipschitz
  DISSIPATIVE,          // dissipative growth with margin K and offset M
  SEP_LINEAR_GROWTH,    // linear growth of diffusion + jumps alone
  LOCAL_BOUND,          // boundedness on a ball
  SEP_LOCAL_LIPSCHITZ,  // local Lipschitz of diffusion + jumps alone
};

inline std::string to_string(ConditionId id) {
  switch (id) {
    case ConditionId::LOL: return "LOL";
    case ConditionId::GOLG: return "GOLG";
    case ConditionId::GL: return "GL";
    case ConditionId::GLG: return "GLG";
    case ConditionId::GOL: return "GOL";
    case ConditionId::DISSIPATIVE: return "DISSIPATIVE";
    case ConditionId::SEP_LINEAR_GROWTH: return "SEP_LINEAR_GROWTH";
    case ConditionId::LOCAL_BOUND: return "LOCAL_BOUND";
    case ConditionId::SEP_LOCAL_LIPSCHITZ: return "SEP_LOCAL_LIPSCHITZ";
  }
  throw std::logic_error("jsde: unknown condition id");
}

inline ConditionId condition_from_string(const std::string& s) {
  for (ConditionId id :
       {ConditionId::LOL, ConditionId::GOLG, ConditionId::GL, ConditionId::GLG,
        ConditionId::GOL, ConditionId::DISSIPATIVE, ConditionId::SEP_LINEAR_GROWTH,
        ConditionId::LOCAL_BOUND, ConditionId::SEP_LOCAL_LIPSCHITZ})
    if (to_string(id) == s) return id;
  throw std::invalid_argument("jsde: unknown condition tag '" + s + "'");
}

inline bool is_pair_condition(ConditionId id) {
  return id == ConditionId::LOL || id == ConditionId::GL || id == ConditionId::GOL ||
         id == ConditionId::SEP_LOCAL_LIPSCHITZ;
}

/// Where and how much to sample.
struct SamplingPlan {
  double radius = 1.0;          // sample from the closed ball of this radius
  long pairs = 1000;            // number of quotient evaluations
  double min_separation = 1e-6; // pairs closer than this are resampled
  std::uint64_t seed = 0;
};

enum class Verdict { Pass, Fail, EstimateOnly };

inline std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::Pass: return "pass";
    case Verdict::Fail: return "fail";
    case Verdict::EstimateOnly: return "estimate_only";
  }
  throw std::logic_error("jsde: unknown verdict");
}

/// Outcome of one checker run.  `witness_x` / `witness_y` attain
/// `constant_estimate` exactly: re-evaluating the quotient at the witness
/// reproduces the estimate bit for bit.  For point conditions the two
/// witnesses coincide.  `aux_k` / `aux_m` carry the dissipative parameters
/// (zero for every other condition) so a report is self-contained.
struct ConditionReport {
  ConditionId condition_id = ConditionId::LOL;
  double constant_estimate = 0.0;
  Vec witness_x;
  Vec witness_y;
  long samples_used = 0;
  std::optional<double> claimed_constant;
  Verdict verdict = Verdict::EstimateOnly;
  double aux_k = 0.0;
  double aux_m = 0.0;
};

/// The defining quotient of `id` at (x, y); y is ignored by point conditions.
inline double condition_quotient(ConditionId id, const CoefficientSet& c, const Vec& x,
                                 const Vec& y, double aux_k = 0.0, double aux_m = 0.0) {
  switch (id) {
    case ConditionId::LOL:
    case ConditionId::GOL: {
      const Vec dxy = x - y;
      const double num = dot(c.drift(x) - c.drift(y), dxy) +
                         hs_squared_norm(c.diffusion(x) - c.diffusion(y)) +
                         nu_difference_moment(c.activity, c.jump, x, y);
      return num / squared_norm(dxy);
    }
    case ConditionId::GL: {
      const Vec dxy = x - y;
      const double num = squared_norm(c.drift(x) - c.drift(y)) +
                         hs_squared_norm(c.diffusion(x) - c.diffusion(y)) +
                         nu_difference_moment(c.activity, c.jump, x, y);
      return num / squared_norm(dxy);
    }
    case ConditionId::SEP_LOCAL_LIPSCHITZ: {
      const Vec dxy = x - y;
      const double num = hs_squared_norm(c.diffusion(x) - c.diffusion(y)) +
                         nu_difference_moment(c.activity, c.jump, x, y);
      return num / squared_norm(dxy);
    }
    case ConditionId::GOLG:
      return (dot(c.drift(x), x) + hs_squared_norm(c.diffusion(x)) +
              nu_second_moment(c.activity, c.jump, x)) /
             (1.0 + squared_norm(x));
    case ConditionId::GLG:
      return (squared_norm(c.drift(x)) + hs_squared_norm(c.diffusion(x)) +
              nu_second_moment(c.activity, c.jump, x)) /
             (1.0 + squared_norm(x));
    case ConditionId::SEP_LINEAR_GROWTH:
      return (hs_squared_norm(c.diffusion(x)) + nu_second_moment(c.activity, c.jump, x)) /
             (1.0 + squared_norm(x));
    case ConditionId::LOCAL_BOUND:
      return squared_norm(c.drift(x)) + hs_squared_norm(c.diffusion(x)) +
             nu_second_moment(c.activity, c.jump, x);
    case ConditionId::DISSIPATIVE:
      return dot(c.drift(x), x) + hs_squared_norm(c.diffusion(x)) +
             nu_second_moment(c.activity, c.jump, x) + aux_k * squared_norm(x) - aux_m;
  }
  throw std::logic_error("jsde: unknown condition id");
}

/// Re-evaluate a report's quotient at its stored witness; must reproduce
/// report.constant_estimate bit for bit.
inline double reevaluate_witness(const CoefficientSet& c, const ConditionReport& r) {
  return condition_quotient(r.condition_id, c, r.witness_x, r.witness_y, r.aux_k, r.aux_m);
}

namespace detail {

inline void validate_plan(const SamplingPlan& p) {
  if (!(p.radius > 0.0)) throw std::invalid_argument("jsde: sampling radius must be > 0");
  if (p.pairs < 1) throw std::invalid_argument("jsde: sampling plan needs pairs >= 1");
  if (!(p.min_separation > 0.0))
    throw std::invalid_argument("jsde: min_separation must be > 0");
  if (p.min_separation >= p.radius)
    throw std::invalid_argument("jsde: min_separation must be < radius");
}

// Shared sampling loop.  The draw sequence depends only on (plan.seed, i), so
// a plan with more pairs replays the shorter plan's samples as its prefix and
// the running maximum is nondecreasing in plan.pairs.
inline ConditionReport run_condition(ConditionId id, const CoefficientSet& c,
                                     const SamplingPlan& plan, std::optional<double> claimed,
                                     double aux_k = 0.0, double aux_m = 0.0) {
  validate_plan(plan);
  const bool pair = is_pair_condition(id);
  Engine eng(plan.seed);
  ConditionReport rep;
  rep.condition_id = id;
  rep.samples_used = plan.pairs;
  rep.claimed_constant = claimed;
  rep.aux_k = aux_k;
  rep.aux_m = aux_m;
  bool first = true;
  for (long i = 0; i < plan.pairs; ++i) {
    const Vec x = sample_ball(c.dim, plan.radius, eng);
    Vec y = x;
    if (pair) {
      int tries = 0;
      do {
        y = sample_ball(c.dim, plan.radius, eng);
        if (++tries > 1'000'000)
          throw std::runtime_error("jsde: could not draw a separated pair");
      } while (norm(x - y) < plan.min_separation);
    }
    const double q = condition_quotient(id, c, x, y, aux_k, aux_m);
    if (!std::isfinite(q))
      throw std::runtime_error("jsde: non-finite condition quotient for " + to_string(id));
    if (first || q > rep.constant_estimate) {
      rep.constant_estimate = q;
      rep.witness_x = x;
      rep.witness_y = y;
      first = false;
    }
  }
  if (claimed)
    rep.verdict = rep.constant_estimate <= *claimed ? Verdict::Pass : Verdict::Fail;
  else
    rep.verdict = Verdict::EstimateOnly;
  return rep;
}

}  // namespace detail

inline ConditionReport check_local_one_sided_lipschitz(const CoefficientSet& c,
                                                       const SamplingPlan& plan,
                                                       std::optional<double> claimed = {}) {
  return detail::run_condition(ConditionId::LOL, c, plan, claimed);
}

inline ConditionReport check_global_one_sided_lipschitz(const CoefficientSet& c,
                                                        const SamplingPlan& plan,
                                                        std::optional<double> claimed = {}) {
  return detail::run_condition(ConditionId::GOL, c, plan, claimed);
}

inline ConditionReport check_global_lipschitz(const CoefficientSet& c, const SamplingPlan& plan,
                                              std::optional<double> claimed = {}) {
  return detail::run_condition(ConditionId::GL, c, plan, claimed);
}

inline ConditionReport check_separate_local_lipschitz(const CoefficientSet& c,
                                                      const SamplingPlan& plan,
                                                      std::optional<double> claimed = {}) {
  return detail::run_condition(ConditionId::SEP_LOCAL_LIPSCHITZ, c, plan, claimed);
}

inline ConditionReport check_global_one_sided_linear_growth(const CoefficientSet& c,
                                                            const SamplingPlan& plan,
                                                            std::optional<double> claimed = {}) {
  return detail::run_condition(ConditionId::GOLG, c, plan, claimed);
}

inline ConditionReport check_global_linear_growth(const CoefficientSet& c,
                                                  const SamplingPlan& plan,
                                                  std::optional<double> claimed = {}) {
  return detail::run_condition(ConditionId::GLG, c, plan, claimed);
}

inline ConditionReport check_separate_linear_growth(const CoefficientSet& c,
                                                    const SamplingPlan& plan,
                                                    std::optional<double> claimed = {}) {
  return detail::run_condition(ConditionId::SEP_LINEAR_GROWTH, c, plan, claimed);
}

inline ConditionReport check_local_boundedness(const CoefficientSet& c, const SamplingPlan& plan,
                                               std::optional<double> claimed = {}) {
  return detail::run_condition(ConditionId::LOCAL_BOUND, c, plan, claimed);
}

/// Pass iff the sampled dissipative excess <b,x> + |s|^2 + Q + K|x|^2 - M
/// stays <= 0 on the ball.
inline ConditionReport check_dissipative_growth(const CoefficientSet& c, const SamplingPlan& plan,
                                                double K, double M) {
  if (!(K > 0.0) || !(M > 0.0))
    throw std::invalid_argument("jsde: dissipative check needs K > 0 and M > 0");
  return detail::run_condition(ConditionId::DISSIPATIVE, c, plan, 0.0, K, M);
}

}  // namespace jsde
