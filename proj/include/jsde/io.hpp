#pragma once

// Artifact serialisation: CSV writers for bulk tables and JSON builders for
// structured reports.  Doubles are printed in shortest round-trip form, so
// identical runs serialise to identical bytes.

#include <charconv>
#include <cstdint>
#include <ostream>
#include <sstream>
#include <string>
#include <system_error>

#include <json.hpp>

#include "jsde/conditions.hpp"
#include "jsde/core.hpp"
#include "jsde/estimate.hpp"
#include "jsde/simulate.hpp"

namespace jsde {

/// Shortest decimal string that parses back to exactly `v`.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  if (res.ec != std::errc()) return "nan";
  return std::string(buf, res.ptr);
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

inline void write_paths_csv(std::ostream& os, const PathBatch& b) {
  os << "path,t";
  for (int i = 0; i < b.dim; ++i) os << ",x" << (i + 1);
  os << "\n";
  for (long p = 0; p < b.paths; ++p)
    for (long t = 0; t < b.times(); ++t) {
      os << p << ',' << format_double(b.grid[t]);
      const Vec x = b.state(p, t);
      for (int i = 0; i < b.dim; ++i) os << ',' << format_double(x[i]);
      os << "\n";
    }
}

inline void write_moments_csv(std::ostream& os, const MomentSeries& s) {
  os << "t,second_moment,second_stderr,sup_moment,sup_stderr\n";
  for (std::size_t i = 0; i < s.times.size(); ++i)
    os << format_double(s.times[i]) << ',' << format_double(s.second_moment[i]) << ','
       << format_double(s.second_stderr[i]) << ',' << format_double(s.sup_moment[i]) << ','
       << format_double(s.sup_stderr[i]) << "\n";
}

inline void write_occupation_csv(std::ostream& os, const EmpiricalMeasure& m) {
  for (int i = 0; i < m.dim; ++i) os << "x" << (i + 1) << ',';
  os << "weight\n";
  for (std::size_t a = 0; a < m.size(); ++a) {
    for (int i = 0; i < m.dim; ++i) os << format_double(m.atoms[a][i]) << ',';
    os << format_double(m.weights[a]) << "\n";
  }
}

inline void write_cascade_csv(std::ostream& os, const CascadeRate& cr) {
  os << "k,l,separation,gap,ratio\n";
  for (const auto& e : cr.entries)
    os << e.k << ',' << e.l << ',' << format_double(e.separation) << ','
       << format_double(e.gap) << ',' << format_double(e.ratio) << "\n";
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

inline nlohmann::json vec_json(const Vec& v) {
  nlohmann::json a = nlohmann::json::array();
  for (int i = 0; i < v.dim(); ++i) a.push_back(v[i]);
  return a;
}

inline nlohmann::json report_json(const ConditionReport& r) {
  nlohmann::json j;
  j["condition"] = to_string(r.condition_id);
  j["constant_estimate"] = r.constant_estimate;
  j["witness_x"] = vec_json(r.witness_x);
  j["witness_y"] = vec_json(r.witness_y);
  j["samples_used"] = r.samples_used;
  if (r.claimed_constant) j["claimed_constant"] = *r.claimed_constant;
  j["verdict"] = to_string(r.verdict);
  if (r.condition_id == ConditionId::DISSIPATIVE) {
    j["K"] = r.aux_k;
    j["M"] = r.aux_m;
  }
  return j;
}

inline nlohmann::json decay_json(const DecayCheck& d) {
  return {{"pass", d.pass},
          {"max_excess", d.max_excess},
          {"worst_time", d.worst_time},
          {"stationary_bound", d.stationary_bound},
          {"excluded_fraction", d.excluded_fraction}};
}

inline nlohmann::json tail_json(const TailProbability& t) {
  return {{"radius", t.radius},
          {"time", t.time},
          {"paths", t.paths},
          {"exceed_count", t.exceed_count},
          {"estimate", t.estimate},
          {"wilson_low", t.wilson_low},
          {"wilson_high", t.wilson_high}};
}

inline nlohmann::json feller_json(const FellerModulus& f) {
  return {{"deltas", f.deltas},       {"ratios", f.ratios},
          {"max_ratio", f.max_ratio}, {"spread", f.spread},
          {"spread_limit", f.spread_limit}, {"bounded", f.bounded}};
}

inline nlohmann::json cascade_json(const CascadeRate& c) {
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& e : c.entries)
    pairs.push_back({{"k", e.k},
                     {"l", e.l},
                     {"separation", e.separation},
                     {"gap", e.gap},
                     {"ratio", e.ratio}});
  return {{"pairs", pairs},
          {"fitted_constant", c.fitted_constant},
          {"reference_ratio", c.reference_ratio},
          {"spread_limit", c.spread_limit},
          {"bounded", c.bounded}};
}

inline nlohmann::json envelope_json(const EnvelopeFit& e) {
  return {{"intercept", e.intercept},
          {"slope", e.slope},
          {"split_time", e.split_time},
          {"max_overshoot", e.max_overshoot},
          {"overshoot_limit", e.overshoot_limit},
          {"within", e.within}};
}

inline nlohmann::json stopping_json(const StoppingTimeRecord& r) {
  nlohmann::json j;
  j["radius"] = r.radius;
  j["exited"] = r.exited();
  if (r.exited()) {
    j["tau"] = r.tau;
    j["exit_index"] = r.exit_index;
    j["exit_state"] = vec_json(r.exit_state);
  }
  return j;
}

/// Canonical serialisation (2-space indent, trailing newline); rendering a
/// report twice yields identical bytes.
inline std::string json_bytes(const nlohmann::json& j) { return j.dump(2) + "\n"; }

/// Digest of a CSV writer's output; convenience for determinism checks.
template <typename Writer, typename T>
inline std::uint64_t csv_digest(Writer writer, const T& value) {
  std::ostringstream os;
  writer(os, value);
  return fnv1a64(os.str());
}

}  // namespace jsde
