#pragma once

// Config-driven experiment runner.
//
// A run is described by one JSON file:
//
//   {
//     "seed": 42,                     // master seed (mandatory)
//     "model": { "dim": 1, "drift": {...}, "diffusion": {...},
//                "kernel": {...}, "activity": {...},
//                "truncation": {...} (optional) },
//     "sim":   { "dt": 1e-3, "horizon": 1.0, "paths": 100,
//                "initial": [[0.0]] },
//     "task":  "simulate" | "check" | "mollify" | "invariant"
//              | "cascade" | "feller",
//     "task_params": { ... },         // per-task, see handlers below
//     "output_dir": "out"             // optional, default "out"
//   }
//
// Every run writes manifest.json (config echo, resolved parameters, artifact
// digests, exit code) plus task-specific artifacts.  Runs are byte-identical
// given the same config, regardless of the JSDE_THREADS environment variable.
//
// Exit codes: 0 = pass or estimate-only, 1 = a checked property failed (or a
// moment task exceeded the explosion budget), 2 = usage/config error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "jsde/conditions.hpp"
#include "jsde/core.hpp"
#include "jsde/estimate.hpp"
#include "jsde/io.hpp"
#include "jsde/models.hpp"
#include "jsde/mollify.hpp"
#include "jsde/simulate.hpp"

namespace jsde {

/// Fraction of exploded paths beyond which moment-style tasks fail.
inline constexpr double kExplosionBudget = 0.01;

struct Experiment {
  nlohmann::json raw;
  std::uint64_t seed = 0;
  BuiltModel model;
  SimConfig sim;
  std::string task;
  nlohmann::json task_params;
  std::string output_dir = "out";
};

namespace detail {

inline long line_of_byte(const std::string& text, std::size_t byte) {
  long line = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i)
    if (text[i] == '\n') ++line;
  return line;
}

inline Vec vec_from_json(const nlohmann::json& j, int dim, const std::string& path) {
  if (!j.is_array() || static_cast<int>(j.size()) != dim)
    throw ConfigError("config key '" + path + "': expected an array of " + std::to_string(dim) +
                      " numbers");
  Vec v(dim);
  for (int i = 0; i < dim; ++i) {
    if (!j[i].is_number())
      throw ConfigError("config key '" + path + "': expected an array of numbers");
    v[i] = j[i].get<double>();
  }
  return v;
}

}  // namespace detail

inline Experiment parse_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();

  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path + ":" + std::to_string(detail::line_of_byte(text, e.byte)) +
                      ": " + e.what());
  }

  cfg::require_keys(j, "config", {"seed", "model", "sim", "task", "task_params", "output_dir"});
  Experiment exp;
  exp.raw = j;
  exp.seed = cfg::get_seed(j, "config", "seed");
  exp.model = build_model(cfg::require_field(j, "config", "model"), "model");

  const nlohmann::json& sim = cfg::require_field(j, "config", "sim");
  cfg::require_keys(sim, "sim", {"dt", "horizon", "paths", "initial"});
  exp.sim.dt = cfg::get_number(sim, "sim", "dt");
  exp.sim.horizon = cfg::get_number(sim, "sim", "horizon");
  exp.sim.paths = cfg::get_integer(sim, "sim", "paths");
  exp.sim.seed = exp.seed;
  if (!(exp.sim.dt > 0.0)) throw ConfigError("config key 'sim.dt': must be > 0");
  if (!(exp.sim.horizon >= exp.sim.dt))
    throw ConfigError("config key 'sim.horizon': must be >= sim.dt");
  if (exp.sim.paths < 1) throw ConfigError("config key 'sim.paths': must be >= 1");
  const nlohmann::json& init = cfg::require_field(sim, "sim", "initial");
  if (!init.is_array() || init.empty())
    throw ConfigError("config key 'sim.initial': expected a non-empty array of states");
  if (init.size() != 1 && static_cast<long>(init.size()) != exp.sim.paths)
    throw ConfigError("config key 'sim.initial': need one state or one per path");
  for (std::size_t i = 0; i < init.size(); ++i)
    exp.sim.initial.push_back(detail::vec_from_json(
        init[i], exp.model.base.dim, "sim.initial[" + std::to_string(i) + "]"));

  exp.task = cfg::get_string(j, "config", "task");
  static const std::vector<std::string> kTasks = {"simulate", "check",   "mollify",
                                                  "invariant", "cascade", "feller"};
  if (std::find(kTasks.begin(), kTasks.end(), exp.task) == kTasks.end())
    throw ConfigError("config key 'task': unknown task '" + exp.task + "'");
  if (j.contains("task_params")) {
    if (!j.at("task_params").is_object())
      throw ConfigError("config key 'task_params': expected an object");
    exp.task_params = j.at("task_params");
  } else {
    exp.task_params = nlohmann::json::object();
  }
  if (j.contains("output_dir")) exp.output_dir = cfg::get_string(j, "config", "output_dir");
  return exp;
}

namespace detail {

struct TaskOutput {
  std::vector<std::pair<std::string, std::string>> artifacts;  // name -> bytes
  nlohmann::json report;  // serialised as report.json when non-null
  nlohmann::json resolved = nlohmann::json::object();
  nlohmann::json explosions;  // filled by tasks that simulate
  int exit_code = 0;
};

inline nlohmann::json explosion_block(const PathBatch& b) {
  nlohmann::json ex;
  ex["count"] = b.exploded_count();
  ex["fraction"] = b.exploded_fraction();
  nlohmann::json list = nlohmann::json::array();
  long shown = 0;
  for (long p = 0; p < b.paths && shown < 100; ++p)
    if (b.exploded(p)) {
      list.push_back({{"path", p}, {"step", b.explosion_step[p]}});
      ++shown;
    }
  ex["first_flagged"] = list;
  return ex;
}

// --- task handlers ---------------------------------------------------------

inline TaskOutput task_simulate(const Experiment& exp) {
  TaskOutput out;
  PathBatch batch;
  std::vector<StoppingTimeRecord> exits;
  if (exp.model.truncation) {
    TruncatedSimResult r = simulate_truncated(*exp.model.truncation, exp.sim);
    batch = std::move(r.batch);
    exits = std::move(r.exits);
  } else {
    batch = simulate(exp.model.base, exp.sim);
  }
  {
    std::ostringstream os;
    write_paths_csv(os, batch);
    out.artifacts.emplace_back("paths.csv", os.str());
  }
  out.report["paths"] = batch.paths;
  out.report["grid_points"] = batch.times();
  out.explosions = explosion_block(batch);
  if (batch.exploded_count() < batch.paths) {
    const MomentSeries ms = moment_series(batch);
    std::ostringstream os;
    write_moments_csv(os, ms);
    out.artifacts.emplace_back("moments.csv", os.str());
    out.report["final_second_moment"] = ms.second_moment.back();
    out.report["final_sup_moment"] = ms.sup_moment.back();
    out.report["excluded_fraction"] = ms.excluded_fraction();
  }
  if (!exits.empty()) {
    long exited = 0;
    double tau_sum = 0.0;
    for (const auto& e : exits)
      if (e.exited()) {
        ++exited;
        tau_sum += e.tau;
      }
    nlohmann::json je;
    je["radius"] = exits.front().radius;
    je["exited_count"] = exited;
    je["exit_fraction"] = static_cast<double>(exited) / exits.size();
    if (exited > 0) je["mean_exit_time"] = tau_sum / exited;
    if (static_cast<long>(exits.size()) <= 1000) {
      nlohmann::json list = nlohmann::json::array();
      for (const auto& e : exits) list.push_back(stopping_json(e));
      je["records"] = list;
    }
    out.report["ball_exit"] = je;
  }
  return out;
}

inline TaskOutput task_check(const Experiment& exp) {
  const nlohmann::json& tp = exp.task_params;
  cfg::require_keys(tp, "task_params", {"conditions"});
  const nlohmann::json& list = cfg::require_field(tp, "task_params", "conditions");
  if (!list.is_array() || list.empty())
    throw ConfigError("config key 'task_params.conditions': expected a non-empty array");

  const CoefficientSet& c = exp.model.effective();
  TaskOutput out;
  nlohmann::json reports = nlohmann::json::array();
  nlohmann::json resolved = nlohmann::json::array();
  bool any_fail = false;
  for (std::size_t i = 0; i < list.size(); ++i) {
    const std::string path = "task_params.conditions[" + std::to_string(i) + "]";
    const nlohmann::json& e = list[i];
    cfg::require_keys(e, path, {"id", "radius", "pairs", "min_separation", "claimed", "K", "M"});
    const ConditionId id = [&] {
      try {
        return condition_from_string(cfg::get_string(e, path, "id"));
      } catch (const std::invalid_argument& err) {
        throw ConfigError("config key '" + path + ".id': " + err.what());
      }
    }();
    SamplingPlan plan;
    plan.radius = cfg::get_number(e, path, "radius");
    plan.pairs = cfg::get_integer(e, path, "pairs");
    plan.min_separation = cfg::get_number_or(e, path, "min_separation", 1e-6);
    plan.seed = derive_seed(exp.seed, static_cast<std::uint64_t>(i));
    std::optional<double> claimed;
    if (e.contains("claimed")) claimed = cfg::get_number(e, path, "claimed");
    if (id == ConditionId::DISSIPATIVE && claimed)
      throw ConfigError("config key '" + path +
                        ".claimed': dissipative entries always claim excess <= 0");
    if (id != ConditionId::DISSIPATIVE && (e.contains("K") || e.contains("M")))
      throw ConfigError("config key '" + path + "': K and M apply to DISSIPATIVE only");
    ConditionReport rep;
    try {
      if (id == ConditionId::DISSIPATIVE) {
        rep = check_dissipative_growth(c, plan, cfg::get_number(e, path, "K"),
                                       cfg::get_number(e, path, "M"));
      } else {
        rep = run_condition(id, c, plan, claimed);
      }
    } catch (const std::invalid_argument& err) {
      throw ConfigError("config key '" + path + "': " + err.what());
    }
    any_fail |= rep.verdict == Verdict::Fail;
    reports.push_back(report_json(rep));
    nlohmann::json r = e;
    r["min_separation"] = plan.min_separation;
    r["plan_seed"] = plan.seed;
    resolved.push_back(r);
  }
  out.report["reports"] = reports;
  out.report["any_fail"] = any_fail;
  out.resolved["conditions"] = resolved;
  out.exit_code = any_fail ? 1 : 0;
  return out;
}

inline TaskOutput task_mollify(const Experiment& exp) {
  const nlohmann::json& tp = exp.task_params;
  cfg::require_keys(tp, "task_params",
                    {"orders", "drift_bound", "nodes_per_axis", "probe"});
  const nlohmann::json& orders = cfg::require_field(tp, "task_params", "orders");
  if (!orders.is_array() || orders.empty())
    throw ConfigError("config key 'task_params.orders': expected a non-empty array");
  const double bound = cfg::get_number(tp, "task_params", "drift_bound");
  const int nodes = static_cast<int>(cfg::get_number_or(tp, "task_params", "nodes_per_axis", 33));
  const nlohmann::json& probe = cfg::require_field(tp, "task_params", "probe");
  cfg::require_keys(probe, "task_params.probe", {"lo", "hi", "count"});
  const double lo = cfg::get_number(probe, "task_params.probe", "lo");
  const double hi = cfg::get_number(probe, "task_params.probe", "hi");
  const long count = cfg::get_integer(probe, "task_params.probe", "count");
  if (!(hi > lo) || count < 2)
    throw ConfigError("config key 'task_params.probe': need hi > lo and count >= 2");

  const CoefficientSet& c = exp.model.effective();
  TaskOutput out;
  std::ostringstream csv;
  csv << "order,t";
  for (int i = 0; i < c.dim; ++i) csv << ",base" << (i + 1);
  for (int i = 0; i < c.dim; ++i) csv << ",smooth" << (i + 1);
  csv << "\n";
  nlohmann::json per_order = nlohmann::json::array();
  for (const auto& jo : orders) {
    if (!jo.is_number_integer())
      throw ConfigError("config key 'task_params.orders': expected integers");
    const int k = jo.get<int>();
    MollifiedDrift mk = [&] {
      try {
        return mollify(c.drift, c.dim, k, bound, nodes);
      } catch (const std::invalid_argument& err) {
        throw ConfigError(std::string("config key 'task_params': ") + err.what());
      }
    }();
    double max_dev = 0.0;
    for (long i = 0; i < count; ++i) {
      const double t = lo + (hi - lo) * static_cast<double>(i) / (count - 1);
      const Vec x = Vec::axis(c.dim, 0, t);
      const Vec vb = c.drift(x);
      const Vec vk = mk(x);
      max_dev = std::max(max_dev, norm(vk - vb));
      csv << k << ',' << format_double(t);
      for (int d = 0; d < c.dim; ++d) csv << ',' << format_double(vb[d]);
      for (int d = 0; d < c.dim; ++d) csv << ',' << format_double(vk[d]);
      csv << "\n";
    }
    per_order.push_back({{"order", k},
                         {"lipschitz_bound", mk.lipschitz_bound()},
                         {"max_probe_deviation", max_dev},
                         {"kernel",
                          {{"first_abs", mk.kernel_moments().first_abs},
                           {"second", mk.kernel_moments().second},
                           {"grad_sup_integral", mk.kernel_moments().grad_sup_integral}}}});
  }
  out.artifacts.emplace_back("mollify.csv", csv.str());
  out.report["orders"] = per_order;
  out.resolved = tp;
  out.resolved["nodes_per_axis"] = nodes;
  return out;
}

inline TaskOutput task_invariant(const Experiment& exp) {
  const nlohmann::json& tp = exp.task_params;
  cfg::require_keys(tp, "task_params", {"burn_in", "step_horizon", "gap_threshold"});
  const double burn_in = cfg::get_number(tp, "task_params", "burn_in");
  const double step_horizon = cfg::get_number(tp, "task_params", "step_horizon");
  std::optional<double> threshold;
  if (tp.contains("gap_threshold"))
    threshold = cfg::get_number(tp, "task_params", "gap_threshold");
  if (!(burn_in >= 0.0 && burn_in < exp.sim.horizon))
    throw ConfigError("config key 'task_params.burn_in': must lie in [0, sim.horizon)");
  if (!(step_horizon >= exp.sim.dt))
    throw ConfigError("config key 'task_params.step_horizon': must be >= sim.dt");

  const CoefficientSet& c = exp.model.effective();
  TaskOutput out;
  const PathBatch batch = simulate(c, exp.sim);
  out.explosions = explosion_block(batch);
  const EmpiricalMeasure mu = occupation_from_batch(batch, burn_in, exp.sim.horizon);
  const OccupationMoment om = occupation_second_moment(batch, burn_in, exp.sim.horizon);
  const double gap = invariance_gap(c, mu, step_horizon, exp.sim);
  {
    std::ostringstream os;
    write_occupation_csv(os, mu);
    out.artifacts.emplace_back("occupation.csv", os.str());
  }
  out.report["atoms"] = mu.size();
  out.report["occupation_second_moment"] = om.mean;
  out.report["occupation_second_moment_stderr"] = om.stderr_mean;
  out.report["invariance_gap"] = gap;
  out.report["distance"] = c.dim == 1 ? "wasserstein1" : "energy";
  bool pass = batch.exploded_fraction() <= kExplosionBudget;
  if (threshold) {
    out.report["gap_threshold"] = *threshold;
    pass = pass && gap <= *threshold;
  }
  out.report["pass"] = pass;
  out.exit_code = pass ? 0 : 1;
  out.resolved = tp;
  return out;
}

inline TaskOutput task_cascade(const Experiment& exp) {
  const nlohmann::json& tp = exp.task_params;
  cfg::require_keys(tp, "task_params",
                    {"orders", "drift_bound", "nodes_per_axis", "spread_limit"});
  const nlohmann::json& jo = cfg::require_field(tp, "task_params", "orders");
  if (!jo.is_array() || jo.size() < 2)
    throw ConfigError("config key 'task_params.orders': expected >= 2 integers");
  std::vector<int> orders;
  for (const auto& v : jo) {
    if (!v.is_number_integer())
      throw ConfigError("config key 'task_params.orders': expected integers");
    orders.push_back(v.get<int>());
  }
  const double bound = cfg::get_number(tp, "task_params", "drift_bound");
  const int nodes = static_cast<int>(cfg::get_number_or(tp, "task_params", "nodes_per_axis", 33));
  const double spread = cfg::get_number_or(tp, "task_params", "spread_limit", 3.0);

  const CoefficientSet& c = exp.model.effective();
  TaskOutput out;
  std::map<int, PathBatch> family = [&] {
    try {
      return mollified_cascade(c, exp.sim, orders, bound, nodes);
    } catch (const std::invalid_argument& err) {
      throw ConfigError(std::string("config key 'task_params': ") + err.what());
    }
  }();
  const CascadeRate cr = cascade_rate(family, spread);
  {
    std::ostringstream os;
    write_cascade_csv(os, cr);
    out.artifacts.emplace_back("cascade.csv", os.str());
  }
  out.report = cascade_json(cr);
  out.exit_code = cr.bounded ? 0 : 1;
  out.resolved = tp;
  out.resolved["nodes_per_axis"] = nodes;
  out.resolved["spread_limit"] = spread;
  return out;
}

inline TaskOutput task_feller(const Experiment& exp) {
  const nlohmann::json& tp = exp.task_params;
  cfg::require_keys(tp, "task_params", {"x", "deltas", "spread_limit"});
  const CoefficientSet& c = exp.model.effective();
  const Vec x = vec_from_json(cfg::require_field(tp, "task_params", "x"), c.dim,
                              "task_params.x");
  const nlohmann::json& jd = cfg::require_field(tp, "task_params", "deltas");
  if (!jd.is_array() || jd.empty())
    throw ConfigError("config key 'task_params.deltas': expected a non-empty array");
  std::vector<double> deltas;
  for (const auto& v : jd) {
    if (!v.is_number() || !(v.get<double>() > 0.0))
      throw ConfigError("config key 'task_params.deltas': expected positive numbers");
    deltas.push_back(v.get<double>());
  }
  const double spread = cfg::get_number_or(tp, "task_params", "spread_limit", 3.0);

  TaskOutput out;
  const FellerModulus fm = feller_modulus(c, exp.sim, x, deltas, spread);
  out.report = feller_json(fm);
  out.exit_code = fm.bounded ? 0 : 1;
  out.resolved = tp;
  out.resolved["spread_limit"] = spread;
  return out;
}

}  // namespace detail

/// Execute the experiment and write its artifacts; returns the exit code.
inline int run_task(const Experiment& exp) {
  detail::TaskOutput out;
  if (exp.task == "simulate") out = detail::task_simulate(exp);
  else if (exp.task == "check") out = detail::task_check(exp);
  else if (exp.task == "mollify") out = detail::task_mollify(exp);
  else if (exp.task == "invariant") out = detail::task_invariant(exp);
  else if (exp.task == "cascade") out = detail::task_cascade(exp);
  else if (exp.task == "feller") out = detail::task_feller(exp);
  else throw ConfigError("config key 'task': unknown task '" + exp.task + "'");

  if (!out.report.is_null())
    out.artifacts.emplace_back("report.json", json_bytes(out.report));

  std::filesystem::create_directories(exp.output_dir);
  nlohmann::json manifest;
  manifest["config"] = exp.raw;
  manifest["task"] = exp.task;
  manifest["seed"] = exp.seed;
  manifest["seed_derivation"] =
      "path seeds: splitmix64(master, path index); per-path wiener/jump streams are "
      "domain-separated; condition plans: splitmix64(master, entry index)";
  manifest["resolved_task_params"] = out.resolved;
  if (!out.explosions.is_null()) manifest["explosions"] = out.explosions;
  nlohmann::json names = nlohmann::json::array();
  nlohmann::json digests = nlohmann::json::object();
  for (const auto& [name, bytes] : out.artifacts) {
    names.push_back(name);
    char hex[32];
    std::snprintf(hex, sizeof(hex), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(bytes)));
    digests[name] = hex;
    std::ofstream f(std::filesystem::path(exp.output_dir) / name, std::ios::binary);
    f << bytes;
    if (!f) throw std::runtime_error("jsde: failed writing artifact " + name);
  }
  manifest["artifacts"] = names;
  manifest["digests"] = digests;
  manifest["exit_code"] = out.exit_code;
  std::ofstream mf(std::filesystem::path(exp.output_dir) / "manifest.json", std::ios::binary);
  mf << json_bytes(manifest);
  if (!mf) throw std::runtime_error("jsde: failed writing manifest.json");
  return out.exit_code;
}

}  // namespace jsde
