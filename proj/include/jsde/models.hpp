#pragma once

// Named model registry: builds coefficient fields from JSON fragments with
// strict validation (unknown keys, missing parameters and type mismatches are
// reported with the full key path).

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "jsde/coefficients.hpp"
#include "jsde/core.hpp"
#include "jsde/jumps.hpp"

namespace jsde {

/// Raised for any malformed configuration; the message names the offending
/// key path.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace cfg {

using nlohmann::json;

inline void require_object(const json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigError("config key '" + path + "': expected an object");
}

inline void require_keys(const json& j, const std::string& path,
                         std::initializer_list<const char*> allowed) {
  require_object(j, path);
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok |= (key == a);
    if (!ok) throw ConfigError("config key '" + path + "." + key + "': unknown key");
  }
}

inline const json& require_field(const json& j, const std::string& path, const char* name) {
  require_object(j, path);
  auto it = j.find(name);
  if (it == j.end()) throw ConfigError("config key '" + path + "." + name + "': missing");
  return *it;
}

inline double get_number(const json& j, const std::string& path, const char* name) {
  const json& v = require_field(j, path, name);
  if (!v.is_number()) throw ConfigError("config key '" + path + "." + name + "': expected a number");
  return v.get<double>();
}

inline long get_integer(const json& j, const std::string& path, const char* name) {
  const json& v = require_field(j, path, name);
  if (!v.is_number_integer())
    throw ConfigError("config key '" + path + "." + name + "': expected an integer");
  return v.get<long>();
}

inline std::uint64_t get_seed(const json& j, const std::string& path, const char* name) {
  const json& v = require_field(j, path, name);
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
    throw ConfigError("config key '" + path + "." + name +
                      "': expected a non-negative integer seed");
  return v.get<std::uint64_t>();
}

inline std::string get_string(const json& j, const std::string& path, const char* name) {
  const json& v = require_field(j, path, name);
  if (!v.is_string()) throw ConfigError("config key '" + path + "." + name + "': expected a string");
  return v.get<std::string>();
}

inline double get_number_or(const json& j, const std::string& path, const char* name,
                            double fallback) {
  require_object(j, path);
  if (!j.contains(name)) return fallback;
  return get_number(j, path, name);
}

}  // namespace cfg

// ---------------------------------------------------------------------------
// Builders
// ---------------------------------------------------------------------------

inline MarkDistribution build_marks(const nlohmann::json& j, const std::string& path) {
  const std::string id = cfg::get_string(j, path, "id");
  if (id == "normal") {
    cfg::require_keys(j, path, {"id", "mu", "sigma"});
    return MarkDistribution::normal(cfg::get_number(j, path, "mu"),
                                    cfg::get_number(j, path, "sigma"));
  }
  if (id == "uniform") {
    cfg::require_keys(j, path, {"id", "a", "b"});
    return MarkDistribution::uniform(cfg::get_number(j, path, "a"),
                                     cfg::get_number(j, path, "b"));
  }
  if (id == "constant") {
    cfg::require_keys(j, path, {"id", "value"});
    return MarkDistribution::constant(cfg::get_number(j, path, "value"));
  }
  throw ConfigError("config key '" + path + ".id': unknown mark distribution '" + id + "'");
}

inline JumpActivity build_activity(const nlohmann::json& j, const std::string& path) {
  const std::string id = cfg::get_string(j, path, "id");
  if (id == "none") {
    cfg::require_keys(j, path, {"id"});
    return JumpActivity::none();
  }
  if (id == "finite") {
    cfg::require_keys(j, path, {"id", "rate", "marks"});
    return JumpActivity::finite(cfg::get_number(j, path, "rate"),
                                build_marks(cfg::require_field(j, path, "marks"), path + ".marks"));
  }
  if (id == "truncated") {
    cfg::require_keys(j, path, {"id", "rate", "marks", "cutoff"});
    return JumpActivity::truncated(
        cfg::get_number(j, path, "rate"),
        build_marks(cfg::require_field(j, path, "marks"), path + ".marks"),
        cfg::get_number(j, path, "cutoff"));
  }
  throw ConfigError("config key '" + path + ".id': unknown activity '" + id + "'");
}

inline JumpKernel build_kernel(const nlohmann::json& j, int dim, const std::string& path) {
  const std::string id = cfg::get_string(j, path, "id");
  if (id == "none") {
    cfg::require_keys(j, path, {"id"});
    return zero_kernel(dim);
  }
  if (id == "additive") {
    cfg::require_keys(j, path, {"id", "scale"});
    return additive_kernel(dim, cfg::get_number(j, path, "scale"));
  }
  if (id == "multiplicative") {
    cfg::require_keys(j, path, {"id", "scale"});
    return multiplicative_kernel(cfg::get_number(j, path, "scale"));
  }
  throw ConfigError("config key '" + path + ".id': unknown jump kernel '" + id + "'");
}

inline DriftField build_drift(const nlohmann::json& j, int dim, const std::string& path) {
  const std::string id = cfg::get_string(j, path, "id");
  if (id == "zero") {
    cfg::require_keys(j, path, {"id"});
    return zero_drift(dim);
  }
  if (id == "linear") {
    cfg::require_keys(j, path, {"id", "gain"});
    return linear_drift(dim, cfg::get_number(j, path, "gain"));
  }
  if (id == "alpha_drift") {
    cfg::require_keys(j, path, {"id", "alpha"});
    return alpha_drift(dim, cfg::get_number(j, path, "alpha"));
  }
  if (id == "dissipative_alpha") {
    cfg::require_keys(j, path, {"id", "alpha", "K"});
    return dissipative_alpha_drift(dim, cfg::get_number(j, path, "alpha"),
                                   cfg::get_number(j, path, "K"));
  }
  if (id == "clamp") {
    cfg::require_keys(j, path, {"id", "limit"});
    return clamp_drift(dim, cfg::get_number(j, path, "limit"));
  }
  throw ConfigError("config key '" + path + ".id': unknown drift '" + id + "'");
}

inline DiffusionField build_diffusion(const nlohmann::json& j, int dim, const std::string& path) {
  const std::string id = cfg::get_string(j, path, "id");
  if (id == "zero") {
    cfg::require_keys(j, path, {"id"});
    return zero_diffusion(dim);
  }
  if (id == "constant") {
    cfg::require_keys(j, path, {"id", "value"});
    return constant_diffusion(dim, cfg::get_number(j, path, "value"));
  }
  if (id == "tanh_diag") {
    cfg::require_keys(j, path, {"id", "scale"});
    return tanh_diagonal_diffusion(dim, cfg::get_number(j, path, "scale"));
  }
  if (id == "linear_diag") {
    cfg::require_keys(j, path, {"id", "scale"});
    return linear_diagonal_diffusion(dim, cfg::get_number(j, path, "scale"));
  }
  throw ConfigError("config key '" + path + ".id': unknown diffusion '" + id + "'");
}

/// Built model: base fields plus an optional ball truncation wrapper.
struct BuiltModel {
  CoefficientSet base;
  std::optional<TruncatedCoefficients> truncation;
  const CoefficientSet& effective() const {
    return truncation ? truncation->coefficients() : base;
  }
};

inline BuiltModel build_model(const nlohmann::json& j, const std::string& path = "model") {
  cfg::require_keys(j, path, {"dim", "drift", "diffusion", "kernel", "activity", "truncation"});
  const long dim = cfg::get_integer(j, path, "dim");
  if (dim < 1 || dim > kMaxDim)
    throw ConfigError("config key '" + path + ".dim': must be in [1, " +
                      std::to_string(kMaxDim) + "]");
  const int d = static_cast<int>(dim);
  BuiltModel m;
  try {
    m.base = make_coefficients(
        d, build_drift(cfg::require_field(j, path, "drift"), d, path + ".drift"),
        build_diffusion(cfg::require_field(j, path, "diffusion"), d, path + ".diffusion"),
        build_kernel(cfg::require_field(j, path, "kernel"), d, path + ".kernel"),
        build_activity(cfg::require_field(j, path, "activity"), path + ".activity"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError("config key '" + path + "': " + e.what());
  }
  if (j.contains("truncation")) {
    const nlohmann::json& t = j.at("truncation");
    const std::string tp = path + ".truncation";
    cfg::require_keys(t, tp, {"radius", "local_one_sided", "local_bound"});
    try {
      m.truncation = truncate(m.base, cfg::get_number(t, tp, "radius"),
                              LocalConstants{cfg::get_number(t, tp, "local_one_sided"),
                                             cfg::get_number(t, tp, "local_bound")});
    } catch (const std::invalid_argument& e) {
      throw ConfigError("config key '" + tp + "': " + e.what());
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// Registry listing
// ---------------------------------------------------------------------------

struct ModelEntry {
  const char* kind;
  const char* id;
  const char* params;
  const char* doc;
};

inline const std::vector<ModelEntry>& model_registry() {
  static const std::vector<ModelEntry> table = {
      {"drift", "alpha_drift", "alpha", "radial power drift -x|x|^-alpha (one-sided Lipschitz, not locally Lipschitz at 0)"},
      {"drift", "clamp", "limit", "componentwise clamp(-x_i, [-limit, limit]); bounded and Lipschitz"},
      {"drift", "dissipative_alpha", "alpha, K", "radial power drift plus linear restoring term -K x"},
      {"drift", "linear", "gain", "b(x) = gain * x"},
      {"drift", "zero", "", "b = 0"},
      {"diffusion", "constant", "value", "sigma = value * I"},
      {"diffusion", "linear_diag", "scale", "sigma = diag(scale * x_i)"},
      {"diffusion", "tanh_diag", "scale", "sigma = diag(scale * tanh(x_i)); bounded and Lipschitz"},
      {"diffusion", "zero", "", "sigma = 0"},
      {"kernel", "additive", "scale", "g(x,u) = scale * u * (1,...,1)"},
      {"kernel", "multiplicative", "scale", "g(x,u) = scale * u * x"},
      {"kernel", "none", "", "g = 0"},
      {"activity", "finite", "rate, marks", "finite intensity: rate * law(marks)"},
      {"activity", "none", "", "no jumps"},
      {"activity", "truncated", "rate, marks, cutoff", "marks with |u| <= cutoff discarded (infinite-activity surrogate)"},
      {"marks", "constant", "value", "deterministic mark"},
      {"marks", "normal", "mu, sigma", "Gaussian marks"},
      {"marks", "uniform", "a, b", "uniform marks on [a, b]"},
  };
  return table;
}

inline std::string list_models_text() {
  std::string out;
  const char* kind = "";
  for (const auto& e : model_registry()) {
    if (std::string(kind) != e.kind) {
      kind = e.kind;
      out += std::string(out.empty() ? "" : "\n") + kind + " models:\n";
    }
    std::string head = std::string("  ") + e.id + "(" + e.params + ")";
    if (head.size() < 40) head.resize(40, ' ');
    out += head + " " + e.doc + "\n";
  }
  return out;
}

}  // namespace jsde
