#ifndef BHKAM_TOOLS_RUN_CONFIG_HPP
#define BHKAM_TOOLS_RUN_CONFIG_HPP

#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

#include "bhkam/errors.hpp"
#include "bhkam/geometry.hpp"
#include "bhkam/lattice.hpp"

namespace bhkam::cli {

using Json = nlohmann::json;

inline const std::vector<std::string> kSubcommands{"kam-verify", "geometry-suite", "current-decompose", "nekhoroshev",
                                                   "integrated-current"};

struct KamVerifySettings {
  std::size_t random_operators = 1000;
  double expansion_tol = 1e-8;
  double inverse_tol = 1e-9;
  double adjoint_tol = 1e-10;
  double homological_tol = 1e-10;
};

struct GeometrySuiteSettings {
  int sites = 6;
  int max_p = 2;
  std::size_t trials = 10000;
  int anchor = -1;
  std::vector<std::string> suites{"proximity", "invariance", "extension", "prop2"};
  std::size_t prop2_samples = 10000;
  std::vector<double> prop2_mus{0.2, 0.3};
  double prop2_tol = 1e-3;
};

struct CurrentSettings {
  int a = 1;
  int n0 = 1;
  std::size_t mc_samples = 100000;
  std::size_t cancellation_samples = 1000;
  bool scaling = false;
  bool scaling_check = false;
  std::vector<double> scaling_mus{0.05, 0.1, 0.2, 0.4};
  std::size_t scaling_samples = 100000;
  double s_broadening = 1.0;
};

struct NekhoroshevSettings {
  int a1 = 0;
  int a2 = 2;
  std::vector<double> gs;
  std::vector<double> mus{0.5};
  std::vector<double> times{0.0, 10.0, 50.0};
  double horizon = 100.0;
};

struct IntegratedSettings {
  int a = 0;
  int n0 = 1;
  std::vector<double> times{0.0, 1.0, 5.0, 20.0};
  double quadrature_tol = 1e-8;
};

struct RunConfig {
  std::string subcommand;
  std::uint64_t seed = 1;
  int threads = 1;
  std::string out_dir = "out";
  ModelParams model;
  int sites = 3;
  // Per-site cap for box bases, total particle number for sector bases.
  int n_max = 6;
  GeometryParams geometry;
  int n1 = 1;
  std::size_t max_dim = kDefaultSpaceLimit;
  KamVerifySettings kam_verify;
  GeometrySuiteSettings geometry_suite;
  CurrentSettings current;
  NekhoroshevSettings nekhoroshev;
  IntegratedSettings integrated;
};

namespace detail {

// Reads `key` from obj if present and erases it, so leftovers are unknown keys.
template <class T>
void take(Json& obj, const std::string& key, T& out, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) return;
  try {
    out = it->get<T>();
  } catch (const Json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
  obj.erase(it);
}

inline Json section(Json& root, const std::string& key) {
  auto it = root.find(key);
  if (it == root.end()) return Json::object();
  if (!it->is_object()) throw ConfigError(key + " must be an object");
  Json out = *it;
  root.erase(it);
  return out;
}

inline void reject_leftovers(const Json& obj, const std::string& where) {
  if (obj.empty()) return;
  throw ConfigError("unknown key " + where + "." + obj.begin().key());
}

inline void require_grid(const std::vector<double>& v, const std::string& what) {
  if (v.empty()) throw ConfigError(what + " must not be empty");
}

}  // namespace detail

// The config with every default filled in. Identical runs give identical dumps.
inline Json resolved_json(const RunConfig& c) {
  Json j;
  j["subcommand"] = c.subcommand;
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  j["output"] = {{"dir", c.out_dir}};
  j["model"] = {{"sites", c.sites}, {"n_max", c.n_max}, {"g", c.model.g}, {"mu", c.model.mu},
                {"delta", c.model.delta}, {"gamma", c.model.gamma}};
  j["geometry"] = {{"L", c.geometry.L}, {"n2", c.geometry.n2}, {"n3", c.geometry.n3}, {"r", c.geometry.r}};
  j["kam"] = {{"n1", c.n1}};
  j["capacity"] = {{"max_dim", c.max_dim}};
  Json ex = Json::object();
  if (c.subcommand == "kam-verify") {
    const auto& k = c.kam_verify;
    ex = {{"random_operators", k.random_operators}, {"expansion_tol", k.expansion_tol}, {"inverse_tol", k.inverse_tol},
          {"adjoint_tol", k.adjoint_tol}, {"homological_tol", k.homological_tol}};
  } else if (c.subcommand == "geometry-suite") {
    const auto& g = c.geometry_suite;
    ex = {{"sites", g.sites}, {"max_p", g.max_p}, {"trials", g.trials}, {"anchor", g.anchor}, {"suites", g.suites},
          {"prop2_samples", g.prop2_samples}, {"prop2_mus", g.prop2_mus}, {"prop2_tol", g.prop2_tol}};
  } else if (c.subcommand == "current-decompose") {
    const auto& k = c.current;
    ex = {{"a", k.a}, {"n0", k.n0}, {"mc_samples", k.mc_samples}, {"cancellation_samples", k.cancellation_samples},
          {"scaling", k.scaling}, {"scaling_check", k.scaling_check}, {"scaling_mus", k.scaling_mus},
          {"scaling_samples", k.scaling_samples}, {"s_broadening", k.s_broadening}};
  } else if (c.subcommand == "nekhoroshev") {
    const auto& k = c.nekhoroshev;
    ex = {{"a1", k.a1}, {"a2", k.a2}, {"gs", k.gs}, {"mus", k.mus}, {"times", k.times}, {"horizon", k.horizon}};
  } else {
    const auto& k = c.integrated;
    ex = {{"a", k.a}, {"n0", k.n0}, {"times", k.times}, {"quadrature_tol", k.quadrature_tol}};
  }
  j["experiment"] = ex;
  return j;
}

// Applies key=value with a dotted key path. The value is parsed as JSON when
// possible and taken as a string otherwise.
inline void apply_override(Json& root, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override must have the form key=value: " + assignment);
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  Json value = Json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  Json* node = &root;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ConfigError("empty key in override " + path);
    if (!node->is_object()) throw ConfigError("override path crosses a non-object: " + path);
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    if (node->is_null()) *node = Json::object();
    start = dot + 1;
  }
}

// Validates the whole document before any computation. Unknown keys are rejected.
inline RunConfig parse_run_config(Json root) {
  if (!root.is_object()) throw ConfigError("config must be a JSON object");
  RunConfig c;
  detail::take(root, "subcommand", c.subcommand, "");
  bool known = false;
  for (const auto& s : kSubcommands) known = known || s == c.subcommand;
  if (!known) throw ConfigError("unknown subcommand '" + c.subcommand + "'");
  detail::take(root, "seed", c.seed, "");
  detail::take(root, "threads", c.threads, "");
  if (c.threads < 1) throw ConfigError("threads must be >= 1");

  Json output = detail::section(root, "output");
  detail::take(output, "dir", c.out_dir, "output");
  detail::reject_leftovers(output, "output");

  Json model = detail::section(root, "model");
  detail::take(model, "sites", c.sites, "model");
  detail::take(model, "n_max", c.n_max, "model");
  detail::take(model, "g", c.model.g, "model");
  detail::take(model, "mu", c.model.mu, "model");
  detail::take(model, "delta", c.model.delta, "model");
  detail::take(model, "gamma", c.model.gamma, "model");
  detail::reject_leftovers(model, "model");
  if (c.sites < 1) throw ConfigError("model.sites must be >= 1");
  if (c.n_max < 0) throw ConfigError("model.n_max must be >= 0");
  c.model.validate();

  Json geometry = detail::section(root, "geometry");
  detail::take(geometry, "L", c.geometry.L, "geometry");
  detail::take(geometry, "n2", c.geometry.n2, "geometry");
  detail::take(geometry, "n3", c.geometry.n3, "geometry");
  detail::take(geometry, "r", c.geometry.r, "geometry");
  detail::reject_leftovers(geometry, "geometry");
  c.geometry.delta = c.model.delta;
  c.geometry.gamma = c.model.gamma;
  c.geometry.validate();

  Json kam = detail::section(root, "kam");
  detail::take(kam, "n1", c.n1, "kam");
  detail::reject_leftovers(kam, "kam");
  if (c.n1 < 1) throw ConfigError("kam.n1 must be >= 1");

  Json capacity = detail::section(root, "capacity");
  detail::take(capacity, "max_dim", c.max_dim, "capacity");
  detail::reject_leftovers(capacity, "capacity");

  Json ex = detail::section(root, "experiment");
  const std::string where = "experiment";
  if (c.subcommand == "kam-verify") {
    auto& k = c.kam_verify;
    detail::take(ex, "random_operators", k.random_operators, where);
    detail::take(ex, "expansion_tol", k.expansion_tol, where);
    detail::take(ex, "inverse_tol", k.inverse_tol, where);
    detail::take(ex, "adjoint_tol", k.adjoint_tol, where);
    detail::take(ex, "homological_tol", k.homological_tol, where);
  } else if (c.subcommand == "geometry-suite") {
    auto& g = c.geometry_suite;
    detail::take(ex, "sites", g.sites, where);
    detail::take(ex, "max_p", g.max_p, where);
    detail::take(ex, "trials", g.trials, where);
    detail::take(ex, "anchor", g.anchor, where);
    detail::take(ex, "suites", g.suites, where);
    detail::take(ex, "prop2_samples", g.prop2_samples, where);
    detail::take(ex, "prop2_mus", g.prop2_mus, where);
    detail::take(ex, "prop2_tol", g.prop2_tol, where);
    for (const auto& s : g.suites)
      if (s != "proximity" && s != "invariance" && s != "extension" && s != "prop2")
        throw ConfigError("unknown suite '" + s + "'");
    if (g.sites < 2) throw ConfigError("experiment.sites must be >= 2");
    if (g.anchor >= g.sites) throw ConfigError("experiment.anchor outside the chain");
  } else if (c.subcommand == "current-decompose") {
    auto& k = c.current;
    detail::take(ex, "a", k.a, where);
    detail::take(ex, "n0", k.n0, where);
    detail::take(ex, "mc_samples", k.mc_samples, where);
    detail::take(ex, "cancellation_samples", k.cancellation_samples, where);
    detail::take(ex, "scaling", k.scaling, where);
    detail::take(ex, "scaling_check", k.scaling_check, where);
    detail::take(ex, "scaling_mus", k.scaling_mus, where);
    detail::take(ex, "scaling_samples", k.scaling_samples, where);
    detail::take(ex, "s_broadening", k.s_broadening, where);
    if (k.a < 0 || k.a >= c.sites - 1) throw ConfigError("experiment.a must name a bond of the chain");
    if (k.n0 < 0) throw ConfigError("experiment.n0 must be >= 0");
    if (k.scaling) detail::require_grid(k.scaling_mus, "experiment.scaling_mus");
  } else if (c.subcommand == "nekhoroshev") {
    auto& k = c.nekhoroshev;
    detail::take(ex, "a1", k.a1, where);
    detail::take(ex, "a2", k.a2, where);
    detail::take(ex, "gs", k.gs, where);
    detail::take(ex, "mus", k.mus, where);
    detail::take(ex, "times", k.times, where);
    detail::take(ex, "horizon", k.horizon, where);
    if (k.gs.empty()) k.gs = {c.model.g};
    if (!(0 <= k.a1 && k.a1 < k.a2 && k.a2 < c.sites)) throw ConfigError("need 0 <= a1 < a2 < sites");
    detail::require_grid(k.mus, "experiment.mus");
    detail::require_grid(k.times, "experiment.times");
    if (!(k.horizon > 0.0)) throw ConfigError("experiment.horizon must be positive");
  } else {
    auto& k = c.integrated;
    detail::take(ex, "a", k.a, where);
    detail::take(ex, "n0", k.n0, where);
    detail::take(ex, "times", k.times, where);
    detail::take(ex, "quadrature_tol", k.quadrature_tol, where);
    if (k.a < 0 || k.a >= c.sites - 1) throw ConfigError("experiment.a must name a bond of the chain");
    detail::require_grid(k.times, "experiment.times");
    if (!(k.quadrature_tol > 0.0)) throw ConfigError("experiment.quadrature_tol must be positive");
  }
  detail::reject_leftovers(ex, where);
  detail::reject_leftovers(root, "config");
  return c;
}

}  // namespace bhkam::cli

#endif  // BHKAM_TOOLS_RUN_CONFIG_HPP
