#ifndef BHKAM_TOOLS_PIPELINES_HPP
#define BHKAM_TOOLS_PIPELINES_HPP

#include <cctype>
#include <cmath>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "bhkam/current.hpp"
#include "bhkam/dynamics.hpp"
#include "bhkam/geometry_suites.hpp"
#include "bhkam/kam.hpp"
#include "bhkam/random_ops.hpp"
#include "bhkam/report.hpp"
#include "run_config.hpp"

namespace bhkam::cli {

struct RunOutput {
  std::vector<ExperimentRow> rows;
  std::vector<CheckRow> checks;
  // Replay records for failed checks.
  Json replay = Json::array();
  // Prescribed and used orders, truncation losses and other run facts.
  Json stamps = Json::object();

  bool passed() const {
    for (const auto& c : checks)
      if (!c.passed) return false;
    return true;
  }
  void check(std::string name, double value, double tol) { checks.push_back({std::move(name), value, tol, value <= tol}); }
  void row(std::string obs, double value, double mu = 0.0, double g = 0.0, double t = 0.0, double err = 0.0,
           std::size_t n = 0) {
    rows.push_back({t, mu, g, std::move(obs), value, err, n});
  }
};

inline std::vector<int> to_ints(const OccupationConfig& eta) {
  std::vector<int> v;
  for (int x = 0; x < eta.size(); ++x) v.push_back(eta[x]);
  return v;
}

// Compact label for grid values inside check names.
inline std::string label(double x) {
  std::ostringstream os;
  os << x;
  return os.str();
}

inline Json instance_json(const LemmaInstance& inst) {
  Json moves = Json::array();
  for (const auto& m : inst.cluster) moves.push_back(to_ints(m));
  return Json{{"eta", inst.eta}, {"cluster", moves}, {"rho", to_ints(inst.rho)}, {"t", inst.t}};
}

// Refuses bases above the configured dimension before building them.
inline void require_dim(double dim, std::size_t max_dim, const std::string& what) {
  if (dim > static_cast<double>(max_dim)) throw CapacityError(what + " dimension exceeds capacity.max_dim");
}

inline double box_dim(int sites, int n_max) { return std::pow(n_max + 1.0, sites); }

inline double sector_dim(int sites, int n_total) {
  double d = 1.0;
  for (int k = 1; k <= sites; ++k) d = d * (n_total + k) / k;
  return d;
}

inline RunOutput run_kam_verify(const RunConfig& c) {
  const auto& k = c.kam_verify;
  const auto& p = c.model;
  RunOutput out;
  require_dim(box_dim(c.sites, c.n_max), c.max_dim, "box");
  require_dim(sector_dim(c.sites, c.n_max), c.max_dim, "particle sector");

  const auto hom = verify_homological_random(c.sites, c.n_max, p, k.random_operators, c.seed, c.threads, k.homological_tol);
  out.row("homological_max_residual", hom.worst.max_violation, p.mu, p.g, 0.0, 0.0, hom.operators);
  out.row("homological_violations", static_cast<double>(hom.violations), p.mu, p.g, 0.0, 0.0, hom.operators);
  out.check("homological_identity", hom.worst.max_violation, k.homological_tol);
  if (!hom.passed())
    out.replay.push_back({{"check", "homological_identity"},
                          {"stream", hom.worst_index},
                          {"seed", c.seed},
                          {"row", to_ints(hom.worst.row_config)},
                          {"col", to_ints(hom.worst.col_config)}});

  const KamState s(c.sites, c.n1, p);
  auto basis = ConfigBasis::particle_sector(c.sites, c.n_max, c.max_dim);
  auto rng = stream_rng(c.seed, k.random_operators);
  RandomOperatorSpec spec;
  spec.conserving = true;
  const auto f = random_series(rng, c.sites, c.n1, p, spec);
  auto add = [&](const std::vector<CheckReport>& reps, const std::string& prefix) {
    for (const auto& r : reps) {
      std::string name = prefix;
      for (char ch : "_" + r.check) {
        const char out_ch = std::isalnum(static_cast<unsigned char>(ch)) ? ch : '_';
        if (out_ch != '_' || name.back() != '_') name += out_ch;
      }
      while (name.back() == '_') name.pop_back();
      out.row(name, r.max_violation, p.mu, p.g);
      out.check(name, r.max_violation, r.tolerance);
      if (!r.passed())
        out.replay.push_back({{"check", name}, {"row", to_ints(r.row_config)}, {"col", to_ints(r.col_config)}});
    }
  };
  add(verify_prop1_expansion(s, basis, k.expansion_tol), "prop1");
  add(verify_prop1_commutator(s, f, basis, k.expansion_tol), "prop1");
  add(verify_formal_inverse(s, f, basis, k.inverse_tol), "inverse");
  add(verify_adjointness(s, basis, k.adjoint_tol), "adjoint");
  out.stamps["n1"] = {{"used", c.n1}};
  out.stamps["basis"] = {{"homological", "box"}, {"prop1", "particle_sector"}, {"dim", basis->dim()}};
  return out;
}

inline RunOutput run_geometry_suite(const RunConfig& c) {
  const auto& gs = c.geometry_suite;
  RunOutput out;
  LemmaSuiteConfig lc;
  lc.sites = gs.sites;
  lc.max_p = gs.max_p;
  lc.trials = gs.trials;
  lc.seed = c.seed;
  lc.threads = c.threads;
  lc.anchor = gs.anchor;
  auto emit = [&](const LemmaSuiteReport& r) {
    const double d = c.geometry.delta;
    out.row(r.name + "_trials", static_cast<double>(r.trials), d);
    out.row(r.name + "_checks", static_cast<double>(r.checks), d);
    out.row(r.name + "_rejected", static_cast<double>(r.rejected), d);
    out.row(r.name + "_max_statistic", r.max_statistic, d);
    out.row(r.name + "_bound", r.bound, d);
    out.row(r.name + "_violations", static_cast<double>(r.violations), d);
    out.check(r.name + "_counterexamples", static_cast<double>(r.violations), 0.0);
    if (r.counterexample) out.replay.push_back({{"check", r.name}, {"instance", instance_json(*r.counterexample)}});
  };
  for (const auto& name : gs.suites) {
    if (name == "proximity") emit(proximity_suite(c.geometry, lc));
    if (name == "invariance") emit(invariance_suite(c.geometry, lc));
    if (name == "extension") emit(extension_suite(c.geometry, lc));
    if (name != "prop2") continue;
    const int x = gs.anchor < 0 ? gs.sites / 2 : gs.anchor;
    for (double mu : gs.prop2_mus) {
      GeometryParams gp = c.geometry;
      gp.delta = mu;
      ModelParams mp = c.model;
      mp.mu = mp.delta = mu;
      const ResonanceZone zone(gs.sites, x, gp);
      const auto r = prop2_sampled_checks(zone, mp, gs.prop2_samples, c.seed, c.threads, {}, gs.prop2_tol);
      const auto n = r.samples;
      out.row("prop2_theta_positive", static_cast<double>(r.theta_positive), mu, 0.0, 0.0, 0.0, n);
      out.row("prop2_theta_fractional", static_cast<double>(r.theta_fractional), mu, 0.0, 0.0, 0.0, n);
      out.row("prop2_point1_checks", static_cast<double>(r.point1_checks), mu, 0.0, 0.0, 0.0, n);
      out.row("prop2_point1_violations", static_cast<double>(r.point1_violations), mu, 0.0, 0.0, 0.0, n);
      out.row("prop2_point2_checks", static_cast<double>(r.point2_checks), mu, 0.0, 0.0, 0.0, n);
      out.row("prop2_point2_nonzero", static_cast<double>(r.point2_nonzero), mu, 0.0, 0.0, 0.0, n);
      out.row("prop2_point2_violations", static_cast<double>(r.point2_violations), mu, 0.0, 0.0, 0.0, n);
      out.check("prop2_point1_mu_" + label(mu), static_cast<double>(r.point1_violations), 0.0);
      out.check("prop2_point2_mu_" + label(mu), static_cast<double>(r.point2_violations), 0.0);
      if (r.counterexample) out.replay.push_back({{"check", "prop2"}, {"mu", mu}, {"instance", instance_json(*r.counterexample)}});
    }
  }
  out.stamps["geometry"] = {{"L", c.geometry.L}, {"n2", c.geometry.n2}, {"n3", c.geometry.n3}, {"r", c.geometry.r}};
  return out;
}

inline RunOutput run_current_decompose(const RunConfig& c) {
  const auto& k = c.current;
  const auto& p = c.model;
  RunOutput out;
  require_dim(sector_dim(c.sites, c.n_max), c.max_dim, "particle sector");
  const KamState s(c.sites, c.n1, p);
  SplitWeightField w(zone_theta_field(c.sites, k.a, c.geometry));
  auto basis = ConfigBasis::particle_sector(c.sites, c.n_max, c.max_dim);
  DecompositionOptions opt;
  opt.n0 = k.n0;
  opt.n2 = c.geometry.n2;
  opt.n3 = c.geometry.n3;
  opt.r = c.geometry.r;
  const auto dec = build_decomposition(s, w, basis, opt);
  out.row("identity_residual", dec.identity_residual, p.mu, p.g);
  out.check("decomposition_identity", dec.identity_residual, 1e-9);
  if (!dec.identity_holds(1e-9))
    out.replay.push_back({{"check", "decomposition_identity"}, {"row", to_ints(dec.residual_row)}, {"col", to_ints(dec.residual_col)}});
  out.row("u_hermiticity_defect", dec.u_hermiticity_defect, p.mu, p.g);
  out.row("g_hermiticity_defect", dec.g_hermiticity_defect, p.mu, p.g);
  out.row("omega_shift", dec.omega_shift.value, p.mu, p.g, 0.0, dec.omega_shift.stderr_);

  const auto og = mc_first_moment(dec.g_op, p.mu, k.mc_samples, c.seed, c.threads);
  const auto ou = mc_first_moment(dec.u_op, p.mu, k.mc_samples, c.seed + 1, c.threads);
  const auto ou2 = mc_second_moment(dec.u_op, p.mu, k.mc_samples, c.seed + 2, c.threads);
  out.row("omega_g", og.value, p.mu, p.g, 0.0, og.stderr_, og.samples);
  out.row("omega_u", ou.value, p.mu, p.g, 0.0, ou.stderr_, ou.samples);
  out.row("omega_u_squared", ou2.value, p.mu, p.g, 0.0, ou2.stderr_, ou2.samples);
  // Zero within three standard errors; an exactly zero estimate passes with zero error.
  out.checks.push_back({"omega_g_zero", std::abs(og.value), 3.0 * og.stderr_, std::abs(og.value) <= 3.0 * og.stderr_});

  if (k.cancellation_samples > 0) {
    const ExceptionalSet z(c.sites, k.a, c.geometry);
    const auto configs = gibbs_configs(GibbsSampler(p.mu), c.sites, k.cancellation_samples, c.seed + 3);
    const auto rep = verify_cancellation(s, w, dec.split, z, configs, c.threads);
    const auto n = rep.samples;
    out.row("cancellation_restricted_checks", static_cast<double>(rep.restricted_checks), p.mu, p.g, 0.0, 0.0, n);
    out.row("cancellation_max_restricted_norm", rep.max_restricted_norm, p.mu, p.g, 0.0, 0.0, n);
    out.row("cancellation_nonzero", static_cast<double>(rep.nonzero), p.mu, p.g, 0.0, 0.0, n);
    out.row("cancellation_nonzero_in_z", static_cast<double>(rep.nonzero_in_Z), p.mu, p.g, 0.0, 0.0, n);
    out.row("cancellation_exceptions", static_cast<double>(rep.exceptions), p.mu, p.g, 0.0, 0.0, n);
    out.check("cancellation_restricted", static_cast<double>(rep.restricted_violations), 0.0);
    out.check("cancellation_exceptions", static_cast<double>(rep.exceptions), 0.0);
    if (rep.counterexample) out.replay.push_back({{"check", "cancellation"}, {"eta", to_ints(*rep.counterexample)}});
  }

  if (k.scaling) {
    const auto sc = probability_scalings(c.sites, k.a, c.geometry, k.scaling_mus, k.scaling_samples, k.s_broadening,
                                         c.seed + 4, c.threads);
    for (const auto& r : sc.rows) {
      out.row("probability_w", r.w.value, r.mu, p.g, 0.0, r.w.stderr_, r.w.samples);
      out.row("probability_z_s", r.z_s.value, r.mu, p.g, 0.0, r.z_s.stderr_, r.z_s.samples);
    }
    out.row("slope_w", sc.slope_w, 0.0, p.g);
    out.row("slope_w_predicted", sc.predicted_w, 0.0, p.g);
    out.row("slope_z_s", sc.slope_z, 0.0, p.g);
    out.row("slope_z_s_predicted", sc.predicted_z, 0.0, p.g);
    if (k.scaling_check) {
      // A saturated probability has no slope, so the check fails whatever the fitted value.
      const double dw = std::abs(sc.slope_w - sc.predicted_w), dz = std::abs(sc.slope_z - sc.predicted_z);
      out.checks.push_back({"slope_w", dw, 0.3, !sc.w_saturated && dw <= 0.3});
      out.checks.push_back({"slope_z_s", dz, 0.5, !sc.z_saturated && dz <= 0.5});
    }
    out.stamps["saturated"] = {{"w", sc.w_saturated}, {"z_s", sc.z_saturated}};
  }
  out.stamps["n1"] = {{"prescribed", dec.n1_prescribed}, {"used", dec.n1}};
  out.stamps["n2"] = {{"prescribed", dec.n2_prescribed}, {"used", dec.n2}};
  out.stamps["locality_radius"] = dec.radius();
  out.stamps["truncation_loss"] = {{"decomposition", dec.truncation_loss}, {"omega_shift", dec.omega_shift.truncation_loss}};
  return out;
}

inline RunOutput run_nekhoroshev(const RunConfig& c) {
  const auto& k = c.nekhoroshev;
  RunOutput out;
  require_dim(box_dim(c.sites, c.n_max), c.max_dim, "box");
  Json cap = Json::object();
  std::size_t loss = 0;
  for (double g : k.gs) {
    NekhoroshevConfig nc;
    nc.sites = c.sites;
    nc.n_max = c.n_max;
    nc.a1 = k.a1;
    nc.a2 = k.a2;
    nc.g = g;
    nc.mus = k.mus;
    nc.times = k.times;
    nc.horizon = k.horizon;
    const auto r = nekhoroshev_experiment(nc);
    out.rows.insert(out.rows.end(), r.rows.begin(), r.rows.end());
    const std::string tag = "g_" + label(g);
    out.check("sum_rule_" + tag, r.max_of("sum_rule_residual"), 1e-8);
    if (g == 0.0) out.check("zero_hopping_drift", r.max_of("energy_drift"), 0.0);
    for (const auto& [mu, wgt] : r.cap_weight) cap[format_number(mu)] = wgt;
    loss += r.truncation_loss;
  }
  out.stamps["cap_weight"] = cap;
  out.stamps["truncation_loss"] = loss;
  return out;
}

inline RunOutput run_integrated_current(const RunConfig& c) {
  const auto& k = c.integrated;
  RunOutput out;
  require_dim(sector_dim(c.sites, c.n_max), c.max_dim, "particle sector");
  IntegratedCurrentConfig ic;
  ic.sites = c.sites;
  ic.n_total = c.n_max;
  ic.a = k.a;
  ic.n0 = k.n0;
  ic.n1 = c.n1;
  ic.model = c.model;
  ic.geometry = c.geometry;
  ic.times = k.times;
  ic.quadrature_tol = k.quadrature_tol;
  const auto r = integrated_current_experiment(ic);
  out.rows = r.rows;
  out.check("decomposition_identity", r.max_of("decomposition_residual"), 1e-9);
  out.check("integrated_identity", r.max_of("integrated_identity_residual"), 1e-7);
  out.stamps["n1"] = {{"prescribed", prescribed_n1(k.n0, c.model.gamma)}, {"used", c.n1}};
  out.stamps["n2"] = {{"prescribed", prescribed_n2(k.n0, c.model.gamma)}, {"used", c.geometry.n2}};
  out.stamps["truncation_loss"] = r.truncation_loss;
  return out;
}

inline RunOutput run_pipeline(const RunConfig& c) {
  if (c.subcommand == "kam-verify") return run_kam_verify(c);
  if (c.subcommand == "geometry-suite") return run_geometry_suite(c);
  if (c.subcommand == "current-decompose") return run_current_decompose(c);
  if (c.subcommand == "nekhoroshev") return run_nekhoroshev(c);
  return run_integrated_current(c);
}

}  // namespace bhkam::cli

#endif  // BHKAM_TOOLS_PIPELINES_HPP
