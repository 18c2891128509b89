#ifndef BHKAM_GEOMETRY_SUITES_HPP
#define BHKAM_GEOMETRY_SUITES_HPP

#include <optional>
#include <string>

#include "bhkam/geometry.hpp"
#include "bhkam/gibbs.hpp"

namespace bhkam {

// Replay record for a failed randomized check.
struct LemmaInstance {
  std::vector<double> eta;
  std::vector<Move> cluster;
  Move rho;
  double t = 0.0;
};

struct LemmaSuiteReport {
  std::string name;
  std::size_t trials = 0;
  std::size_t checks = 0;
  std::size_t violations = 0;
  // Draws discarded because they missed the hypothesis.
  std::size_t rejected = 0;
  // Proximity: largest observed ratio. Invariance and extension: largest B-set load.
  double max_statistic = 0.0;
  // Threshold the statistic is compared against.
  double bound = 0.0;
  std::optional<LemmaInstance> counterexample;
  bool passed() const { return violations == 0; }
};

struct LemmaSuiteConfig {
  int sites = 6;
  int max_p = 2;
  std::size_t trials = 10000;
  std::uint64_t seed = 20240521;
  int threads = 1;
  // Anchor of the clusters; negative means the central site.
  int anchor = -1;
  int max_attempts = 200;
};

// max over spans E of p independent moves and rho not in E of 1 + |rho| / |P_{E-perp} rho|.
inline double proximity_constant(const MoveCatalog& catalog, int p) {
  const int n = catalog.sites;
  std::set<std::vector<long long>> seen;
  double best = 1.0;
  std::vector<Move> chosen;
  std::function<void(std::size_t)> rec = [&](std::size_t start) {
    if (static_cast<int>(chosen.size()) == p) {
      Subspace e(n, chosen);
      if (!seen.insert(e.key()).second) return;
      for (const auto& m : catalog.moves) {
        const RealVec v = to_real(m);
        const double perp = e.project_to_intersection(v).norm();
        if (perp <= 1e-9 * v.norm()) continue;
        best = std::max(best, 1.0 + v.norm() / perp);
      }
      return;
    }
    for (std::size_t i = start; i < catalog.moves.size(); ++i) {
      chosen.push_back(catalog.moves[i]);
      if (linearly_independent(n, chosen)) rec(i + 1);
      chosen.pop_back();
    }
  };
  rec(0);
  return best;
}

namespace detail {

inline RealVec gaussian_vector(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  RealVec v(n);
  for (int i = 0; i < n; ++i) v(i) = g(rng);
  return v;
}

// Point of span with norm r in a uniformly random direction.
inline RealVec random_in_span(const Subspace& s, double r, std::mt19937_64& rng) {
  RealVec c = gaussian_vector(s.dim(), rng);
  c *= r / c.norm();
  return s.basis() * c;
}

// Radius in [0, R], half of the draws concentrated near R.
inline double boundary_biased_radius(double R, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  if (u(rng) < 0.5) return R * u(rng);
  return R * (1.0 - std::pow(10.0, -4.0 * u(rng)));
}

inline RealVec random_orthogonal(const Subspace& s, double scale, std::mt19937_64& rng) {
  return scale * s.project_to_intersection(gaussian_vector(s.sites(), rng));
}

inline LemmaInstance make_instance(const RealVec& eta, std::vector<Move> cluster, Move rho, double t) {
  return {std::vector<double>(eta.data(), eta.data() + eta.size()), std::move(cluster), std::move(rho), t};
}

struct TrialOutcome {
  std::size_t checks = 0;
  std::size_t violations = 0;
  std::size_t rejected = 0;
  double stat = 0.0;
  std::optional<LemmaInstance> example;
};

inline LemmaSuiteReport reduce_trials(std::string name, const std::vector<TrialOutcome>& out, double bound) {
  LemmaSuiteReport r;
  r.name = std::move(name);
  r.trials = out.size();
  r.bound = bound;
  for (const auto& o : out) {
    r.checks += o.checks;
    r.violations += o.violations;
    r.rejected += o.rejected;
    r.max_statistic = std::max(r.max_statistic, o.stat);
    if (!r.counterexample && o.example) r.counterexample = o.example;
  }
  return r;
}

}  // namespace detail

// |eta - P(eta, cap_{i<=p+1} pi)| <= C (|rho_{p+1} . eta| + |eta - P(eta, cap_{i<=p} pi)|)
// with C the exhaustive constant above.
inline LemmaSuiteReport proximity_suite(const GeometryParams& gp, const LemmaSuiteConfig& cfg) {
  const MoveCatalog catalog(cfg.sites, gp.r);
  std::vector<double> cmax(static_cast<std::size_t>(cfg.max_p) + 1, 1.0);
  for (int p = 1; p <= cfg.max_p; ++p) cmax[static_cast<std::size_t>(p)] = proximity_constant(catalog, p);
  std::vector<detail::TrialOutcome> out(cfg.trials);
  parallel_for(cfg.trials, cfg.threads, [&](std::size_t i) {
    auto rng = stream_rng(cfg.seed, i);
    std::uniform_int_distribution<int> pick_p(1, cfg.max_p);
    std::uniform_int_distribution<std::size_t> pick(0, catalog.moves.size() - 1);
    const int p = pick_p(rng);
    std::vector<Move> moves;
    while (static_cast<int>(moves.size()) < p + 1) {
      moves.push_back(catalog.moves[pick(rng)]);
      if (!linearly_independent(cfg.sites, moves)) moves.pop_back();
    }
    // Mostly in-span draws with a small transverse part, which is where the ratio peaks.
    std::normal_distribution<double> g;
    RealVec eta = 0.01 * detail::gaussian_vector(cfg.sites, rng);
    for (const auto& m : moves) eta += g(rng) * to_real(m);
    const Subspace ep(cfg.sites, std::vector<Move>(moves.begin(), moves.end() - 1));
    const Subspace ep1(cfg.sites, moves);
    const double lhs = ep1.distance_to_intersection(eta);
    const double rhs = std::abs(to_real(moves.back()).dot(eta)) + ep.distance_to_intersection(eta);
    auto& o = out[i];
    o.checks = 1;
    const double c = cmax[static_cast<std::size_t>(p)];
    o.stat = rhs > 0.0 ? lhs / rhs : 0.0;
    if (lhs > c * rhs * (1.0 + 1e-12) + 1e-12) {
      o.violations = 1;
      o.example = detail::make_instance(eta, moves, moves.back(), 0.0);
    }
  });
  double c = 0.0;
  for (int p = 1; p <= cfg.max_p; ++p) c = std::max(c, cmax[static_cast<std::size_t>(p)]);
  return detail::reduce_trials("proximity", out, c);
}

// eta in B, rho in M_r cap span, |rho . eta| <= K s  =>  eta + t rho in B for |t| <= s.
inline LemmaSuiteReport invariance_suite(const GeometryParams& gp, const LemmaSuiteConfig& cfg) {
  GeometryParams g2 = gp;
  g2.n2 = cfg.max_p;
  auto catalog = std::make_shared<const MoveCatalog>(cfg.sites, gp.r);
  const int x = cfg.anchor >= 0 ? cfg.anchor : (cfg.sites - 1) / 2;
  const ResonanceZone zone(catalog, x, g2);
  const double s = gp.scale();
  const double ks = gp.K() * s;
  std::vector<detail::TrialOutcome> out(cfg.trials);
  parallel_for(cfg.trials, cfg.threads, [&](std::size_t i) {
    auto rng = stream_rng(cfg.seed, i);
    std::uniform_int_distribution<std::size_t> pick_c(0, zone.sets().size() - 1);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const std::size_t ci = pick_c(rng);
    const BSet& b = zone.sets()[ci];
    const auto& span = b.span();
    const auto& in_span = b.moves_in_span();
    const Move rho = in_span[std::uniform_int_distribution<std::size_t>(0, in_span.size() - 1)(rng)];
    const RealVec rv = to_real(rho);
    auto& o = out[i];
    for (int attempt = 0; attempt < cfg.max_attempts; ++attempt) {
      const double R = std::pow(gp.L, b.p()) * s;
      RealVec y = detail::random_in_span(span, detail::boundary_biased_radius(R, rng), rng);
      const double tau = ks * u(rng);
      y += ((tau - rv.dot(y)) / rv.squaredNorm()) * rv;
      const RealVec eta = y + detail::random_orthogonal(span, 10.0 * s, rng);
      if (!b.contains(eta, gp.L, s) || std::abs(rv.dot(eta)) > ks) {
        ++o.rejected;
        continue;
      }
      std::vector<double> ts{-s, s, 0.0};
      for (int k = 0; k < 13; ++k) ts.push_back(s * u(rng));
      for (double t : ts) {
        const RealVec moved = eta + t * rv;
        const double load = b.load(moved, gp.L, s);
        ++o.checks;
        o.stat = std::max(o.stat, load);
        if (!b.contains(moved, gp.L, s)) {
          ++o.violations;
          if (!o.example) o.example = detail::make_instance(eta, zone.clusters()[ci], rho, t);
        }
      }
      break;
    }
  });
  return detail::reduce_trials("invariance", out, 1.0);
}

// eta in B(rho_1..rho_p), |rho . eta| <= K s, {rho_1..rho_p, rho} a cluster  =>  eta in B(rho_1..rho_p, rho).
inline LemmaSuiteReport extension_suite(const GeometryParams& gp, const LemmaSuiteConfig& cfg) {
  GeometryParams g2 = gp;
  g2.n2 = std::max(1, cfg.max_p - 1);
  auto catalog = std::make_shared<const MoveCatalog>(cfg.sites, gp.r);
  const int x = cfg.anchor >= 0 ? cfg.anchor : (cfg.sites - 1) / 2;
  const ResonanceZone zone(catalog, x, g2);
  const double s = gp.scale();
  const double ks = gp.K() * s;
  std::vector<detail::TrialOutcome> out(cfg.trials);
  parallel_for(cfg.trials, cfg.threads, [&](std::size_t i) {
    auto rng = stream_rng(cfg.seed, i);
    std::uniform_int_distribution<std::size_t> pick_c(0, zone.sets().size() - 1);
    std::uniform_int_distribution<std::size_t> pick_m(0, catalog->moves.size() - 1);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    auto& o = out[i];
    for (int attempt = 0; attempt < cfg.max_attempts; ++attempt) {
      const std::size_t ci = pick_c(rng);
      const BSet& b = zone.sets()[ci];
      if (b.p() + 1 > cfg.max_p) {
        ++o.rejected;
        continue;
      }
      const auto& base = zone.clusters()[ci];
      const Move rho = catalog->moves[pick_m(rng)];
      auto ext = base;
      ext.push_back(rho);
      if (b.span().contains(rho) || !is_cluster(ext, x, gp.r)) {
        ++o.rejected;
        continue;
      }
      const RealVec rv = to_real(rho);
      RealVec v = b.span().project_to_intersection(rv);
      v /= v.norm();
      const RealVec y = detail::random_in_span(b.span(), detail::boundary_biased_radius(std::pow(gp.L, b.p()) * s, rng), rng);
      const double tau = ks * u(rng);
      const Subspace ext_span(cfg.sites, ext);
      const RealVec eta = y + ((tau - rv.dot(y)) / rv.dot(v)) * v + detail::random_orthogonal(ext_span, 10.0 * s, rng);
      if (!b.contains(eta, gp.L, s) || std::abs(rv.dot(eta)) > ks * (1.0 + 1e-12)) {
        ++o.rejected;
        continue;
      }
      const BSet be(ext_span, *catalog);
      ++o.checks;
      o.stat = be.load(eta, gp.L, s);
      if (!be.contains(eta, gp.L, s)) {
        ++o.violations;
        o.example = detail::make_instance(eta, ext, rho, 0.0);
      }
      break;
    }
  });
  return detail::reduce_trials("extension", out, 1.0);
}

struct Prop2Report {
  std::size_t samples = 0;
  std::size_t theta_positive = 0;
  std::size_t theta_fractional = 0;
  std::size_t point1_checks = 0;
  std::size_t point1_violations = 0;
  // Resonant moves tested for the increment of theta.
  std::size_t point2_checks = 0;
  std::size_t point2_nonzero = 0;
  std::size_t point2_nonzero_in_S = 0;
  std::size_t point2_violations = 0;
  double max_increment_outside_S = 0.0;
  std::optional<LemmaInstance> counterexample;
  bool passed() const { return point1_violations == 0 && point2_violations == 0; }
};

// Gibbs-sampled form of the two statements about theta_x: theta_x > 0 forbids local
// resonances, and theta_x is invariant under resonant moves away from S(x).
inline Prop2Report prop2_sampled_checks(const ResonanceZone& zone, const ModelParams& mp, std::size_t samples,
                                        std::uint64_t seed, int threads, const ThetaQuadrature& q = {},
                                        double tol = 1e-3) {
  const GibbsSampler sampler(mp.mu);
  const int n = zone.sites();
  const int x = zone.anchor();
  const int r = zone.params().r;
  std::vector<Prop2Report> out(samples);
  parallel_for(samples, threads, [&](std::size_t i) {
    auto rng = stream_rng(seed, i);
    const OccupationConfig eta = sampler.sample(n, rng);
    const RealVec ev = to_real(eta);
    auto& rep = out[i];
    rep.samples = 1;
    const double th = zone.theta(ev, q);
    if (th > 0.0) {
      ++rep.theta_positive;
      if (th < 1.0) ++rep.theta_fractional;
      for (const auto& m : zone.catalog().moves) {
        if (!in_ball(m, x, 4 * r)) continue;
        ++rep.point1_checks;
        if (zeta(m, eta, mp) != 0.0) {
          ++rep.point1_violations;
          if (!rep.counterexample) rep.counterexample = detail::make_instance(ev, {}, m, th);
        }
      }
    }
    std::optional<bool> in_s;
    for (const auto& m : zone.catalog().moves) {
      if (zeta(m, eta, mp) == 0.0 || !(eta + m).non_negative()) continue;
      ++rep.point2_checks;
      const double inc = std::abs(zone.theta(to_real(eta + m), q) - th);
      if (inc <= tol) continue;
      ++rep.point2_nonzero;
      if (!in_s) in_s = zone.in_S(ev);
      if (*in_s) {
        ++rep.point2_nonzero_in_S;
        continue;
      }
      ++rep.point2_violations;
      rep.max_increment_outside_S = std::max(rep.max_increment_outside_S, inc);
      if (!rep.counterexample) rep.counterexample = detail::make_instance(ev, {}, m, inc);
    }
  });
  Prop2Report total;
  for (const auto& r2 : out) {
    total.samples += r2.samples;
    total.theta_positive += r2.theta_positive;
    total.theta_fractional += r2.theta_fractional;
    total.point1_checks += r2.point1_checks;
    total.point1_violations += r2.point1_violations;
    total.point2_checks += r2.point2_checks;
    total.point2_nonzero += r2.point2_nonzero;
    total.point2_nonzero_in_S += r2.point2_nonzero_in_S;
    total.point2_violations += r2.point2_violations;
    total.max_increment_outside_S = std::max(total.max_increment_outside_S, r2.max_increment_outside_S);
    if (!total.counterexample && r2.counterexample) total.counterexample = r2.counterexample;
  }
  return total;
}

}  // namespace bhkam

#endif  // BHKAM_GEOMETRY_SUITES_HPP
