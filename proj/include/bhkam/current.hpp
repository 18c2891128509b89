#ifndef BHKAM_CURRENT_HPP
#define BHKAM_CURRENT_HPP

#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <unordered_map>
#include <vector>

#include "bhkam/geometry.hpp"
#include "bhkam/gibbs.hpp"
#include "bhkam/kam.hpp"
#include "bhkam/series.hpp"

namespace bhkam {

// Orders that make the moment bounds close for a target power n0. Both are far
// beyond desk scale, so runs report them next to the values actually used.
inline int prescribed_n1(int n0, double gamma) {
  const double gp = 1.0 - gamma;
  return static_cast<int>(std::ceil((n0 + 4.0 - gamma) / (1.0 - 2.0 * gp) - 1e-12));
}
inline int prescribed_n2(int n0, double gamma) {
  return static_cast<int>(std::ceil((10.0 + 2.0 * n0) / (1.0 - gamma) - 1e-12));
}

// Support radius of u_a and g_a around the bond.
inline int locality_radius(int n2, int n3, int r) { return n3 + (n2 + 9) * r; }

// theta_y for every y in the ball B(a, n3), evaluated jointly.
struct ThetaField {
  int a = 0;
  std::vector<int> sites;
  Window window;
  std::function<std::vector<double>(const SiteVector&)> values;
};

// Indicators from the resonance zones around each site of the ball.
inline ThetaField zone_theta_field(int n, int a, const GeometryParams& gp, const ThetaQuadrature& q = {}) {
  auto catalog = std::make_shared<const MoveCatalog>(n, gp.r);
  auto zones = std::make_shared<std::vector<ResonanceZone>>();
  ThetaField f;
  f.a = a;
  f.sites = ChainGeometry(n).ball(a, gp.n3);
  for (int y : f.sites) {
    zones->emplace_back(catalog, y, gp);
    for (int z : zones->back().window()) f.window = hull(f.window, Window::single(z));
  }
  f.values = [zones, q](const SiteVector& eta) {
    std::vector<double> th;
    th.reserve(zones->size());
    const RealVec ev = to_real(eta);
    for (const auto& z : *zones) th.push_back(z.theta(ev, q));
    return th;
  };
  return f;
}

// Field with the same value everywhere; the two extreme branches of the weights.
inline ThetaField constant_theta_field(int n, int a, int n3, double value) {
  ThetaField f;
  f.a = a;
  f.sites = ChainGeometry(n).ball(a, n3);
  f.values = [k = f.sites.size(), value](const SiteVector&) { return std::vector<double>(k, value); };
  return f;
}

struct SplitWeights {
  int a = 0;
  std::vector<int> sites;
  std::vector<double> vartheta;
  double star = 0.0;
  double norm = 1.0;

  double at(int x) const {
    for (std::size_t i = 0; i < sites.size(); ++i)
      if (sites[i] == x) return vartheta[i];
    return 0.0;
  }
  double total() const {
    double s = star;
    for (double v : vartheta) s += v;
    return s;
  }
};

// vartheta_{a,x} = (Pi delta_{ax} + (1 - Pi) theta_x) / N and vartheta_{a,*} = prod(1 - theta_y) / N
// with Pi = prod theta_y and N = Pi + (1 - Pi) sum theta_x + prod(1 - theta_y).
inline SplitWeights split_weights(int a, const std::vector<int>& sites, const std::vector<double>& theta) {
  if (sites.size() != theta.size()) throw ConfigError("one theta value per ball site required");
  double pi = 1.0, pc = 1.0, sum = 0.0;
  for (double t : theta) {
    pi *= t;
    pc *= 1.0 - t;
    sum += t;
  }
  SplitWeights w;
  w.a = a;
  w.sites = sites;
  w.norm = pi + (1.0 - pi) * sum + pc;
  for (std::size_t i = 0; i < sites.size(); ++i)
    w.vartheta.push_back(((sites[i] == a ? pi : 0.0) + (1.0 - pi) * theta[i]) / w.norm);
  w.star = pc / w.norm;
  return w;
}

// Weights as diagonal functions. One cache is shared by all weight leaves so
// each configuration evaluates the theta field once.
class SplitWeightField {
 public:
  explicit SplitWeightField(ThetaField theta) : state_(std::make_shared<State>()) { state_->theta = std::move(theta); }

  int anchor() const { return state_->theta.a; }
  const std::vector<int>& sites() const { return state_->theta.sites; }
  const ThetaField& theta() const { return state_->theta; }

  SplitWeights at(const SiteVector& eta) const { return state_->get(eta); }

  DiagFn vartheta(int x) const {
    auto st = state_;
    return DiagNode::leaf(state_->theta.window, [st, x](const SiteVector& eta) { return cplx(st->get(eta).at(x), 0.0); },
                          "vartheta");
  }
  DiagFn star() const {
    auto st = state_;
    return DiagNode::leaf(state_->theta.window, [st](const SiteVector& eta) { return cplx(st->get(eta).star, 0.0); },
                          "vartheta_star");
  }

 private:
  struct State {
    ThetaField theta;
    std::mutex mutex;
    std::unordered_map<SiteVector, SplitWeights, SiteVectorHash> cache;

    SplitWeights get(const SiteVector& eta) {
      {
        std::lock_guard<std::mutex> lock(mutex);
        auto it = cache.find(eta);
        if (it != cache.end()) return it->second;
      }
      SplitWeights w = split_weights(theta.a, theta.sites, theta.values(eta));
      std::lock_guard<std::mutex> lock(mutex);
      if (cache.size() >= kMemoCap) cache.clear();
      cache.emplace(eta, w);
      return w;
    }
  };
  std::shared_ptr<State> state_;
};

struct ResonantSplit {
  int a = 0;
  FormalSeries left;
  FormalSeries right;
};

// Sum over y in [lo, hi] of the local terms h~_y at order k.
inline ClassSOperator htilde_partial(const KamState& s, int k, int lo, int hi) {
  return s.htilde(k).origin_range(lo, hi);
}

// h~_{>a} = sum_{x in B} (sum_{y>x} h~_y) vartheta_{a,x} + (sum_{y>a} h~_y) vartheta_{a,*},
// h~_{<=a} likewise with y <= x. The weights multiply from the right.
inline ResonantSplit split_resonant_hamiltonian(const KamState& s, const SplitWeightField& w) {
  const int n = s.sites();
  const int a = w.anchor();
  ResonantSplit out{a, FormalSeries(n, s.order()), FormalSeries(n, s.order())};
  std::vector<std::pair<int, DiagFn>> weights;
  for (int x : w.sites()) weights.emplace_back(x, w.vartheta(x));
  const DiagFn star = w.star();
  for (int k = 0; k <= s.order(); ++k) {
    ClassSOperator left(n), right(n);
    for (const auto& [x, fn] : weights) {
      left = left + multiply_diag_right(htilde_partial(s, k, 0, x), fn);
      right = right + multiply_diag_right(htilde_partial(s, k, x + 1, n - 1), fn);
    }
    left = left + multiply_diag_right(htilde_partial(s, k, 0, a), star);
    right = right + multiply_diag_right(htilde_partial(s, k, a + 1, n - 1), star);
    out.left[k] = left.normalized();
    out.right[k] = right.normalized();
  }
  return out;
}

// sum_{y>x} h~_y as a series.
inline FormalSeries htilde_right_of(const KamState& s, int x) {
  std::vector<ClassSOperator> c;
  for (int k = 0; k <= s.order(); ++k) c.push_back(htilde_partial(s, k, x + 1, s.sites() - 1));
  return FormalSeries(std::move(c));
}

// Reduced energy current j_a = i[h, h^O_{>a}].
inline OperatorMatrix reduced_current(const ModelParams& p, const BasisPtr& basis, int a) {
  const auto h = build_reduced_hamiltonian(p, basis);
  const auto right = build_right_energy(p, basis, a, p.delta * p.delta, p.mu * p.g * p.delta);
  OperatorMatrix j;
  j.basis = basis;
  j.data = commutator(h.data, right.data) * cplx(0.0, 1.0);
  j.symmetry = Symmetry::hermitian;
  return j;
}

// Physical current J_a = i[H, H_{>a}].
inline OperatorMatrix physical_current(const ModelParams& p, const BasisPtr& basis, int a) {
  const auto h = build_bose_hubbard(p, basis);
  const auto right = build_right_energy(p, basis, a);
  OperatorMatrix j;
  j.basis = basis;
  j.data = commutator(h.data, right.data) * cplx(0.0, 1.0);
  j.symmetry = Symmetry::hermitian;
  return j;
}

// sum_k mu^k f^(k) as one operator.
inline ClassSOperator evaluate_series(const FormalSeries& f, double mu) {
  ClassSOperator out(f.sites());
  for (int k = 0; k <= f.order(); ++k)
    if (!f[k].empty()) out = out + f[k].scaled(std::pow(mu, k));
  return out.normalized();
}

// Column norm |X P_eta| = (sum_rho |X_rho(eta)|^2)^{1/2}.
inline double column_norm(const ClassSOperator& x, const OccupationConfig& eta) {
  std::map<Move, cplx> col;
  for (const auto& p : x.pieces()) {
    if (!(eta + p.rho).non_negative()) continue;
    col[p.rho] += (*p.coef)(eta);
  }
  double s = 0.0;
  for (const auto& [rho, c] : col) s += std::norm(c);
  return std::sqrt(s);
}

// <eta|X|eta>.
inline double diagonal_value(const ClassSOperator& x, const OccupationConfig& eta) {
  cplx c = 0.0;
  for (const auto& p : x.pieces())
    if (p.rho.is_zero()) c += (*p.coef)(eta);
  return c.real();
}

// <eta|X^2|eta> = sum_rho X_{-rho}(eta + rho) X_rho(eta).
inline double diagonal_square(const ClassSOperator& x, const OccupationConfig& eta) {
  std::map<Move, cplx> col;
  for (const auto& p : x.pieces()) {
    if (!(eta + p.rho).non_negative()) continue;
    col[p.rho] += (*p.coef)(eta);
  }
  cplx s = 0.0;
  for (const auto& [rho, c] : col) {
    if (c == cplx(0.0)) continue;
    s += x.coefficient(-rho, eta + rho) * c;
  }
  return s.real();
}

struct DiagonalAverage {
  double value = 0.0;
  // Gibbs weight of configurations outside the enumerated box.
  double truncation_loss = 0.0;
  // Standard error when the average was sampled.
  double stderr_ = 0.0;
  bool sampled = false;
};

// Gibbs average of the diagonal part of f. The diagonal pieces are summed
// first so cancelling pieces cancel pointwise. The sum is averaged exactly on
// a box over its window whose excluded weight is below 1e-13 when that box fits
// the budget, and by sampling the untruncated law otherwise.
inline DiagonalAverage gibbs_diagonal_average(const ClassSOperator& f, double mu, std::size_t budget = 2'000'000,
                                              std::size_t samples = 100000, std::uint64_t seed = 1,
                                              int threads = 1) {
  DiagonalAverage out;
  const int n = f.sites();
  ClassSOperator diag(n);
  Window w;
  for (const auto& p : f.pieces())
    if (p.rho.is_zero()) {
      diag.add(p);
      if (!p.coef->is_constant()) w = hull(w, p.window);
    }
  if (diag.empty()) return out;
  const auto value = [&](const OccupationConfig& eta) { return diagonal_value(diag, eta); };
  const int cap = static_cast<int>(std::ceil(30.0 / mu));
  if (std::pow(cap + 1.0, w.width()) > static_cast<double>(budget)) {
    const auto est = mc_expectation(GibbsSampler(mu), n, samples, seed, threads, value);
    out.value = est.value;
    out.stderr_ = est.stderr_;
    out.sampled = true;
    return out;
  }
  const double q = std::exp(-mu);
  SiteVector eta(n);
  std::function<void(int, double)> rec = [&](int x, double weight) {
    if (w.empty() || x > w.hi) {
      out.value += weight * value(eta);
      return;
    }
    for (int k = 0; k <= cap; ++k) {
      eta[x] = k;
      rec(x + 1, weight * (1.0 - q) * std::pow(q, k));
    }
    eta[x] = 0;
  };
  rec(w.lo, 1.0);
  out.truncation_loss = 1.0 - std::pow(1.0 - std::pow(q, cap + 1), w.width());
  return out;
}

struct DecompositionOptions {
  int n0 = 1;
  int n2 = 2;
  int n3 = 1;
  int r = 1;
};

// u_a, g_a and their matrix realizations on one basis.
struct CurrentDecomposition {
  int a = 0;
  int n0 = 1, n1 = 1, n2 = 2, n3 = 1, r = 1;
  double mu = 0.0;
  double gamma = 0.75;
  int n1_prescribed = 0, n2_prescribed = 0;

  ResonantSplit split;
  FormalSeries h_right;        // T_{n1}(R h~_{>a})
  ClassSOperator h_right_bare;  // h^O_{>a}
  FormalSeries g_series;       // i T_{n1}(R ad_h~ h~_{>a})
  ClassSOperator g_tail;       // i ad_v sum_k R^(n1-k) h~^(k)_{>a}, weight mu^{n1+1}
  ClassSOperator u_op;         // u_a at the given mu
  ClassSOperator g_op;         // g_a at the given mu
  DiagonalAverage omega_shift;  // omega(h^O_{>a} - h_{>a})

  OperatorMatrix j_hat, u_hat, g_hat;
  double identity_residual = 0.0;
  OccupationConfig residual_row, residual_col;
  double u_hermiticity_defect = 0.0;
  double g_hermiticity_defect = 0.0;
  std::size_t truncation_loss = 0;

  int radius() const { return locality_radius(n2, n3, r); }
  bool identity_holds(double tol) const { return identity_residual <= tol; }
};

// u_a = h^O_{>a} - h_{>a} - omega(.), mu^{n0+1} g_a = i T(R ad_h~ h~_{>a}) + i mu^{n1+1} ad_v sum_k R^(n1-k) h~^(k)_{>a},
// and the residual of j_a = i ad_h u_a + mu^{n0+1} g_a on the basis.
inline CurrentDecomposition build_decomposition(const KamState& s, const SplitWeightField& w, const BasisPtr& basis,
                                                const DecompositionOptions& opt = {}) {
  const int n = s.sites();
  const int n1 = s.order();
  const auto& mp = s.params();
  CurrentDecomposition dec;
  dec.a = w.anchor();
  dec.n0 = opt.n0;
  dec.n1 = n1;
  dec.n2 = opt.n2;
  dec.n3 = opt.n3;
  dec.r = opt.r;
  dec.mu = mp.mu;
  dec.gamma = mp.gamma;
  dec.n1_prescribed = prescribed_n1(opt.n0, mp.gamma);
  dec.n2_prescribed = prescribed_n2(opt.n0, mp.gamma);

  dec.split = split_resonant_hamiltonian(s, w);
  dec.h_right = s.apply_R_series(dec.split.right, n1);
  dec.h_right_bare = (s.d().origin_range(dec.a + 1, n - 1) + s.v().origin_range(dec.a + 1, n - 1).scaled(mp.mu)).normalized();

  const FormalSeries ad = series_commutator(s.htilde_series(), dec.split.right, n1, s.options());
  dec.g_series = s.apply_R_series(ad, n1).scaled(cplx(0.0, 1.0));
  ClassSOperator tail(n);
  for (int k = 0; k <= n1; ++k)
    if (!dec.split.right[k].empty()) tail = tail + s.apply_R(n1 - k, dec.split.right[k]);
  dec.g_tail = commutator(s.v(), tail.normalized(), s.options()).scaled(cplx(0.0, 1.0));

  const ClassSOperator diff = (dec.h_right_bare - evaluate_series(dec.h_right, mp.mu)).normalized();
  dec.omega_shift = gibbs_diagonal_average(diff, mp.mu);
  ClassSOperator u = diff;
  u.add(Move(n), diag_constant(-dec.omega_shift.value));
  dec.u_op = u.normalized();
  const double scale = std::pow(mp.mu, opt.n0 + 1);
  dec.g_op = (evaluate_series(dec.g_series, mp.mu) + dec.g_tail.scaled(std::pow(mp.mu, n1 + 1))).scaled(1.0 / scale).normalized();

  dec.j_hat = reduced_current(mp, basis, dec.a);
  dec.u_hat = to_matrix(dec.u_op, basis);
  dec.g_hat = to_matrix(dec.g_op, basis);
  dec.truncation_loss = dec.u_hat.truncation_loss + dec.g_hat.truncation_loss;
  const auto h = build_reduced_hamiltonian(mp, basis);
  const SparseMat residual = dec.j_hat.data - commutator(h.data, dec.u_hat.data) * cplx(0.0, 1.0) -
                             dec.g_hat.data * cplx(scale, 0.0);
  const auto loc = max_abs_on(residual, full_mask(*basis));
  dec.identity_residual = loc.value;
  if (loc.row >= 0) {
    dec.residual_row = basis->config(static_cast<std::size_t>(loc.row));
    dec.residual_col = basis->config(static_cast<std::size_t>(loc.col));
  }
  dec.u_hermiticity_defect = hermiticity_defect(dec.u_hat.data);
  dec.g_hermiticity_defect = hermiticity_defect(dec.g_hat.data);
  return dec;
}

// Largest distance from a of a site where two configurations joined by a
// nonzero matrix element differ.
inline int matrix_support_radius(const OperatorMatrix& m, int a, double tol = 0.0) {
  int best = -1;
  for (int k = 0; k < m.data.outerSize(); ++k)
    for (SparseMat::InnerIterator it(m.data, k); it; ++it) {
      if (std::abs(it.value()) <= tol) continue;
      const auto d = m.basis->config(static_cast<std::size_t>(it.row())) - m.basis->config(static_cast<std::size_t>(it.col()));
      for (int x : d.support()) best = std::max(best, std::abs(x - a));
    }
  return best;
}

inline std::vector<OccupationConfig> gibbs_configs(const GibbsSampler& g, int sites, std::size_t samples,
                                                   std::uint64_t seed) {
  std::vector<OccupationConfig> out;
  out.reserve(samples);
  for (std::size_t i = 0; i < samples; ++i) {
    auto rng = stream_rng(seed, i);
    out.push_back(g.sample(sites, rng));
  }
  return out;
}

struct CancellationReport {
  std::size_t samples = 0;
  // Pairs (eta, x) with vartheta_{a,x}(eta) > 0.
  std::size_t restricted_checks = 0;
  std::size_t restricted_violations = 0;
  double max_restricted_norm = 0.0;
  // Samples where (ad_h~ h~_{>a}) P_eta is nonzero.
  std::size_t nonzero = 0;
  std::size_t nonzero_in_Z = 0;
  std::size_t exceptions = 0;
  double max_unrestricted_norm = 0.0;
  std::optional<OccupationConfig> counterexample;

  bool passed() const { return restricted_violations == 0 && exceptions == 0; }
};

// For every sample, (ad_h~ sum_{y>x} h~_y) P_eta must vanish at each x with
// vartheta_{a,x}(eta) > 0, and a nonzero (ad_h~ h~_{>a}) P_eta requires eta in Z.
inline CancellationReport verify_cancellation(const KamState& s, const SplitWeightField& w, const ResonantSplit& split,
                                              const ExceptionalSet& z, const std::vector<OccupationConfig>& configs,
                                              int threads = 1, double tol = 1e-9) {
  const int n1 = s.order();
  const double mu = s.params().mu;
  const FormalSeries ht = s.htilde_series();
  std::vector<std::pair<int, ClassSOperator>> partial;
  for (int x : w.sites())
    partial.emplace_back(x, evaluate_series(series_commutator(ht, htilde_right_of(s, x), 2 * n1, s.options()), mu));
  const ClassSOperator full = evaluate_series(series_commutator(ht, split.right, 2 * n1, s.options()), mu);

  std::vector<CancellationReport> part(configs.size());
  parallel_for(configs.size(), threads, [&](std::size_t i) {
    const auto& eta = configs[i];
    auto& rep = part[i];
    rep.samples = 1;
    const SplitWeights sw = w.at(eta);
    for (const auto& [x, op] : partial) {
      if (!(sw.at(x) > 0.0)) continue;
      ++rep.restricted_checks;
      const double c = column_norm(op, eta);
      rep.max_restricted_norm = std::max(rep.max_restricted_norm, c);
      if (c > tol) {
        ++rep.restricted_violations;
        if (!rep.counterexample) rep.counterexample = eta;
      }
    }
    const double c = column_norm(full, eta);
    rep.max_unrestricted_norm = c;
    if (c > tol) {
      ++rep.nonzero;
      if (z.contains(eta)) {
        ++rep.nonzero_in_Z;
      } else {
        ++rep.exceptions;
        if (!rep.counterexample) rep.counterexample = eta;
      }
    }
  });
  CancellationReport total;
  for (const auto& r : part) {
    total.samples += r.samples;
    total.restricted_checks += r.restricted_checks;
    total.restricted_violations += r.restricted_violations;
    total.max_restricted_norm = std::max(total.max_restricted_norm, r.max_restricted_norm);
    total.nonzero += r.nonzero;
    total.nonzero_in_Z += r.nonzero_in_Z;
    total.exceptions += r.exceptions;
    total.max_unrestricted_norm = std::max(total.max_unrestricted_norm, r.max_unrestricted_norm);
    if (!total.counterexample && r.counterexample) total.counterexample = r.counterexample;
  }
  return total;
}

// omega(X) and omega(X^2) for a class-S operator by Gibbs sampling.
inline Estimate mc_first_moment(const ClassSOperator& x, double mu, std::size_t samples, std::uint64_t seed,
                                int threads) {
  return mc_expectation(GibbsSampler(mu), x.sites(), samples, seed, threads,
                        [&](const OccupationConfig& eta) { return diagonal_value(x, eta); });
}
inline Estimate mc_second_moment(const ClassSOperator& x, double mu, std::size_t samples, std::uint64_t seed,
                                 int threads) {
  return mc_expectation(GibbsSampler(mu), x.sites(), samples, seed, threads,
                        [&](const OccupationConfig& eta) { return diagonal_square(x, eta); });
}

struct ProbabilityRow {
  double mu = 0.0;
  Estimate w;    // omega(P_W)
  Estimate z_s;  // omega(P_{Z_s})
};

struct ProbabilityScaling {
  std::vector<ProbabilityRow> rows;
  double slope_w = 0.0;
  double slope_z = 0.0;
  double predicted_w = 0.0;
  double predicted_z = 0.0;
  // A probability pinned at 1 on every grid point leaves no slope to fit.
  bool w_saturated = false;
  bool z_saturated = false;
};

// omega(P_W), W = {eta : theta_x(eta) < 1 for some x in B(a, n3)}, and omega(P_{Z_s})
// at delta = mu over the grid, with log-log slopes. Empty estimates enter the
// fit at half a count.
inline ProbabilityScaling probability_scalings(int n, int a, const GeometryParams& base, const std::vector<double>& mus,
                                               std::size_t samples, double s_broadening, std::uint64_t seed,
                                               int threads, const ThetaQuadrature& q = {}) {
  ProbabilityScaling out;
  out.predicted_w = 1.0 - base.gamma;
  out.predicted_z = base.n2 * (1.0 - base.gamma);
  std::vector<double> xs, yw, yz;
  out.w_saturated = out.z_saturated = true;
  for (double mu : mus) {
    GeometryParams gp = base;
    gp.delta = mu;
    const ThetaField field = zone_theta_field(n, a, gp, q);
    const ExceptionalSet z(n, a, gp);
    ProbabilityRow row;
    row.mu = mu;
    const GibbsSampler sampler(mu);
    row.w = mc_expectation(sampler, n, samples, seed, threads, [&](const OccupationConfig& eta) {
      for (double t : field.values(eta))
        if (t < 1.0) return 1.0;
      return 0.0;
    });
    row.z_s = mc_expectation(sampler, n, samples, seed + 1, threads, [&](const OccupationConfig& eta) {
      return z.contains_broadened(eta, s_broadening) ? 1.0 : 0.0;
    });
    out.w_saturated = out.w_saturated && row.w.value == 1.0;
    out.z_saturated = out.z_saturated && row.z_s.value == 1.0;
    xs.push_back(mu);
    const double floor = 0.5 / static_cast<double>(samples);
    yw.push_back(std::max(row.w.value, floor));
    yz.push_back(std::max(row.z_s.value, floor));
    out.rows.push_back(row);
  }
  out.slope_w = loglog_slope(xs, yw);
  out.slope_z = loglog_slope(xs, yz);
  return out;
}

}  // namespace bhkam

#endif  // BHKAM_CURRENT_HPP
