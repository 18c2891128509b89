#ifndef BHKAM_KAM_HPP
#define BHKAM_KAM_HPP

#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "bhkam/parallel.hpp"
#include "bhkam/random_ops.hpp"
#include "bhkam/series.hpp"

namespace bhkam {

using PartitionTuple = std::vector<int>;

// All k-tuples (j_1..j_k) of non-negative integers with sum_l l j_l = k.
inline std::vector<PartitionTuple> partitions(int k) {
  if (k < 1) throw ConfigError("partitions need k >= 1");
  std::vector<PartitionTuple> out;
  PartitionTuple j(static_cast<std::size_t>(k), 0);
  // Fill from the largest part down so the first tuple is (k, 0, ..., 0).
  std::function<void(int, int)> rec = [&](int l, int left) {
    if (l == 0) {
      if (left == 0) out.push_back(j);
      return;
    }
    for (int c = left / l; c >= 0; --c) {
      j[static_cast<std::size_t>(l - 1)] = c;
      rec(l - 1, left - c * l);
    }
    j[static_cast<std::size_t>(l - 1)] = 0;
  };
  rec(k, k);
  std::sort(out.begin(), out.end(), std::greater<>());
  return out;
}

inline double factorial(int n) {
  double f = 1.0;
  for (int i = 2; i <= n; ++i) f *= i;
  return f;
}

// Generators u^(1..n1) and resonant coefficients h~^(0..n1) of the recursive
// normal form. Coefficients of h~ keep the origin tag of the local term
// h~_x they belong to.
class KamState {
 public:
  KamState(int sites, int n1, const ModelParams& params, AlgebraOptions opt = {})
      : sites_(sites), n1_(n1), params_(params), opt_(opt) {
    if (n1 < 0) throw ConfigError("n1 must be >= 0");
    d_ = reduced_d(sites, params);
    v_ = reduced_v(sites, params);
    u_.assign(static_cast<std::size_t>(n1 + 1), ClassSOperator(sites));
    htilde_.assign(static_cast<std::size_t>(n1 + 1), ClassSOperator(sites));
    htilde_[0] = d_;
    for (int k = 1; k <= n1; ++k) {
      try {
        const ClassSOperator x = (apply_S(k - 1, d_) + apply_Q(k - 1, v_)).normalized();
        u_[static_cast<std::size_t>(k)] = kam_solve(x, params_).without_origin();
        u_[static_cast<std::size_t>(k)].set_symmetry(Symmetry::antihermitian);
        htilde_[static_cast<std::size_t>(k)] = resonant_part(x, params_);
        htilde_[static_cast<std::size_t>(k)].set_symmetry(Symmetry::hermitian);
      } catch (const RangeCapError&) {
        throw RangeCapError("range cap " + std::to_string(opt_.range_cap) + " exceeded at order k=" + std::to_string(k), k);
      }
    }
  }

  int sites() const { return sites_; }
  int order() const { return n1_; }
  const ModelParams& params() const { return params_; }
  const AlgebraOptions& options() const { return opt_; }
  const ClassSOperator& d() const { return d_; }
  const ClassSOperator& v() const { return v_; }
  const ClassSOperator& u(int k) const { return u_.at(static_cast<std::size_t>(k)); }
  const ClassSOperator& htilde(int k) const { return htilde_.at(static_cast<std::size_t>(k)); }

  // h~ as a formal series of order n1.
  FormalSeries htilde_series() const { return FormalSeries(htilde_); }

  // Local term h~_x as a series.
  FormalSeries htilde_local(int x) const {
    std::vector<ClassSOperator> c;
    for (const auto& h : htilde_) c.push_back(h.origin_part(x));
    return FormalSeries(std::move(c));
  }

  // Memoized ad_{u^(i)} X.
  const ClassSOperator& ad(int i, const ClassSOperator& x) const {
    const auto key = std::make_pair(i, x.id());
    auto it = ad_cache_.find(key);
    if (it != ad_cache_.end()) return it->second;
    ClassSOperator r;
    try {
      r = commutator(u(i), x, opt_);
    } catch (const RangeCapError&) {
      throw RangeCapError("range cap " + std::to_string(opt_.range_cap) + " exceeded applying ad u^(" +
                              std::to_string(i) + ")", i);
    }
    return ad_cache_.emplace(key, std::move(r)).first->second;
  }

  // Nested ad's applied in the given order: first element acts first.
  ClassSOperator nested(const std::vector<std::pair<int, int>>& sequence, const ClassSOperator& f) const {
    const ClassSOperator* cur = &f;
    for (const auto& [gen, power] : sequence)
      for (int p = 0; p < power; ++p) {
        cur = &ad(gen, *cur);
        if (cur->empty()) return ClassSOperator(sites_);
      }
    return *cur;
  }

  // Q^(k) f = sum_{j in pi(k)} 1/prod j! ad_{u_k}^{j_k} ... ad_{u_1}^{j_1} f.
  ClassSOperator apply_Q(int k, const ClassSOperator& f) const {
    if (k == 0) return f;
    return partition_sum(partitions(k), k, f, false, false);
  }

  // R^(k) f = sum_{j in pi(k)} (-1)^{|j|}/prod j! ad_{u_1}^{j_1} ... ad_{u_k}^{j_k} f.
  ClassSOperator apply_R(int k, const ClassSOperator& f) const {
    if (k == 0) return f;
    return partition_sum(partitions(k), k, f, true, true);
  }

  // S^(k) f: tuples of pi(k+1) with j_{k+1} = 0, ordered as in Q.
  ClassSOperator apply_S(int k, const ClassSOperator& f) const {
    if (k == 0) return ClassSOperator(f.sites());
    std::vector<PartitionTuple> tuples;
    for (auto j : partitions(k + 1))
      if (j.back() == 0) {
        j.pop_back();
        tuples.push_back(j);
      }
    return partition_sum(tuples, k, f, false, false);
  }

  // (R f)_m = sum_{i+j=m} R^(i) f^(j), truncated at order l.
  FormalSeries apply_R_series(const FormalSeries& f, int l) const {
    FormalSeries out(sites_, l);
    for (int m = 0; m <= l; ++m) {
      ClassSOperator acc(sites_);
      for (int j = 0; j <= std::min(m, f.order()); ++j) {
        const int i = m - j;
        if (i > n1_ || f[j].empty()) continue;
        acc = acc + apply_R(i, f[j]);
      }
      out[m] = acc.normalized();
    }
    return out;
  }

  FormalSeries apply_Q_series(const FormalSeries& f, int l) const {
    FormalSeries out(sites_, l);
    for (int m = 0; m <= l; ++m) {
      ClassSOperator acc(sites_);
      for (int j = 0; j <= std::min(m, f.order()); ++j) {
        const int i = m - j;
        if (i > n1_ || f[j].empty()) continue;
        acc = acc + apply_Q(i, f[j]);
      }
      out[m] = acc.normalized();
    }
    return out;
  }

  // Number of stored local pieces per order, as a proxy for the term counts
  // of the expansion.
  std::vector<std::size_t> htilde_piece_counts() const {
    std::vector<std::size_t> c;
    for (const auto& h : htilde_) c.push_back(h.pieces().size());
    return c;
  }

 private:
  ClassSOperator partition_sum(const std::vector<PartitionTuple>& tuples, int k, const ClassSOperator& f, bool reversed,
                               bool signed_terms) const {
    ClassSOperator acc(f.sites());
    for (const auto& j : tuples) {
      std::vector<std::pair<int, int>> seq;
      double denom = 1.0;
      int total = 0;
      for (int l = 1; l <= static_cast<int>(j.size()); ++l) {
        const int p = j[static_cast<std::size_t>(l - 1)];
        denom *= factorial(p);
        total += p;
        if (p > 0) seq.emplace_back(l, p);
      }
      if (reversed) std::reverse(seq.begin(), seq.end());
      const ClassSOperator term = nested(seq, f);
      if (term.empty()) continue;
      double c = 1.0 / denom;
      if (signed_terms && total % 2 == 1) c = -c;
      acc = acc + term.scaled(c);
    }
    (void)k;
    return acc.normalized();
  }

  int sites_;
  int n1_;
  ModelParams params_;
  AlgebraOptions opt_;
  ClassSOperator d_, v_;
  std::vector<ClassSOperator> u_;
  std::vector<ClassSOperator> htilde_;
  mutable std::map<std::pair<int, std::uint64_t>, ClassSOperator> ad_cache_;
};

inline KamState build_kam(int sites, int n1, const ModelParams& params, AlgebraOptions opt = {}) {
  return KamState(sites, n1, params, opt);
}

struct CheckReport {
  std::string check;
  double max_violation = 0.0;
  double tolerance = 0.0;
  OccupationConfig row_config;
  OccupationConfig col_config;
  bool passed() const { return max_violation <= tolerance; }
};

inline CheckReport make_report(std::string name, const SparseMat& diff, const BasisPtr& basis, double tol) {
  CheckReport r;
  r.check = std::move(name);
  r.tolerance = tol;
  const auto loc = max_abs_on(diff, full_mask(*basis));
  r.max_violation = loc.value;
  if (loc.row >= 0) {
    r.row_config = basis->config(static_cast<std::size_t>(loc.row));
    r.col_config = basis->config(static_cast<std::size_t>(loc.col));
  }
  return r;
}

// Coefficient k of T_{n1}(R h~) against (d, v, 0, ...).
inline std::vector<CheckReport> verify_prop1_expansion(const KamState& s, const BasisPtr& basis, double tol) {
  const int n1 = s.order();
  const FormalSeries rh = s.apply_R_series(s.htilde_series(), n1);
  const SparseMat dm = to_matrix(s.d(), basis).data;
  const SparseMat vm = to_matrix(s.v(), basis).data;
  std::vector<CheckReport> out;
  for (int k = 0; k <= n1; ++k) {
    SparseMat diff = to_matrix(rh[k], basis).data;
    if (k == 0) diff -= dm;
    if (k == 1) diff -= vm;
    out.push_back(make_report("expansion order " + std::to_string(k), diff, basis, tol));
  }
  return out;
}

// ad_h T(R f) = T(R ad_h~ f) + mu^{n1+1} ad_v sum_k R^(n1-k) f^(k), compared
// coefficientwise with matrix commutators on a particle sector.
inline std::vector<CheckReport> verify_prop1_commutator(const KamState& s, const FormalSeries& f, const BasisPtr& basis,
                                                        double tol) {
  const int n1 = s.order();
  const FormalSeries rf = s.apply_R_series(f.truncated(n1), n1);
  const FormalSeries adf = series_commutator(s.htilde_series(), f.truncated(n1), n1, s.options());
  const FormalSeries radf = s.apply_R_series(adf, n1);
  ClassSOperator rem(s.sites());
  for (int k = 0; k <= std::min(n1, f.order()); ++k) rem = rem + s.apply_R(n1 - k, f[k]);
  const SparseMat dm = to_matrix(s.d(), basis).data;
  const SparseMat vm = to_matrix(s.v(), basis).data;
  std::vector<SparseMat> rfm;
  for (int m = 0; m <= n1; ++m) rfm.push_back(to_matrix(rf[m], basis).data);
  std::vector<CheckReport> out;
  for (int m = 0; m <= n1 + 1; ++m) {
    SparseMat lhs(static_cast<Eigen::Index>(basis->dim()), static_cast<Eigen::Index>(basis->dim()));
    if (m <= n1) lhs += commutator(dm, rfm[static_cast<std::size_t>(m)]);
    if (m >= 1) lhs += commutator(vm, rfm[static_cast<std::size_t>(m - 1)]);
    SparseMat rhs = m <= n1 ? to_matrix(radf[m], basis).data
                            : commutator(vm, to_matrix(rem.normalized(), basis).data);
    out.push_back(make_report("commutator identity order " + std::to_string(m), SparseMat(lhs - rhs), basis, tol));
  }
  return out;
}

// T(R T(Q f)) - f, coefficientwise.
inline std::vector<CheckReport> verify_formal_inverse(const KamState& s, const FormalSeries& f, const BasisPtr& basis,
                                                      double tol) {
  const int n1 = s.order();
  const FormalSeries qf = s.apply_Q_series(f.truncated(n1), n1);
  const FormalSeries rqf = s.apply_R_series(qf, n1);
  std::vector<CheckReport> out;
  for (int k = 0; k <= n1; ++k) {
    SparseMat diff = to_matrix(rqf[k], basis).data;
    if (k <= f.order()) diff -= to_matrix(f[k], basis).data;
    out.push_back(make_report("formal inverse order " + std::to_string(k), diff, basis, tol));
  }
  return out;
}

inline std::vector<CheckReport> verify_adjointness(const KamState& s, const BasisPtr& basis, double tol) {
  std::vector<CheckReport> out;
  for (int k = 1; k <= s.order(); ++k) {
    const SparseMat u = to_matrix(s.u(k), basis).data;
    out.push_back(make_report("u(" + std::to_string(k) + ") skew", SparseMat(u + SparseMat(u.adjoint())), basis, tol));
  }
  for (int k = 0; k <= s.order(); ++k) {
    const SparseMat h = to_matrix(s.htilde(k), basis).data;
    out.push_back(make_report("htilde(" + std::to_string(k) + ") self-adjoint", SparseMat(h - SparseMat(h.adjoint())),
                              basis, tol));
  }
  return out;
}

struct HomologicalReport {
  std::size_t operators = 0;
  std::size_t violations = 0;
  CheckReport worst;
  // Stream index of the worst operator, for replay with random_class_s.
  std::size_t worst_index = 0;
  bool passed() const { return violations == 0; }
};

// ad_d u - (f - R f) for `count` random class S operators f with u = kam_solve(f),
// measured with matrix commutators on configurations at least `margin` below the cap.
inline HomologicalReport verify_homological_random(int sites, int n_max, const ModelParams& p, std::size_t count,
                                                   std::uint64_t seed, int threads, double tol, int margin = 1) {
  auto basis = ConfigBasis::box(TruncatedFockSpace(ChainGeometry(sites), n_max));
  const auto mask = buffered_mask(*basis, n_max, margin);
  const SparseMat dm = to_matrix(reduced_d(sites, p), basis).data;
  std::vector<CheckReport> out(count);
  parallel_for(count, threads, [&](std::size_t i) {
    auto rng = stream_rng(seed, i);
    const auto f = random_class_s(rng, sites, p);
    const auto u = kam_solve(f, p);
    const SparseMat lhs = commutator(dm, to_matrix(u, basis).data);
    const SparseMat rhs = to_matrix(f, basis).data - to_matrix(resonant_part(f, p), basis).data;
    const auto loc = max_abs_on(SparseMat(lhs - rhs), mask);
    auto& r = out[i];
    r.check = "homological identity";
    r.tolerance = tol;
    r.max_violation = loc.value;
    if (loc.row >= 0) {
      r.row_config = basis->config(static_cast<std::size_t>(loc.row));
      r.col_config = basis->config(static_cast<std::size_t>(loc.col));
    }
  });
  HomologicalReport rep;
  rep.operators = count;
  rep.worst.check = "homological identity";
  rep.worst.tolerance = tol;
  for (std::size_t i = 0; i < count; ++i) {
    if (!out[i].passed()) ++rep.violations;
    if (i == 0 || out[i].max_violation > rep.worst.max_violation) {
      rep.worst = out[i];
      rep.worst_index = i;
    }
  }
  return rep;
}

// max |c_rho(eta) / A_rho(eta)| over eta in [lo, hi]^N (grid step `step`).
inline double coefficient_magnitude(const ClassSOperator& f, double delta, int lo, int hi, int step = 1) {
  const int n = f.sites();
  double best = 0.0;
  const auto moves = f.moves();
  SiteVector eta(n);
  for (int x = 0; x < n; ++x) eta[x] = lo;
  while (true) {
    for (const auto& rho : moves) {
      const double a = rho.is_zero() ? 1.0 : monomial_amplitude(rho, eta, delta);
      if (a == 0.0) continue;
      best = std::max(best, std::abs(f.coefficient(rho, eta)) / a);
    }
    int x = 0;
    while (x < n && eta[x] + step > hi) eta[x++] = lo;
    if (x == n) break;
    eta[x] += step;
  }
  return best;
}

// Least-squares slope of log y against log x.
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double lx = std::log(x[i]), ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

struct ScalingRow {
  int k = 0;
  double delta = 0.0;
  double htilde_magnitude = 0.0;
  double u_magnitude = 0.0;
  int htilde_range = 0;
  int u_range = 0;
  int htilde_degree = 0;
  std::size_t htilde_pieces = 0;
};

struct ScalingTable {
  std::vector<ScalingRow> rows;
  // Fitted exponents per order k (index k), and the predicted ones.
  std::vector<double> htilde_slope, u_slope, htilde_predicted, u_predicted;
};

// Typical-window magnitudes of h~^(k) and u^(k) over a delta grid, with the
// window eta_x in [0.5/delta, 2/delta].
inline ScalingTable measure_scalings(int sites, int n1, const ModelParams& base, const std::vector<double>& deltas,
                                     int grid_points = 24) {
  ScalingTable t;
  std::vector<std::vector<double>> hm(static_cast<std::size_t>(n1 + 1)), um(static_cast<std::size_t>(n1 + 1));
  for (double delta : deltas) {
    ModelParams p = base;
    p.delta = delta;
    KamState s(sites, n1, p);
    const int lo = static_cast<int>(std::ceil(0.5 / delta));
    const int hi = static_cast<int>(std::floor(2.0 / delta));
    const int step = std::max(1, (hi - lo) / grid_points);
    for (int k = 1; k <= n1; ++k) {
      ScalingRow r;
      r.k = k;
      r.delta = delta;
      r.htilde_magnitude = coefficient_magnitude(s.htilde(k), delta, lo, hi, step);
      r.u_magnitude = coefficient_magnitude(s.u(k), delta, lo, hi, 1);
      r.htilde_range = s.htilde(k).range();
      r.u_range = s.u(k).range();
      r.htilde_degree = s.htilde(k).max_degree();
      r.htilde_pieces = s.htilde(k).pieces().size();
      hm[static_cast<std::size_t>(k)].push_back(r.htilde_magnitude);
      um[static_cast<std::size_t>(k)].push_back(r.u_magnitude);
      t.rows.push_back(r);
    }
  }
  const double gp = base.gamma_prime();
  t.htilde_slope.assign(static_cast<std::size_t>(n1 + 1), 0.0);
  t.u_slope.assign(static_cast<std::size_t>(n1 + 1), 0.0);
  t.htilde_predicted.assign(static_cast<std::size_t>(n1 + 1), 0.0);
  t.u_predicted.assign(static_cast<std::size_t>(n1 + 1), 0.0);
  for (int k = 1; k <= n1; ++k) {
    t.htilde_slope[static_cast<std::size_t>(k)] = loglog_slope(deltas, hm[static_cast<std::size_t>(k)]);
    t.u_slope[static_cast<std::size_t>(k)] = loglog_slope(deltas, um[static_cast<std::size_t>(k)]);
    t.htilde_predicted[static_cast<std::size_t>(k)] = -2.0 * (k - 1) * gp;
    t.u_predicted[static_cast<std::size_t>(k)] = -2.0 * k * gp - base.gamma;
  }
  return t;
}

}  // namespace bhkam

#endif  // BHKAM_KAM_HPP
