#ifndef BHKAM_DYNAMICS_HPP
#define BHKAM_DYNAMICS_HPP

#include <Eigen/Eigenvalues>
#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "bhkam/current.hpp"
#include "bhkam/gibbs.hpp"
#include "bhkam/matrix.hpp"

namespace bhkam {

// Eigendecomposition of a particle-conserving Hamiltonian, one dense block per
// particle-number sector of the basis. The Gibbs state is constant on each
// sector, so it commutes with the truncated dynamics exactly.
class SpectralEvolver {
 public:
  struct Block {
    int particles = 0;
    std::vector<Eigen::Index> index;
    Eigen::VectorXd energies;
    DenseMat vectors;
  };

  explicit SpectralEvolver(const OperatorMatrix& h) : basis_(h.basis) {
    std::map<int, std::vector<Eigen::Index>> sectors;
    for (std::size_t j = 0; j < basis_->dim(); ++j)
      sectors[basis_->config(j).sum()].push_back(static_cast<Eigen::Index>(j));
    sector_of_.assign(basis_->dim(), 0);
    for (auto& [np, idx] : sectors) {
      for (auto i : idx) sector_of_[static_cast<std::size_t>(i)] = static_cast<int>(blocks_.size());
      Block b;
      b.particles = np;
      b.index = std::move(idx);
      blocks_.push_back(std::move(b));
    }
    require_conserving(h.data, "hamiltonian");
    for (auto& b : blocks_) {
      const DenseMat hb = restrict(h.data, b);
      const Eigen::Index d = hb.rows();
      const DenseMat off = hb - DenseMat(hb.diagonal().asDiagonal());
      if (off.cwiseAbs().maxCoeff() == 0.0) {
        // Diagonal block: exact eigenvectors, no rounding from the solver.
        b.energies = hb.diagonal().real();
        b.vectors = DenseMat::Identity(d, d);
        continue;
      }
      if (d > static_cast<Eigen::Index>(kDenseThreshold)) throw CapacityError("sector above dense threshold");
      if (hb.imag().cwiseAbs().maxCoeff() == 0.0) {
        // Real symmetric blocks take the cheaper real solver.
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(hb.real());
        if (es.info() != Eigen::Success) throw CapacityError("eigendecomposition failed");
        b.energies = es.eigenvalues();
        b.vectors = es.eigenvectors().cast<cplx>();
        continue;
      }
      Eigen::SelfAdjointEigenSolver<DenseMat> es(hb);
      if (es.info() != Eigen::Success) throw CapacityError("eigendecomposition failed");
      b.energies = es.eigenvalues();
      b.vectors = es.eigenvectors();
    }
  }

  const std::vector<Block>& blocks() const { return blocks_; }
  const BasisPtr& basis() const { return basis_; }
  std::size_t dim() const { return basis_->dim(); }

  // O in the eigenbasis of one block.
  DenseMat to_eigenbasis(const SparseMat& o, const Block& b) const { return b.vectors.adjoint() * restrict(o, b) * b.vectors; }

  // e^{iHt} O e^{-iHt} as a dense matrix on the basis.
  DenseMat evolve(const SparseMat& o, double t) const {
    require_conserving(o, "observable");
    return assemble(o, [t](double em, double en) { return std::exp(cplx(0.0, (em - en) * t)); });
  }

  // d/dt e^{iHt} O e^{-iHt} from the spectral representation.
  DenseMat derivative(const SparseMat& o, double t) const {
    require_conserving(o, "observable");
    return assemble(o, [t](double em, double en) { return cplx(0.0, em - en) * std::exp(cplx(0.0, (em - en) * t)); });
  }

  // O as eigenbasis blocks, for reuse across times.
  std::vector<DenseMat> transform(const SparseMat& o) const {
    require_conserving(o, "observable");
    std::vector<DenseMat> out;
    for (const auto& b : blocks_) out.push_back(to_eigenbasis(o, b));
    return out;
  }

  // max |d/dt O(t) - J(t)| over matrix elements, evaluated block by block.
  double derivative_residual(const std::vector<DenseMat>& o, const std::vector<DenseMat>& j, double t) const {
    double worst = 0.0;
    for (std::size_t k = 0; k < blocks_.size(); ++k) {
      const auto& b = blocks_[k];
      DenseMat m = o[k];
      for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
          const double om = b.energies(r) - b.energies(c);
          m(r, c) = (cplx(0.0, om) * o[k](r, c) - j[k](r, c)) * std::exp(cplx(0.0, om * t));
        }
      worst = std::max(worst, (b.vectors * m * b.vectors.adjoint()).cwiseAbs().maxCoeff());
    }
    return worst;
  }

  // max |U^dagger U - I| over the blocks, U = e^{-iHt}.
  double unitarity_defect(double t) const {
    double worst = 0.0;
    for (const auto& b : blocks_) {
      const Eigen::Index d = b.energies.size();
      Eigen::VectorXcd phase(d);
      for (Eigen::Index i = 0; i < d; ++i) phase(i) = std::exp(cplx(0.0, -b.energies(i) * t));
      const DenseMat u = b.vectors * phase.asDiagonal() * b.vectors.adjoint();
      worst = std::max(worst, (u.adjoint() * u - DenseMat::Identity(d, d)).cwiseAbs().maxCoeff());
    }
    return worst;
  }

  // Sector weights e^{-mu N} / Z of the truncated Gibbs state.
  std::vector<double> gibbs_weights(double mu) const {
    double z = 0.0;
    std::vector<double> w;
    for (const auto& b : blocks_) {
      w.push_back(std::exp(-mu * b.particles));
      z += static_cast<double>(b.index.size()) * w.back();
    }
    for (auto& x : w) x /= z;
    return w;
  }

  // omega(O) on the truncated space.
  double expectation(const SparseMat& o, double mu) const {
    const auto w = gibbs_weights(mu);
    cplx acc = 0.0;
    for (std::size_t k = 0; k < blocks_.size(); ++k) {
      const DenseMat ob = to_eigenbasis(o, blocks_[k]);
      acc += w[k] * ob.trace();
    }
    return acc.real();
  }

  // omega((O(t) - O(0))^2) for self-adjoint O.
  double drift(const SparseMat& o, double mu, double t) const {
    return spectral_sum(o, mu, [t](double om) { return 2.0 * (1.0 - std::cos(om * t)); });
  }

  // (1/T) int_0^T omega((O(t) - O(0))^2) dt, exactly.
  double drift_time_average(const SparseMat& o, double mu, double horizon) const {
    return spectral_sum(o, mu, [horizon](double om) {
      const double x = om * horizon;
      return std::abs(x) < 1e-8 ? x * x / 3.0 : 2.0 * (1.0 - std::sin(x) / x);
    });
  }

  // omega(O^2) for self-adjoint O.
  double second_moment(const SparseMat& o, double mu) const {
    return spectral_sum(o, mu, [](double) { return 1.0; });
  }

 private:
  DenseMat restrict(const SparseMat& o, const Block& b) const {
    const Eigen::Index d = static_cast<Eigen::Index>(b.index.size());
    DenseMat out = DenseMat::Zero(d, d);
    std::map<Eigen::Index, Eigen::Index> local;
    for (Eigen::Index i = 0; i < d; ++i) local[b.index[static_cast<std::size_t>(i)]] = i;
    for (Eigen::Index j = 0; j < d; ++j) {
      const Eigen::Index col = b.index[static_cast<std::size_t>(j)];
      for (SparseMat::InnerIterator it(o, col); it; ++it) out(local.at(it.row()), j) = it.value();
    }
    return out;
  }

  void require_conserving(const SparseMat& o, const char* what) const {
    for (int k = 0; k < o.outerSize(); ++k)
      for (SparseMat::InnerIterator it(o, k); it; ++it)
        if (it.value() != cplx(0.0) &&
            sector_of_[static_cast<std::size_t>(it.row())] != sector_of_[static_cast<std::size_t>(it.col())])
          throw ConfigError(std::string(what) + " does not conserve particle number");
  }

  DenseMat assemble(const SparseMat& o, const std::function<cplx(double, double)>& phase) const {
    if (dim() > kDenseThreshold) throw CapacityError("dense evolution above threshold");
    DenseMat out = DenseMat::Zero(static_cast<Eigen::Index>(dim()), static_cast<Eigen::Index>(dim()));
    for (const auto& b : blocks_) {
      DenseMat ob = to_eigenbasis(o, b);
      for (Eigen::Index m = 0; m < ob.rows(); ++m)
        for (Eigen::Index n = 0; n < ob.cols(); ++n) ob(m, n) *= phase(b.energies(m), b.energies(n));
      const DenseMat back = b.vectors * ob * b.vectors.adjoint();
      for (Eigen::Index i = 0; i < back.rows(); ++i)
        for (Eigen::Index j = 0; j < back.cols(); ++j)
          out(b.index[static_cast<std::size_t>(i)], b.index[static_cast<std::size_t>(j)]) = back(i, j);
    }
    return out;
  }

  // sum_B w_B sum_{m,n in B} |O~_mn|^2 f(E_m - E_n).
  double spectral_sum(const SparseMat& o, double mu, const std::function<double(double)>& f) const {
    require_conserving(o, "observable");
    const auto w = gibbs_weights(mu);
    double acc = 0.0;
    for (std::size_t k = 0; k < blocks_.size(); ++k) {
      const auto& b = blocks_[k];
      const DenseMat ob = to_eigenbasis(o, b);
      double s = 0.0;
      for (Eigen::Index m = 0; m < ob.rows(); ++m)
        for (Eigen::Index n = 0; n < ob.cols(); ++n) {
          const double mag = std::norm(ob(m, n));
          if (mag != 0.0) s += mag * f(b.energies(m) - b.energies(n));
        }
      acc += w[k] * s;
    }
    return acc;
  }

  BasisPtr basis_;
  std::vector<Block> blocks_;
  std::vector<int> sector_of_;
};

// e^{iHt} O e^{-iHt}.
inline OperatorMatrix evolve_heisenberg(const OperatorMatrix& o, const OperatorMatrix& h, double t) {
  SpectralEvolver ev(h);
  OperatorMatrix out;
  out.basis = o.basis;
  out.data = ev.evolve(o.data, t).sparseView();
  out.symmetry = o.symmetry;
  return out;
}

enum class ExpectationMode { exact_diagonal, truncated_trace, mc };

struct ExpectationOptions {
  std::size_t samples = 100000;
  std::uint64_t seed = 1;
  int threads = 1;
};

// Largest per-site occupation of the basis when it is a full box, -1 otherwise.
inline int box_cap(const ConfigBasis& basis) {
  int cap = 0;
  for (std::size_t j = 0; j < basis.dim(); ++j) cap = std::max(cap, basis.config(j).max_entry());
  return std::pow(cap + 1.0, basis.sites()) == static_cast<double>(basis.dim()) ? cap : -1;
}

inline bool is_diagonal(const SparseMat& o) {
  for (int k = 0; k < o.outerSize(); ++k)
    for (SparseMat::InnerIterator it(o, k); it; ++it)
      if (it.row() != it.col() && it.value() != cplx(0.0)) return false;
  return true;
}

// Gibbs average on the basis. exact_diagonal weighs the box with the
// per-site closed-form law, truncated_trace forms Tr e^{-mu N} O / Tr e^{-mu N},
// mc samples the per-site law capped at the box.
inline Estimate expectation(const OperatorMatrix& o, double mu, ExpectationMode mode, const ExpectationOptions& opt = {}) {
  const auto& basis = *o.basis;
  Estimate e;
  if (mode == ExpectationMode::truncated_trace) {
    e.value = truncated_trace_expectation(o.data, basis, mu).real();
    return e;
  }
  if (!is_diagonal(o.data)) throw ConfigError("non-diagonal observable requires truncated-trace mode");
  const int cap = box_cap(basis);
  if (cap < 0) throw ConfigError("diagonal modes require a full box basis");
  const GibbsSampler g(mu, cap);
  if (mode == ExpectationMode::exact_diagonal) {
    double acc = 0.0;
    for (std::size_t j = 0; j < basis.dim(); ++j) {
      double w = 1.0;
      for (int x = 0; x < basis.sites(); ++x) w *= g.site_probability(basis.config(j)[x]);
      acc += w * o.element(j, j).real();
    }
    e.value = acc;
    return e;
  }
  return mc_expectation(g, basis.sites(), opt.samples, opt.seed, opt.threads, [&](const OccupationConfig& eta) {
    const long j = basis.index_of(eta);
    return o.element(static_cast<std::size_t>(j), static_cast<std::size_t>(j)).real();
  });
}

// Matrix-valued adaptive Simpson quadrature of f over [a, b] with absolute
// elementwise tolerance tol.
inline DenseMat adaptive_simpson(const std::function<DenseMat(double)>& f, double a, double b, double tol,
                                 int max_depth = 40) {
  std::function<DenseMat(double, double, const DenseMat&, const DenseMat&, const DenseMat&, const DenseMat&, double, int)>
      rec = [&](double lo, double hi, const DenseMat& flo, const DenseMat& fmid, const DenseMat& fhi,
                const DenseMat& whole, double eps, int depth) -> DenseMat {
    const double mid = 0.5 * (lo + hi);
    const DenseMat fl = f(0.5 * (lo + mid));
    const DenseMat fr = f(0.5 * (mid + hi));
    const DenseMat left = (mid - lo) / 6.0 * (flo + 4.0 * fl + fmid);
    const DenseMat right = (hi - mid) / 6.0 * (fmid + 4.0 * fr + fhi);
    const DenseMat delta = left + right - whole;
    if (depth >= max_depth || delta.cwiseAbs().maxCoeff() <= 15.0 * eps) return left + right + delta / 15.0;
    return rec(lo, mid, flo, fl, fmid, left, eps / 2.0, depth + 1) + rec(mid, hi, fmid, fr, fhi, right, eps / 2.0, depth + 1);
  };
  const DenseMat fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  const DenseMat whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return rec(a, b, fa, fm, fb, whole, tol, 0);
}

struct ExperimentRow {
  double t = 0.0;
  double mu = 0.0;
  double g = 0.0;
  std::string observable;
  double value = 0.0;
  double stderr_ = 0.0;
  std::size_t n_samples = 0;
};

struct ExperimentResult {
  std::vector<ExperimentRow> rows;
  // Gibbs weight above the occupation cap, per mu.
  std::map<double, double> cap_weight;
  std::size_t truncation_loss = 0;

  double max_of(const std::string& observable) const {
    double m = 0.0;
    for (const auto& r : rows)
      if (r.observable == observable) m = std::max(m, std::abs(r.value));
    return m;
  }
};

struct NekhoroshevConfig {
  int sites = 4;
  int n_max = 6;
  // H_I = H_{>a1} - H_{>a2}: the energy on sites a1+1 .. a2.
  int a1 = 0;
  int a2 = 2;
  double g = 0.1;
  std::vector<double> mus{0.5};
  std::vector<double> times{0.0, 10.0, 50.0};
  double horizon = 100.0;
};

// Rows per (mu, t): the energy drift omega((H_I(t) - H_I(0))^2), the residual
// of d/dt H_I = J_{a1} - J_{a2}, and the exact time average of the drift over [0, horizon].
inline ExperimentResult nekhoroshev_experiment(const NekhoroshevConfig& c) {
  ModelParams p;
  p.g = c.g;
  auto basis = ConfigBasis::box(TruncatedFockSpace(ChainGeometry(c.sites), c.n_max));
  const auto h = build_bose_hubbard(p, basis);
  const SpectralEvolver ev(h);
  const SparseMat hi = build_right_energy(p, basis, c.a1).data - build_right_energy(p, basis, c.a2).data;
  const SparseMat j = physical_current(p, basis, c.a1).data - physical_current(p, basis, c.a2).data;
  const auto hi_blocks = ev.transform(hi);
  const auto j_blocks = ev.transform(j);
  ExperimentResult out;
  out.truncation_loss = h.truncation_loss;
  for (double mu : c.mus) {
    out.cap_weight[mu] = GibbsSampler(mu, c.n_max).cap_weight();
    for (double t : c.times) {
      out.rows.push_back({t, mu, c.g, "energy_drift", ev.drift(hi, mu, t), 0.0});
      out.rows.push_back({t, mu, c.g, "sum_rule_residual", ev.derivative_residual(hi_blocks, j_blocks, t), 0.0});
    }
    out.rows.push_back({c.horizon, mu, c.g, "energy_drift_time_average", ev.drift_time_average(hi, mu, c.horizon), 0.0});
  }
  return out;
}

struct IntegratedCurrentConfig {
  int sites = 3;
  // Particle-sector basis sum(eta) <= n_total.
  int n_total = 6;
  int a = 0;
  int n0 = 1;
  int n1 = 1;
  ModelParams model;
  GeometryParams geometry;
  std::vector<double> times{0.0, 1.0, 5.0, 20.0};
  double quadrature_tol = 1e-8;
};

// With time generated by the reduced Hamiltonian h, checks
// int_0^t j_a = u_a(t) - u_a(0) + mu^{n0+1} int_0^t g_a on the basis, and
// reports omega((U_a(t) - U_a(0))^2) against 4 omega(U_a^2) for U_a = mu^{-2} u_a.
inline ExperimentResult integrated_current_experiment(const IntegratedCurrentConfig& c) {
  const auto& mp = c.model;
  KamState s(c.sites, c.n1, mp);
  GeometryParams gp = c.geometry;
  gp.delta = mp.delta;
  gp.gamma = mp.gamma;
  SplitWeightField w(zone_theta_field(c.sites, c.a, gp));
  auto basis = ConfigBasis::particle_sector(c.sites, c.n_total);
  DecompositionOptions opt;
  opt.n0 = c.n0;
  opt.n2 = gp.n2;
  opt.n3 = gp.n3;
  opt.r = gp.r;
  const auto dec = build_decomposition(s, w, basis, opt);
  const SpectralEvolver ev(build_reduced_hamiltonian(mp, basis));
  const double scale = std::pow(mp.mu, c.n0 + 1);
  const SparseMat integrand = dec.j_hat.data - dec.g_hat.data * cplx(scale, 0.0);
  const DenseMat u0 = DenseMat(dec.u_hat.data);
  const double rescale = std::pow(mp.mu, -4.0);
  ExperimentResult out;
  out.truncation_loss = dec.truncation_loss;
  out.rows.push_back({0.0, mp.mu, mp.g, "decomposition_residual", dec.identity_residual, 0.0});
  const double bound = 4.0 * rescale * ev.second_moment(dec.u_hat.data, mp.mu);
  for (double t : c.times) {
    double res = 0.0;
    if (t > 0.0) {
      const DenseMat lhs = adaptive_simpson([&](double x) { return ev.evolve(integrand, x); }, 0.0, t, c.quadrature_tol);
      res = max_abs(DenseMat(lhs - (ev.evolve(dec.u_hat.data, t) - u0)));
    }
    out.rows.push_back({t, mp.mu, mp.g, "integrated_identity_residual", res, 0.0});
    out.rows.push_back({t, mp.mu, mp.g, "boundary_term", rescale * ev.drift(dec.u_hat.data, mp.mu, t), 0.0});
    out.rows.push_back({t, mp.mu, mp.g, "boundary_bound", bound, 0.0});
  }
  return out;
}

}  // namespace bhkam

#endif  // BHKAM_DYNAMICS_HPP
