#ifndef BHKAM_CLASS_S_HPP
#define BHKAM_CLASS_S_HPP

#include <atomic>
#include <cmath>
#include <map>
#include <set>
#include <tuple>
#include <vector>

#include "bhkam/cutoff.hpp"
#include "bhkam/diagonal.hpp"
#include "bhkam/matrix.hpp"
#include "bhkam/moves.hpp"

namespace bhkam {

// <eta + rho| A_rho |eta> for the normal-ordered monomial
// prod_x (alpha*_x)^{rho_x^+} (alpha_x)^{rho_x^-}, alpha = delta^{1/2} a.
// Vanishes when eta + rho leaves the orthant.
inline double monomial_amplitude(const Move& rho, const OccupationConfig& eta, double delta) {
  double amp = 1.0;
  for (int x = 0; x < rho.size(); ++x) {
    const int k = rho[x];
    if (k == 0) continue;
    const int n = eta[x];
    if (k > 0) {
      for (int j = 1; j <= k; ++j) amp *= std::sqrt(static_cast<double>(n + j));
    } else {
      for (int j = 0; j < -k; ++j) {
        if (n - j <= 0) return 0.0;
        amp *= std::sqrt(static_cast<double>(n - j));
      }
    }
    amp *= std::pow(delta, 0.5 * std::abs(k));
  }
  return amp;
}

// One local contribution to the move-rho component of an operator. coef(eta)
// is the matrix element <eta+rho|piece|eta>; origin tags the local term
// (site x of f_x) it descends from, -1 if untracked.
struct Piece {
  Move rho;
  DiagFn coef;
  Window window;
  int origin = -1;
};

namespace detail {
inline std::uint64_t next_operator_id() {
  static std::atomic<std::uint64_t> counter{1};
  return counter++;
}
}  // namespace detail

struct AlgebraOptions {
  int range_cap = 12;
};

// Operator of class S: f = sum_rho f^(rho), each f^(rho) a sum of local
// pieces with diagonal coefficient functions.
class ClassSOperator {
 public:
  ClassSOperator() : id_(detail::next_operator_id()) {}
  explicit ClassSOperator(int sites) : sites_(sites), id_(detail::next_operator_id()) {}

  int sites() const { return sites_; }
  std::uint64_t id() const { return id_; }
  const std::vector<Piece>& pieces() const { return pieces_; }
  bool empty() const { return pieces_.empty(); }
  Symmetry symmetry() const { return symmetry_; }
  void set_symmetry(Symmetry s) { symmetry_ = s; }

  void add(Piece p) {
    if (p.coef->is_constant() && p.coef->operator()(SiteVector()) == cplx(0.0)) return;
    p.window = hull(hull(p.window, p.coef->window()), Window::of(p.rho));
    pieces_.push_back(std::move(p));
    id_ = detail::next_operator_id();
  }
  void add(const Move& rho, const DiagFn& coef, int origin = -1) { add(Piece{rho, coef, Window(), origin}); }

  // Merge pieces sharing (move, window, origin) into one node.
  ClassSOperator normalized() const {
    using Key = std::tuple<Move, int, int, int>;
    std::map<Key, std::vector<const Piece*>> groups;
    for (const auto& p : pieces_) groups[Key{p.rho, p.window.lo, p.window.hi, p.origin}].push_back(&p);
    ClassSOperator out(sites_);
    out.symmetry_ = symmetry_;
    for (const auto& [key, ps] : groups) {
      if (ps.size() == 1) {
        out.pieces_.push_back(*ps.front());
        continue;
      }
      std::vector<DiagFn> fs;
      for (const auto* p : ps) fs.push_back(p->coef);
      out.pieces_.push_back(Piece{ps.front()->rho, diag_sum(fs), ps.front()->window, ps.front()->origin});
    }
    return out;
  }

  cplx coefficient(const Move& rho, const OccupationConfig& eta) const {
    if (!(eta + rho).non_negative() || !eta.non_negative()) return 0.0;
    cplx c = 0.0;
    for (const auto& p : pieces_)
      if (p.rho == rho) c += (*p.coef)(eta);
    return c;
  }

  std::vector<Move> moves() const {
    std::set<Move> s;
    for (const auto& p : pieces_) s.insert(p.rho);
    return {s.begin(), s.end()};
  }

  // Smallest r with every move in M_r and every piece inside a ball of radius r.
  int range() const {
    int r = 0;
    for (const auto& p : pieces_) r = std::max({r, p.rho.norm_inf(), p.window.width() / 2});
    return r;
  }

  // Largest total degree |rho|_1 of the canonical monomials.
  int max_degree() const {
    int d = 0;
    for (const auto& p : pieces_) d = std::max(d, p.rho.norm1());
    return d;
  }

  ClassSOperator scaled(cplx c) const {
    ClassSOperator out(sites_);
    for (const auto& p : pieces_) out.pieces_.push_back(Piece{p.rho, diag_scaled(p.coef, c), p.window, p.origin});
    if (c.imag() == 0.0) {
      out.symmetry_ = symmetry_;
    } else if (c.real() == 0.0) {
      out.symmetry_ = symmetry_ == Symmetry::hermitian       ? Symmetry::antihermitian
                      : symmetry_ == Symmetry::antihermitian ? Symmetry::hermitian
                                                             : Symmetry::none;
    }
    return out;
  }

  // (f*)_{-rho}(xi) = conj(f_rho(xi - rho)).
  ClassSOperator adjoint() const {
    ClassSOperator out(sites_);
    for (const auto& p : pieces_) {
      const Move back = -p.rho;
      auto node = DiagNode::combination({DiagProduct{1.0, {DiagFactor{p.coef, back, true, true}}}});
      out.pieces_.push_back(Piece{back, node, p.window, p.origin});
    }
    out.symmetry_ = symmetry_;
    return out;
  }

  ClassSOperator with_origin(int x) const {
    ClassSOperator out = *this;
    for (auto& p : out.pieces_) p.origin = x;
    out.id_ = detail::next_operator_id();
    return out;
  }
  ClassSOperator without_origin() const { return with_origin(-1).normalized(); }
  ClassSOperator origin_part(int x) const {
    ClassSOperator out(sites_);
    out.symmetry_ = symmetry_;
    for (const auto& p : pieces_)
      if (p.origin == x) out.pieces_.push_back(p);
    return out;
  }
  // Pieces with origin in [lo, hi].
  ClassSOperator origin_range(int lo, int hi) const {
    ClassSOperator out(sites_);
    out.symmetry_ = symmetry_;
    for (const auto& p : pieces_)
      if (p.origin >= lo && p.origin <= hi) out.pieces_.push_back(p);
    return out;
  }

  friend ClassSOperator operator+(const ClassSOperator& a, const ClassSOperator& b) {
    ClassSOperator out(std::max(a.sites_, b.sites_));
    out.pieces_ = a.pieces_;
    out.pieces_.insert(out.pieces_.end(), b.pieces_.begin(), b.pieces_.end());
    out.symmetry_ = a.empty() ? b.symmetry_ : b.empty() ? a.symmetry_ : a.symmetry_ == b.symmetry_ ? a.symmetry_ : Symmetry::none;
    return out;
  }
  friend ClassSOperator operator-(const ClassSOperator& a, const ClassSOperator& b) { return a + b.scaled(-1.0); }

 private:
  int sites_ = 0;
  std::vector<Piece> pieces_;
  Symmetry symmetry_ = Symmetry::none;
  std::uint64_t id_;
};

inline Symmetry commutator_symmetry(Symmetry a, Symmetry b) {
  if (a == Symmetry::none || b == Symmetry::none) return Symmetry::none;
  return a == b ? Symmetry::antihermitian : Symmetry::hermitian;
}

// [F, G]_sigma(eta) = sum_{rho+rho'=sigma} F_rho(eta+rho') G_rho'(eta) - G_rho'(eta+rho) F_rho(eta).
// Pairs whose windows miss the other move cancel identically and are skipped.
inline ClassSOperator commutator(const ClassSOperator& f, const ClassSOperator& g, const AlgebraOptions& opt = {}) {
  const int n = std::max(f.sites(), g.sites());
  ClassSOperator out(n);
  for (const auto& pf : f.pieces()) {
    for (const auto& pg : g.pieces()) {
      if (!pf.window.touches(pg.rho) && !pg.window.touches(pf.rho)) continue;
      const Move sigma = pf.rho + pg.rho;
      const Window w = hull(pf.window, pg.window);
      if (sigma.norm_inf() > opt.range_cap || w.width() / 2 > opt.range_cap)
        throw RangeCapError("commutator range exceeds cap", -1);
      auto node = DiagNode::combination({
          DiagProduct{1.0, {DiagFactor{pf.coef, pg.rho, false, true}, DiagFactor{pg.coef, Move(), false, true}}},
          DiagProduct{-1.0, {DiagFactor{pg.coef, pf.rho, false, true}, DiagFactor{pf.coef, Move(), false, true}}},
      });
      out.add(Piece{sigma, node, w, pg.origin >= 0 ? pg.origin : pf.origin});
    }
  }
  ClassSOperator res = out.normalized();
  res.set_symmetry(commutator_symmetry(f.symmetry(), g.symmetry()));
  return res;
}

// (FG)_sigma(eta) = sum F_rho(eta+rho') G_rho'(eta).
inline ClassSOperator product(const ClassSOperator& f, const ClassSOperator& g) {
  const int n = std::max(f.sites(), g.sites());
  ClassSOperator out(n);
  for (const auto& pf : f.pieces())
    for (const auto& pg : g.pieces()) {
      auto node = DiagNode::combination(
          {DiagProduct{1.0, {DiagFactor{pf.coef, pg.rho, false, true}, DiagFactor{pg.coef, Move(), false, true}}}});
      out.add(Piece{pf.rho + pg.rho, node, hull(pf.window, pg.window), pg.origin >= 0 ? pg.origin : pf.origin});
    }
  return out.normalized();
}

// F b: coefficients multiplied by b(eta).
inline ClassSOperator multiply_diag_right(const ClassSOperator& f, const DiagFn& b) {
  ClassSOperator out(f.sites());
  for (const auto& p : f.pieces()) out.add(Piece{p.rho, diag_product(p.coef, b), hull(p.window, b->window()), p.origin});
  return out;
}

// b F: coefficients multiplied by b(eta + rho).
inline ClassSOperator multiply_diag_left(const DiagFn& b, const ClassSOperator& f) {
  ClassSOperator out(f.sites());
  for (const auto& p : f.pieces()) {
    auto node = DiagNode::combination(
        {DiagProduct{1.0, {DiagFactor{b, p.rho, false, true}, DiagFactor{p.coef, Move(), false, true}}}});
    out.add(Piece{p.rho, node, hull(p.window, b->window()), p.origin});
  }
  return out;
}

inline DiagFn zeta_fn(const Move& rho, const ModelParams& p) {
  const double s = p.cutoff_scale();
  return DiagNode::leaf(Window::of(rho), [rho, s](const SiteVector& eta) {
    return cplx(bump(static_cast<double>(delta_E(eta, rho)) / s), 0.0);
  }, "zeta");
}

// delta^{-2} (1 - zeta_rho) / Delta_rho E, zero where Delta_rho E = 0.
inline DiagFn kam_weight_fn(const Move& rho, const ModelParams& p) {
  const double s = p.cutoff_scale();
  const double inv_d2 = 1.0 / (p.delta * p.delta);
  return DiagNode::leaf(Window::of(rho), [rho, s, inv_d2](const SiteVector& eta) {
    const int de = delta_E(eta, rho);
    if (de == 0) return cplx(0.0, 0.0);
    const double z = bump(static_cast<double>(de) / s);
    return cplx(inv_d2 * (1.0 - z) / static_cast<double>(de), 0.0);
  }, "kam_weight");
}

// delta^2 Delta_rho E.
inline DiagFn energy_gap_fn(const Move& rho, const ModelParams& p) {
  const double d2 = p.delta * p.delta;
  return DiagNode::leaf(Window::of(rho), [rho, d2](const SiteVector& eta) {
    return cplx(d2 * delta_E(eta, rho), 0.0);
  }, "gap");
}

// R f = sum_rho f^(rho) zeta_rho.
inline ClassSOperator resonant_part(const ClassSOperator& f, const ModelParams& p) {
  ClassSOperator out(f.sites());
  std::map<Move, DiagFn> cache;
  for (const auto& pc : f.pieces()) {
    if (pc.rho.is_zero()) {
      out.add(pc);
      continue;
    }
    auto it = cache.find(pc.rho);
    if (it == cache.end()) it = cache.emplace(pc.rho, zeta_fn(pc.rho, p)).first;
    out.add(Piece{pc.rho, diag_product(pc.coef, it->second), pc.window, pc.origin});
  }
  out.set_symmetry(f.symmetry());
  return out;
}

// Solution u of ad_d u = (Id - R) f.
inline ClassSOperator kam_solve(const ClassSOperator& f, const ModelParams& p) {
  ClassSOperator out(f.sites());
  std::map<Move, DiagFn> cache;
  for (const auto& pc : f.pieces()) {
    if (pc.rho.is_zero()) continue;
    auto it = cache.find(pc.rho);
    if (it == cache.end()) it = cache.emplace(pc.rho, kam_weight_fn(pc.rho, p)).first;
    out.add(Piece{pc.rho, diag_product(pc.coef, it->second), pc.window, pc.origin});
  }
  out.set_symmetry(f.symmetry() == Symmetry::hermitian       ? Symmetry::antihermitian
                   : f.symmetry() == Symmetry::antihermitian ? Symmetry::hermitian
                                                             : Symmetry::none);
  return out;
}

// ad_d f computed directly: coefficients times delta^2 Delta_rho E.
inline ClassSOperator ad_d_direct(const ClassSOperator& f, const ModelParams& p) {
  ClassSOperator out(f.sites());
  for (const auto& pc : f.pieces()) {
    if (pc.rho.is_zero()) continue;
    out.add(Piece{pc.rho, diag_product(pc.coef, energy_gap_fn(pc.rho, p)), pc.window, pc.origin});
  }
  return out;
}

// d = sum_x delta^2 eta_x^2, one piece per site tagged with its origin.
inline ClassSOperator reduced_d(int sites, const ModelParams& p) {
  ClassSOperator d(sites);
  const double d2 = p.delta * p.delta;
  for (int x = 0; x < sites; ++x) {
    d.add(Move(sites), DiagNode::leaf(Window::single(x), [x, d2](const SiteVector& eta) {
      return cplx(d2 * static_cast<double>(eta[x]) * eta[x], 0.0);
    }, "d_x"), x);
  }
  d.set_symmetry(Symmetry::hermitian);
  return d;
}

inline ClassSOperator reduced_d_local(int sites, int x, const ModelParams& p) {
  return reduced_d(sites, p).origin_part(x);
}

// v = g sum_x (alpha*_x alpha_{x+1} + alpha_x alpha*_{x+1}); the last site carries no bond.
inline ClassSOperator reduced_v(int sites, const ModelParams& p) {
  ClassSOperator v(sites);
  for (int x = 0; x + 1 < sites; ++x) {
    for (int sign : {1, -1}) {
      const Move rho = sign * hop(sites, x);
      const double g = p.g;
      const double delta = p.delta;
      v.add(rho, DiagNode::leaf(Window{x, x + 1}, [rho, g, delta](const SiteVector& eta) {
        return cplx(g * monomial_amplitude(rho, eta, delta), 0.0);
      }, "v_x"), x);
    }
  }
  v.set_symmetry(Symmetry::hermitian);
  return v;
}

inline ClassSOperator reduced_v_local(int sites, int x, const ModelParams& p) {
  return reduced_v(sites, p).origin_part(x);
}

// Matrix of f on the basis. Elements whose target lies outside the basis are
// dropped and tallied.
inline OperatorMatrix to_matrix(const ClassSOperator& f, const BasisPtr& basis) {
  std::vector<Triplet> trip;
  std::size_t loss = 0;
  for (std::size_t j = 0; j < basis->dim(); ++j) {
    const auto& eta = basis->config(j);
    for (const auto& p : f.pieces()) {
      const SiteVector target = eta + p.rho;
      if (!target.non_negative()) continue;
      const long i = basis->index_of(target);
      const cplx value = (*p.coef)(eta);
      if (value == cplx(0.0)) continue;
      if (i < 0) {
        ++loss;
        continue;
      }
      trip.emplace_back(static_cast<int>(i), static_cast<int>(j), value);
    }
  }
  OperatorMatrix m;
  m.basis = basis;
  m.data.resize(static_cast<Eigen::Index>(basis->dim()), static_cast<Eigen::Index>(basis->dim()));
  m.data.setFromTriplets(trip.begin(), trip.end());
  m.data.prune(cplx(0.0), 0.0);
  m.data.makeCompressed();
  m.symmetry = f.symmetry();
  m.truncation_loss = loss;
  return m;
}

}  // namespace bhkam

#endif  // BHKAM_CLASS_S_HPP
