#ifndef BHKAM_GEOMETRY_HPP
#define BHKAM_GEOMETRY_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <vector>

#include "bhkam/cutoff.hpp"
#include "bhkam/moves.hpp"
#include "bhkam/parallel.hpp"

namespace bhkam {

using RealVec = Eigen::VectorXd;

inline RealVec to_real(const SiteVector& v) {
  RealVec out(v.size());
  for (int i = 0; i < v.size(); ++i) out(i) = v[i];
  return out;
}

struct GeometryParams {
  double L = 64.0;
  double delta = 0.3;
  double gamma = 0.75;
  int n2 = 2;
  int n3 = 1;
  int r = 1;

  // delta^{-gamma}
  double scale() const { return std::pow(delta, -gamma); }
  double K() const { return 8.0 * r * r + 2.0; }
  void validate() const {
    if (!(L > 1.0)) throw ConfigError("L must exceed 1");
    if (n2 < 1 || n3 < 1 || r < 1) throw ConfigError("n2, n3 and r must be >= 1");
    if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("delta must lie in (0, 1)");
    if (!(gamma > 0.5 && gamma < 1.0)) throw ConfigError("gamma must lie in (1/2, 1)");
  }
};

// Linear span of integer moves with an orthonormal basis (columns).
class Subspace {
 public:
  Subspace() = default;
  Subspace(int n, const std::vector<Move>& gens) : n_(n), gens_(gens) {
    std::vector<char> in(static_cast<std::size_t>(n), 0);
    for (const auto& g : gens)
      for (int x : g.support()) in[static_cast<std::size_t>(x)] = 1;
    for (int x = 0; x < n; ++x)
      if (in[static_cast<std::size_t>(x)]) support_.push_back(x);
    if (gens.empty()) {
      basis_.resize(n, 0);
      return;
    }
    Eigen::MatrixXd a(n, static_cast<Eigen::Index>(gens.size()));
    for (std::size_t j = 0; j < gens.size(); ++j) a.col(static_cast<Eigen::Index>(j)) = to_real(gens[j]);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
    qr.setThreshold(1e-10);
    const Eigen::Index rank = qr.rank();
    basis_ = Eigen::MatrixXd(qr.householderQ()) * Eigen::MatrixXd::Identity(n, rank);
  }

  int sites() const { return n_; }
  int dim() const { return static_cast<int>(basis_.cols()); }
  const Eigen::MatrixXd& basis() const { return basis_; }
  const std::vector<Move>& generators() const { return gens_; }
  // Sites on which some vector of the span is nonzero.
  const std::vector<int>& support() const { return support_; }

  RealVec coords(const RealVec& eta) const { return basis_.transpose() * eta; }
  // Orthogonal projection onto the span; eta - project(eta) = P(eta, cap_i pi(rho_i)).
  RealVec project(const RealVec& eta) const { return basis_ * coords(eta); }
  RealVec project_to_intersection(const RealVec& eta) const { return eta - project(eta); }
  // |eta - P(eta, cap_i pi(rho_i))|_2
  double distance_to_intersection(const RealVec& eta) const { return coords(eta).norm(); }

  bool contains(const Move& rho, double tol = 1e-9) const {
    const RealVec v = to_real(rho);
    return (v - project(v)).norm() <= tol * std::max(1.0, v.norm());
  }
  bool contains_support_of(const Move& rho) const {
    for (int x : rho.support())
      if (!std::binary_search(support_.begin(), support_.end(), x)) return false;
    return true;
  }

  // Identifies the span: projector entries rounded to 1e-8.
  std::vector<long long> key() const {
    const Eigen::MatrixXd p = basis_ * basis_.transpose();
    std::vector<long long> k;
    k.reserve(static_cast<std::size_t>(p.size()));
    for (Eigen::Index i = 0; i < p.size(); ++i) k.push_back(std::llround(p.data()[i] * 1e8));
    return k;
  }

 private:
  int n_ = 0;
  std::vector<Move> gens_;
  std::vector<int> support_;
  Eigen::MatrixXd basis_;
};

inline bool linearly_independent(int n, const std::vector<Move>& moves) {
  return Subspace(n, moves).dim() == static_cast<int>(moves.size());
}

// Union-find over pairwise support intersections.
inline bool supports_percolate(const std::vector<Move>& moves) {
  const std::size_t p = moves.size();
  std::vector<std::size_t> parent(p);
  std::iota(parent.begin(), parent.end(), 0);
  std::function<std::size_t(std::size_t)> find = [&](std::size_t i) {
    return parent[i] == i ? i : parent[i] = find(parent[i]);
  };
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = i + 1; j < p; ++j)
      if (supports_intersect(moves[i], moves[j])) parent[find(i)] = find(j);
  for (std::size_t i = 1; i < p; ++i)
    if (find(i) != find(0)) return false;
  return true;
}

inline bool is_cluster(const std::vector<Move>& moves, int x, int r) {
  if (moves.empty()) return false;
  const int n = moves.front().size();
  bool anchored = false;
  for (const auto& m : moves) {
    if (!is_move_of_range(m, r)) return false;
    anchored = anchored || in_ball(m, x, 4 * r);
  }
  return anchored && linearly_independent(n, moves) && supports_percolate(moves);
}

// Moves of M_r on an N-site chain, shared by the geometric predicates.
struct MoveCatalog {
  int sites = 0;
  int r = 1;
  std::vector<Move> moves;

  MoveCatalog() = default;
  MoveCatalog(int n, int range) : sites(n), r(range), moves(move_set(range, ChainGeometry(n))) {}
};

inline constexpr std::size_t kDefaultSubspaceLimit = 100000;

// The flattened-cylinder set B(rho_1..rho_p). It depends on the cluster only
// through its span.
class BSet {
 public:
  BSet() = default;
  BSet(Subspace span, const MoveCatalog& catalog, std::size_t limit = kDefaultSubspaceLimit) : span_(std::move(span)) {
    for (const auto& m : catalog.moves)
      if (span_.contains_support_of(m) && span_.contains(m)) in_span_.push_back(m);
    // Distinct proper subspaces spanned by independent subsets of M_r cap span.
    std::set<std::vector<long long>> seen;
    std::vector<Move> chosen;
    std::function<void(std::size_t)> rec = [&](std::size_t start) {
      if (!chosen.empty()) {
        Subspace s(span_.sites(), chosen);
        if (s.dim() != static_cast<int>(chosen.size())) return;
        if (seen.insert(s.key()).second) {
          proper_.push_back(std::move(s));
          if (proper_.size() > limit) throw CapacityError("proper subspace enumeration exceeds limit");
        }
      }
      if (static_cast<int>(chosen.size()) + 1 >= span_.dim()) return;
      for (std::size_t i = start; i < in_span_.size(); ++i) {
        chosen.push_back(in_span_[i]);
        rec(i + 1);
        chosen.pop_back();
      }
    };
    rec(0);
  }

  int p() const { return span_.dim(); }
  const Subspace& span() const { return span_; }
  const std::vector<Move>& moves_in_span() const { return in_span_; }
  const std::vector<Subspace>& proper_subspaces() const { return proper_; }

  // Largest ratio of a defining quantity to its bound; eta is in B iff load <= 1.
  double load(const RealVec& eta, double L, double s) const {
    const RealVec c = span_.coords(eta);
    const double lp = std::pow(L, p());
    const double c2 = c.squaredNorm();
    double out = std::sqrt(c2) / (lp * s);
    for (const auto& sub : proper_) {
      // |P(eta, cap pi(rho')) - P(eta, cap pi(rho))| = |P_span eta - P_sub eta| since sub lies in span.
      const double d = std::sqrt(std::max(0.0, c2 - sub.coords(eta).squaredNorm()));
      out = std::max(out, d / ((lp - std::pow(L, sub.dim())) * s));
    }
    return out;
  }

  bool contains(const RealVec& eta, double L, double s) const {
    const RealVec c = span_.coords(eta);
    const double lp = std::pow(L, p());
    const double slack = 1e-12 * lp * s;
    const double c2 = c.squaredNorm();
    if (std::sqrt(c2) > lp * s + slack) return false;
    for (const auto& sub : proper_) {
      const double d = std::sqrt(std::max(0.0, c2 - sub.coords(eta).squaredNorm()));
      if (d > (lp - std::pow(L, sub.dim())) * s + slack) return false;
    }
    return true;
  }

  // {tau in [lo, hi] : eta + tau e_k in B} as an interval; every defining
  // quantity is a convex quadratic in tau.
  std::optional<std::pair<double, double>> line_section(const RealVec& eta, int k, double L, double s, double lo,
                                                        double hi) const {
    const Eigen::VectorXd c0 = span_.coords(eta);
    const Eigen::VectorXd ce = span_.basis().row(k).transpose();
    const double lp = std::pow(L, p());
    auto clip = [&](double a, double b, double c) {
      // a tau^2 + b tau + c <= 0 with a >= 0
      const double scale = std::max({std::abs(a) * (hi - lo) * (hi - lo), std::abs(b) * (hi - lo), std::abs(c), 1e-300});
      if (a <= 1e-14 * scale) {
        if (std::abs(b) <= 1e-14 * scale) {
          if (c > 0.0) lo = hi + 1.0;
          return;
        }
        const double root = -c / b;
        if (b > 0.0) hi = std::min(hi, root);
        else lo = std::max(lo, root);
        return;
      }
      const double disc = b * b - 4.0 * a * c;
      if (disc < 0.0) {
        lo = hi + 1.0;
        return;
      }
      const double sq = std::sqrt(disc);
      // Stable roots.
      const double qq = -0.5 * (b + (b >= 0.0 ? sq : -sq));
      double r1 = qq / a, r2 = qq != 0.0 ? c / qq : r1;
      if (r1 > r2) std::swap(r1, r2);
      lo = std::max(lo, r1);
      hi = std::min(hi, r2);
    };
    clip(ce.squaredNorm(), 2.0 * c0.dot(ce), c0.squaredNorm() - lp * lp * s * s);
    for (const auto& sub : proper_) {
      if (lo > hi) break;
      const Eigen::VectorXd d0 = sub.coords(eta);
      const Eigen::VectorXd de = sub.basis().row(k).transpose();
      const double bound = (lp - std::pow(L, sub.dim())) * s;
      clip(std::max(0.0, ce.squaredNorm() - de.squaredNorm()), 2.0 * (c0.dot(ce) - d0.dot(de)),
           c0.squaredNorm() - d0.squaredNorm() - bound * bound);
    }
    if (lo > hi) return std::nullopt;
    return std::make_pair(lo, hi);
  }

 private:
  Subspace span_;
  std::vector<Move> in_span_;
  std::vector<Subspace> proper_;
};

enum class ThetaMethod { gauss_legendre, adaptive };

struct ThetaQuadrature {
  ThetaMethod method = ThetaMethod::adaptive;
  // Gauss-Legendre nodes per panel; one of 4, 8, 16, 32.
  int nodes = 8;
  int panels = 1;
  // Windows with more coordinates than this use seeded Monte Carlo.
  int mc_threshold = 4;
  std::size_t mc_samples = 200000;
  std::uint64_t seed = 1;
  double max_points = 5e7;
  // Absolute tolerance per level of the nested adaptive Gauss-Kronrod rule.
  double adaptive_tol = 1e-4;
  int adaptive_depth = 12;
};

namespace detail {

template <int P>
void gauss_rule(std::vector<double>& x, std::vector<double>& w) {
  using G = boost::math::quadrature::gauss<double, P>;
  const auto& a = G::abscissa();
  const auto& b = G::weights();
  for (std::size_t i = 0; i < a.size(); ++i) {
    x.push_back(a[i]);
    w.push_back(b[i]);
    if (a[i] != 0.0) {
      x.push_back(-a[i]);
      w.push_back(b[i]);
    }
  }
}

// Composite rule on [lo, hi] with `panels` equal panels.
inline void composite_gauss(int nodes, int panels, double lo, double hi, std::vector<double>& x, std::vector<double>& w) {
  std::vector<double> gx, gw;
  switch (nodes) {
    case 4: gauss_rule<4>(gx, gw); break;
    case 8: gauss_rule<8>(gx, gw); break;
    case 16: gauss_rule<16>(gx, gw); break;
    case 32: gauss_rule<32>(gx, gw); break;
    default: throw ConfigError("quadrature nodes must be 4, 8, 16 or 32");
  }
  const double h = (hi - lo) / panels;
  for (int p = 0; p < panels; ++p) {
    const double c = lo + (p + 0.5) * h;
    for (std::size_t i = 0; i < gx.size(); ++i) {
      x.push_back(c + 0.5 * h * gx[i]);
      w.push_back(0.5 * h * gw[i]);
    }
  }
}

// Integral of the bump over (-2, x].
inline double bump_cumulative(double x) {
  if (x <= -2.0) return 0.0;
  if (x >= 2.0) return kBumpIntegral;
  if (x > 0.0) return kBumpIntegral - bump_cumulative(-x);
  if (x >= -1.0) return 0.5 + (x + 1.0);
  std::vector<double> nx, nw;
  composite_gauss(32, 2, -2.0, x, nx, nw);
  double acc = 0.0;
  for (std::size_t i = 0; i < nx.size(); ++i) acc += nw[i] * bump(nx[i]);
  return acc;
}

}  // namespace detail

// Resonant zone R(x): union of B-sets over clusters around x with p <= n2,
// deduplicated by span, plus the smoothed indicator theta_x.
class ResonanceZone {
 public:
  ResonanceZone(int n, int x, const GeometryParams& gp, std::size_t limit = kDefaultSubspaceLimit)
      : ResonanceZone(std::make_shared<const MoveCatalog>(n, gp.r), x, gp, limit) {}

  ResonanceZone(std::shared_ptr<const MoveCatalog> catalog, int x, const GeometryParams& gp,
                std::size_t limit = kDefaultSubspaceLimit)
      : catalog_(std::move(catalog)), x_(x), gp_(gp) {
    gp.validate();
    const int n = catalog_->sites;
    if (x < 0 || x >= n) throw ConfigError("zone anchor outside the chain");
    std::set<std::vector<long long>> seen;
    std::vector<std::vector<Move>> level;
    for (const auto& m : catalog_->moves) {
      if (!in_ball(m, x, 4 * gp.r)) continue;
      Subspace s(n, {m});
      if (seen.insert(s.key()).second) level.push_back({m});
    }
    std::vector<std::vector<Move>> all = level;
    for (int p = 2; p <= gp.n2; ++p) {
      std::vector<std::vector<Move>> next;
      for (const auto& gens : level) {
        Subspace s(n, gens);
        for (const auto& m : catalog_->moves) {
          bool touches = false;
          for (const auto& g : gens) touches = touches || supports_intersect(g, m);
          if (!touches || s.contains(m)) continue;
          auto ext = gens;
          ext.push_back(m);
          Subspace se(n, ext);
          if (seen.insert(se.key()).second) next.push_back(std::move(ext));
          if (seen.size() > limit) throw CapacityError("cluster enumeration exceeds limit");
        }
      }
      all.insert(all.end(), next.begin(), next.end());
      level = std::move(next);
    }
    std::set<int> win;
    for (const auto& gens : all) {
      clusters_.push_back(gens);
      sets_.emplace_back(Subspace(n, gens), *catalog_, limit);
      for (const auto& g : gens)
        for (int y : g.support()) win.insert(y);
    }
    window_.assign(win.begin(), win.end());
  }

  int anchor() const { return x_; }
  int sites() const { return catalog_->sites; }
  const GeometryParams& params() const { return gp_; }
  const MoveCatalog& catalog() const { return *catalog_; }
  const std::vector<BSet>& sets() const { return sets_; }
  const std::vector<std::vector<Move>>& clusters() const { return clusters_; }
  // Sites on which membership in R(x) depends.
  const std::vector<int>& window() const { return window_; }

  bool contains(const RealVec& eta) const {
    const double s = gp_.scale();
    for (const auto& b : sets_)
      if (b.contains(eta, gp_.L, s)) return true;
    return false;
  }
  bool contains(const SiteVector& eta) const { return contains(to_real(eta)); }

  // Some B-set contains every point of the cube eta + [-h, h]^N.
  bool cube_inside(const RealVec& eta, double h) const {
    const double s = gp_.scale();
    for (const auto& b : sets_) {
      const auto& supp = b.span().support();
      const std::size_t corners = std::size_t{1} << supp.size();
      bool all_in = true;
      RealVec v = eta;
      for (std::size_t m = 0; m < corners && all_in; ++m) {
        for (std::size_t i = 0; i < supp.size(); ++i)
          v(supp[i]) = eta(supp[i]) + (((m >> i) & 1u) ? h : -h);
        all_in = b.contains(v, gp_.L, s);
      }
      if (all_in) return true;
    }
    return false;
  }

  // Sufficient test that the cube eta + [-h, h]^N misses R(x).
  bool cube_outside(const RealVec& eta, double h) const {
    const double s = gp_.scale();
    for (const auto& b : sets_) {
      const double bound = std::pow(gp_.L, b.p()) * s;
      const double spread = h * std::sqrt(static_cast<double>(b.span().support().size()));
      bool avoids = b.span().distance_to_intersection(eta) - spread > bound;
      for (const auto& m : b.moves_in_span()) {
        if (avoids) break;
        const double lo = std::abs(to_real(m).dot(eta)) - h * m.norm1();
        avoids = lo / m.norm2() > bound;
      }
      if (!avoids) return false;
    }
    return true;
  }

  // 1 - normalized convolution of the R(x) indicator with prod_x xi_{delta^-gamma}.
  double theta(const RealVec& eta, const ThetaQuadrature& q = {}) const {
    const double s = gp_.scale();
    const double h = 2.0 * s;
    if (cube_inside(eta, h)) return 0.0;
    if (cube_outside(eta, h)) return 1.0;
    const int w = static_cast<int>(window_.size());
    if (w > q.mc_threshold) return theta_mc(eta, q);
    if (q.method == ThetaMethod::adaptive) return std::clamp(1.0 - theta_adaptive(eta, q), 0.0, 1.0);
    // Tensor Gauss-Legendre over all window coordinates but the last; along
    // the last one R(x) is a union of intervals and the kernel is integrated exactly.
    std::vector<double> x, wt;
    detail::composite_gauss(q.nodes, q.panels, -h, h, x, wt);
    std::vector<double> kw(x.size());
    double norm1 = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      kw[i] = wt[i] * bump(x[i] / s);
      norm1 += kw[i];
    }
    const int outer = w - 1;
    if (std::pow(static_cast<double>(x.size()), outer) > q.max_points)
      throw CapacityError("theta quadrature budget exceeded");
    const int inner = window_.back();
    std::vector<std::size_t> idx(static_cast<std::size_t>(outer), 0);
    std::vector<std::pair<double, double>> pieces;
    RealVec v = eta;
    double inside = 0.0;
    while (true) {
      double weight = 1.0;
      for (int k = 0; k < outer; ++k) {
        const std::size_t i = idx[static_cast<std::size_t>(k)];
        weight *= kw[i];
        v(window_[static_cast<std::size_t>(k)]) = eta(window_[static_cast<std::size_t>(k)]) + x[i];
      }
      if (weight > 0.0) inside += weight * line_measure(v, inner, h, pieces);
      int k = 0;
      while (k < outer && ++idx[static_cast<std::size_t>(k)] == x.size()) idx[static_cast<std::size_t>(k++)] = 0;
      if (k == outer) break;
    }
    return std::clamp(1.0 - inside / (std::pow(norm1, outer) * kBumpIntegral * s), 0.0, 1.0);
  }
  double theta(const SiteVector& eta, const ThetaQuadrature& q = {}) const { return theta(to_real(eta), q); }

  // Membership in the multi-resonant set S(x).
  bool in_S(const RealVec& eta) const {
    const int n = catalog_->sites;
    const double t = std::pow(gp_.L, gp_.n2 + 1) * gp_.scale();
    std::vector<Move> close;
    for (const auto& m : catalog_->moves)
      if (std::abs(to_real(m).dot(eta)) <= t) close.push_back(m);
    std::set<std::vector<long long>> seen;
    std::function<bool(std::vector<Move>&)> grow = [&](std::vector<Move>& gens) {
      if (static_cast<int>(gens.size()) == gp_.n2) return true;
      Subspace s(n, gens);
      for (const auto& m : close) {
        bool touches = false;
        for (const auto& g : gens) touches = touches || supports_intersect(g, m);
        if (!touches || s.contains(m)) continue;
        gens.push_back(m);
        if (seen.insert(Subspace(n, gens).key()).second && grow(gens)) return true;
        gens.pop_back();
      }
      return false;
    };
    for (const auto& m : close) {
      if (!in_ball(m, x_, 4 * gp_.r)) continue;
      std::vector<Move> gens{m};
      if (grow(gens)) return true;
    }
    return false;
  }
  bool in_S(const SiteVector& eta) const { return in_S(to_real(eta)); }

 private:
  // Normalized kernel mass of R(x) by nested adaptive Gauss-Kronrod, innermost coordinate exact.
  double theta_adaptive(const RealVec& eta, const ThetaQuadrature& q) const {
    using GK = boost::math::quadrature::gauss_kronrod<double, 15>;
    const double s = gp_.scale();
    const double h = 2.0 * s;
    const int outer = static_cast<int>(window_.size()) - 1;
    const int inner = window_.back();
    RealVec v = eta;
    std::vector<std::pair<double, double>> pieces;
    std::function<double(int)> level = [&](int k) -> double {
      if (k == outer) return line_measure(v, inner, h, pieces) / (kBumpIntegral * s);
      const int site = window_[static_cast<std::size_t>(k)];
      auto f = [&](double z) {
        v(site) = eta(site) + z;
        const double w = bump(z / s);
        return w > 0.0 ? w * level(k + 1) : 0.0;
      };
      double total = 0.0;
      // Split at the plateau edges where the kernel changes form.
      for (auto [a, b] : {std::pair{-h, -s}, std::pair{-s, s}, std::pair{s, h}})
        total += GK::integrate(f, a, b, static_cast<unsigned>(q.adaptive_depth), q.adaptive_tol);
      v(site) = eta(site);
      return total / (kBumpIntegral * s);
    };
    return level(0);
  }

  // Kernel mass of {tau : v + tau e_k in R(x)}.
  double line_measure(const RealVec& v, int k, double h, std::vector<std::pair<double, double>>& pieces) const {
    const double s = gp_.scale();
    pieces.clear();
    for (const auto& b : sets_)
      if (auto iv = b.line_section(v, k, gp_.L, s, -h, h)) pieces.push_back(*iv);
    if (pieces.empty()) return 0.0;
    std::sort(pieces.begin(), pieces.end());
    double mass = 0.0;
    double lo = pieces.front().first, hi = pieces.front().second;
    auto flush = [&] { mass += s * (detail::bump_cumulative(hi / s) - detail::bump_cumulative(lo / s)); };
    for (std::size_t i = 1; i < pieces.size(); ++i) {
      if (pieces[i].first > hi) {
        flush();
        lo = pieces[i].first;
        hi = pieces[i].second;
      } else {
        hi = std::max(hi, pieces[i].second);
      }
    }
    flush();
    return mass;
  }

  double theta_mc(const RealVec& eta, const ThetaQuadrature& q) const {
    const double s = gp_.scale();
    std::size_t key = 0;
    for (int y : window_) key = key * 1000003u + std::hash<double>()(eta(y));
    auto rng = stream_rng(q.seed, key);
    std::uniform_real_distribution<double> u(-2.0 * s, 2.0 * s), acc(0.0, 1.0);
    RealVec v = eta;
    std::size_t hits = 0;
    for (std::size_t k = 0; k < q.mc_samples; ++k) {
      for (int y : window_) {
        double z;
        do z = u(rng);
        while (acc(rng) >= bump(z / s));
        v(y) = eta(y) + z;
      }
      hits += contains(v) ? 1 : 0;
    }
    return 1.0 - static_cast<double>(hits) / static_cast<double>(q.mc_samples);
  }

  std::shared_ptr<const MoveCatalog> catalog_;
  int x_;
  GeometryParams gp_;
  std::vector<std::vector<Move>> clusters_;
  std::vector<BSet> sets_;
  std::vector<int> window_;
};

// Distance from eta to {eta' : |rho_j . eta'| <= t for all j}, rho_j independent.
inline double distance_to_slab_intersection(const RealVec& eta, const std::vector<Move>& rhos, double t) {
  const int n = static_cast<int>(eta.size());
  const Subspace span(n, rhos);
  const int p = span.dim();
  if (p != static_cast<int>(rhos.size())) throw ConfigError("slab normals must be independent");
  Eigen::MatrixXd a(p, p);
  Eigen::VectorXd u(p);
  for (int j = 0; j < p; ++j) {
    const RealVec rj = to_real(rhos[static_cast<std::size_t>(j)]);
    a.row(j) = (span.basis().transpose() * rj).transpose();
    u(j) = rj.dot(eta);
  }
  // Displacement y in span coordinates gives z = u + A y; minimize |A^{-1}(z - u)| over |z_j| <= t
  // by enumerating the faces of the box.
  const Eigen::MatrixXd m = a.inverse();
  double best = std::numeric_limits<double>::infinity();
  std::vector<int> state(static_cast<std::size_t>(p), -1);
  while (true) {
    std::vector<int> free;
    Eigen::VectorXd z0 = Eigen::VectorXd::Zero(p);
    for (int j = 0; j < p; ++j) {
      if (state[static_cast<std::size_t>(j)] == 0) free.push_back(j);
      else z0(j) = state[static_cast<std::size_t>(j)] * t;
    }
    Eigen::VectorXd z = z0;
    if (!free.empty()) {
      Eigen::MatrixXd mf(p, static_cast<Eigen::Index>(free.size()));
      for (std::size_t k = 0; k < free.size(); ++k) mf.col(static_cast<Eigen::Index>(k)) = m.col(free[k]);
      const Eigen::VectorXd rhs = -(m * (z0 - u));
      const Eigen::VectorXd zf = mf.colPivHouseholderQr().solve(rhs);
      for (std::size_t k = 0; k < free.size(); ++k) z(free[k]) = zf(static_cast<Eigen::Index>(k));
    }
    bool feasible = true;
    for (int j = 0; j < p; ++j) feasible = feasible && std::abs(z(j)) <= t * (1.0 + 1e-12) + 1e-12;
    if (feasible) best = std::min(best, (m * (z - u)).norm());
    int j = 0;
    while (j < p && state[static_cast<std::size_t>(j)] == 1) state[static_cast<std::size_t>(j++)] = -1;
    if (j == p) break;
    ++state[static_cast<std::size_t>(j)];
  }
  return best;
}

// Exceptional set Z around bond site a and its broadening Z_s.
class ExceptionalSet {
 public:
  ExceptionalSet(int n, int a, const GeometryParams& gp) : n_(n), a_(a), gp_(gp) {
    gp.validate();
    const int lo = std::max(0, a - 2 * gp.n3), hi = std::min(n - 1, a + 2 * gp.n3);
    for (const auto& m : move_set(gp.r, ChainGeometry(n)))
      if (support_within(m, lo, hi)) window_moves_.push_back(m);
  }

  double threshold() const { return std::pow(gp_.L, gp_.n2 + 1) * gp_.scale(); }
  const std::vector<Move>& window_moves() const { return window_moves_; }

  bool contains(const RealVec& eta) const {
    std::vector<Move> close;
    for (const auto& m : window_moves_)
      if (std::abs(to_real(m).dot(eta)) <= threshold()) close.push_back(m);
    return Subspace(n_, close).dim() >= gp_.n2;
  }
  bool contains(const SiteVector& eta) const { return contains(to_real(eta)); }

  // The ball of radius s around eta meets Z.
  bool contains_broadened(const RealVec& eta, double s) const {
    if (contains(eta)) return true;
    std::vector<Move> cand;
    for (const auto& m : window_moves_)
      if (std::abs(to_real(m).dot(eta)) <= threshold() + s * m.norm2()) cand.push_back(m);
    if (Subspace(n_, cand).dim() < gp_.n2) return false;
    std::vector<Move> chosen;
    std::function<bool(std::size_t)> rec = [&](std::size_t start) {
      if (static_cast<int>(chosen.size()) == gp_.n2)
        return distance_to_slab_intersection(eta, chosen, threshold()) <= s;
      for (std::size_t i = start; i < cand.size(); ++i) {
        chosen.push_back(cand[i]);
        if (linearly_independent(n_, chosen) && rec(i + 1)) return true;
        chosen.pop_back();
      }
      return false;
    };
    return rec(0);
  }
  bool contains_broadened(const SiteVector& eta, double s) const { return contains_broadened(to_real(eta), s); }

 private:
  int n_;
  int a_;
  GeometryParams gp_;
  std::vector<Move> window_moves_;
};

}  // namespace bhkam

#endif  // BHKAM_GEOMETRY_HPP
