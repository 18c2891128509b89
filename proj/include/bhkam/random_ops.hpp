#ifndef BHKAM_RANDOM_OPS_HPP
#define BHKAM_RANDOM_OPS_HPP

#include <random>
#include <vector>

#include "bhkam/series.hpp"

namespace bhkam {

struct RandomOperatorSpec {
  int terms = 3;
  int range = 1;
  bool hermitian = true;
  bool conserving = false;
  // Extra sites added on each side of supp(rho) to the coefficient window.
  int window_pad = 1;
};

// Smooth diagonal coefficient: A_rho(eta) b(delta^gamma eta) with b a random
// sum of two cosines over the window, plus a constant.
inline DiagFn random_smooth_coefficient(std::mt19937_64& rng, const Move& rho, Window w, const ModelParams& p) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> phase(0.0, 6.283185307179586);
  struct Wave {
    std::vector<double> k;
    double phi;
    cplx amp;
  };
  std::vector<Wave> waves(2);
  for (auto& wv : waves) {
    for (int x = w.lo; x <= w.hi; ++x) wv.k.push_back(2.0 * u(rng));
    wv.phi = phase(rng);
    wv.amp = cplx(u(rng), u(rng));
  }
  const cplx c0(u(rng), u(rng));
  const double scale = std::pow(p.delta, p.gamma);
  const double delta = p.delta;
  return DiagNode::leaf(w, [rho, w, waves, c0, scale, delta](const SiteVector& eta) {
    cplx b = c0;
    for (const auto& wv : waves) {
      double arg = wv.phi;
      for (int x = w.lo; x <= w.hi; ++x) arg += wv.k[static_cast<std::size_t>(x - w.lo)] * scale * eta[x];
      b += wv.amp * std::cos(arg);
    }
    return monomial_amplitude(rho, eta, delta) * b;
  }, "random");
}

inline ClassSOperator random_class_s(std::mt19937_64& rng, int sites, const ModelParams& p,
                                     const RandomOperatorSpec& spec = {}) {
  const auto moves = move_set(spec.range, ChainGeometry(sites), spec.conserving);
  std::uniform_int_distribution<std::size_t> pick(0, moves.size() - 1);
  std::uniform_int_distribution<int> pad(0, spec.window_pad);
  std::uniform_int_distribution<int> coin(0, 3);
  ClassSOperator f(sites);
  for (int t = 0; t < spec.terms; ++t) {
    // Occasionally include a diagonal term.
    const bool diagonal = coin(rng) == 0;
    const Move rho = diagonal ? Move(sites) : moves[pick(rng)];
    Window w = diagonal ? Window::single(std::uniform_int_distribution<int>(0, sites - 1)(rng)) : Window::of(rho);
    w.lo = std::max(0, w.lo - pad(rng));
    w.hi = std::min(sites - 1, w.hi + pad(rng));
    ClassSOperator single(sites);
    single.add(Piece{rho, random_smooth_coefficient(rng, rho, w, p), w, -1});
    f = f + single;
    if (spec.hermitian) f = f + single.adjoint();
  }
  f = f.normalized();
  f.set_symmetry(spec.hermitian ? Symmetry::hermitian : Symmetry::none);
  return f;
}

inline FormalSeries random_series(std::mt19937_64& rng, int sites, int order, const ModelParams& p,
                                  const RandomOperatorSpec& spec = {}) {
  std::vector<ClassSOperator> c;
  for (int k = 0; k <= order; ++k) c.push_back(random_class_s(rng, sites, p, spec));
  return FormalSeries(std::move(c));
}

}  // namespace bhkam

#endif  // BHKAM_RANDOM_OPS_HPP
