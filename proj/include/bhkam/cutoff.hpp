#ifndef BHKAM_CUTOFF_HPP
#define BHKAM_CUTOFF_HPP

#include <cmath>

#include "bhkam/lattice.hpp"

namespace bhkam {

namespace detail {
inline double mollifier_tail(double t) { return t > 0.0 ? std::exp(-1.0 / t) : 0.0; }
}  // namespace detail

// C-infinity step: 0 for t <= 0, 1 for t >= 1, with step(1/2) = 1/2.
inline double smooth_step(double t) {
  if (t <= 0.0) return 0.0;
  if (t >= 1.0) return 1.0;
  const double a = detail::mollifier_tail(t);
  const double b = detail::mollifier_tail(1.0 - t);
  return a / (a + b);
}

// Even bump: 1 on [-1, 1], 0 outside (-2, 2).
inline double bump(double x) {
  const double ax = std::abs(x);
  if (ax <= 1.0) return 1.0;
  if (ax >= 2.0) return 0.0;
  return smooth_step(2.0 - ax);
}

struct CutoffFunction {
  double scale = 1.0;
  double operator()(double x) const { return bump(x / scale); }
};

// Integral of bump over the real line. The bump is symmetric about the
// midpoints of its two ramps, so the value is exactly 3.
inline constexpr double kBumpIntegral = 3.0;

inline int delta_E(const OccupationConfig& eta, const Move& rho) {
  return 2 * dot(eta, rho) + rho.norm2_sq();
}

inline double zeta(const Move& rho, const OccupationConfig& eta, const ModelParams& p) {
  return bump(static_cast<double>(delta_E(eta, rho)) / p.cutoff_scale());
}

}  // namespace bhkam

#endif  // BHKAM_CUTOFF_HPP
