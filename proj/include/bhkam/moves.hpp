#ifndef BHKAM_MOVES_HPP
#define BHKAM_MOVES_HPP

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "bhkam/lattice.hpp"

namespace bhkam {

inline constexpr std::size_t kDefaultMoveLimit = 5'000'000;

// Nonzero moves with entries in [-r, r] supported in some ball B(x, r).
// Order: by leftmost support site, then lexicographic.
inline std::vector<Move> move_set(int r, const ChainGeometry& geom, bool conserving_only = false,
                                  std::size_t limit = kDefaultMoveLimit) {
  if (r < 1) throw ConfigError("move range must be >= 1");
  const int n = geom.sites();
  const int width = std::min(n, 2 * r + 1);
  const double count = std::pow(2.0 * r + 1.0, width) * n;
  if (count > static_cast<double>(limit)) throw CapacityError("move enumeration exceeds limit");

  std::set<Move> seen;
  std::vector<Move> out;
  for (int lo = 0; lo + width <= n; ++lo) {
    // Enumerate every vector supported in [lo, lo + width).
    std::vector<int> digits(static_cast<std::size_t>(width), -r);
    while (true) {
      Move m(n);
      for (int i = 0; i < width; ++i) m[lo + i] = digits[static_cast<std::size_t>(i)];
      if (!m.is_zero() && (!conserving_only || m.sum() == 0) && seen.insert(m).second) out.push_back(m);
      int i = 0;
      while (i < width && digits[static_cast<std::size_t>(i)] == r) digits[static_cast<std::size_t>(i++)] = -r;
      if (i == width) break;
      ++digits[static_cast<std::size_t>(i)];
    }
  }
  std::sort(out.begin(), out.end(), [](const Move& a, const Move& b) {
    const int sa = a.support().front();
    const int sb = b.support().front();
    return sa != sb ? sa < sb : a < b;
  });
  return out;
}

inline bool support_within(const Move& rho, int lo, int hi) {
  for (int x : rho.support())
    if (x < lo || x > hi) return false;
  return true;
}

inline bool in_ball(const Move& rho, int center, int radius) {
  return support_within(rho, center - radius, center + radius);
}

inline bool is_move_of_range(const Move& rho, int r) {
  if (rho.is_zero() || rho.norm_inf() > r) return false;
  const auto s = rho.support();
  return s.back() - s.front() <= 2 * r;
}

inline bool supports_intersect(const Move& a, const Move& b) {
  for (int i = 0; i < a.size(); ++i)
    if (a[i] != 0 && b[i] != 0) return true;
  return false;
}

// Nearest-neighbour hop e_x - e_{x+1} (a particle moves from x+1 to x).
inline Move hop(int n, int x) {
  Move m(n);
  m[x] = 1;
  m[x + 1] = -1;
  return m;
}

}  // namespace bhkam

#endif  // BHKAM_MOVES_HPP
