#ifndef BHKAM_LATTICE_HPP
#define BHKAM_LATTICE_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "bhkam/errors.hpp"

namespace bhkam {

using cplx = std::complex<double>;

inline constexpr int kMaxSites = 16;

// Fixed-capacity integer vector over the sites of a chain. Used both for
// occupation configurations and for moves (hopping displacements).
class SiteVector {
 public:
  SiteVector() = default;
  explicit SiteVector(int n) : n_(n) {
    if (n < 0 || n > kMaxSites) {
      throw CapacityError("chain length " + std::to_string(n) + " exceeds kMaxSites=" +
                          std::to_string(kMaxSites));
    }
  }
  SiteVector(std::initializer_list<int> values) : SiteVector(static_cast<int>(values.size())) {
    std::copy(values.begin(), values.end(), v_.begin());
  }
  static SiteVector from(const std::vector<int>& values) {
    SiteVector s(static_cast<int>(values.size()));
    std::copy(values.begin(), values.end(), s.v_.begin());
    return s;
  }
  static SiteVector unit(int n, int x, int value = 1) {
    SiteVector s(n);
    s[x] = value;
    return s;
  }

  int size() const { return n_; }
  int& operator[](int i) { return v_[static_cast<std::size_t>(i)]; }
  int operator[](int i) const { return v_[static_cast<std::size_t>(i)]; }
  const int* begin() const { return v_.data(); }
  const int* end() const { return v_.data() + n_; }

  std::vector<int> to_vector() const { return {begin(), end()}; }

  bool is_zero() const {
    return std::all_of(begin(), end(), [](int a) { return a == 0; });
  }
  bool non_negative() const {
    return std::all_of(begin(), end(), [](int a) { return a >= 0; });
  }
  int max_entry() const { return n_ == 0 ? 0 : *std::max_element(begin(), end()); }
  int min_entry() const { return n_ == 0 ? 0 : *std::min_element(begin(), end()); }
  int norm_inf() const {
    int m = 0;
    for (int a : *this) m = std::max(m, std::abs(a));
    return m;
  }
  int norm1() const {
    int m = 0;
    for (int a : *this) m += std::abs(a);
    return m;
  }
  int norm2_sq() const {
    int m = 0;
    for (int a : *this) m += a * a;
    return m;
  }
  double norm2() const { return std::sqrt(static_cast<double>(norm2_sq())); }
  int sum() const { return std::accumulate(begin(), end(), 0); }

  // Sites with a nonzero entry, ascending.
  std::vector<int> support() const {
    std::vector<int> s;
    for (int i = 0; i < n_; ++i)
      if (v_[static_cast<std::size_t>(i)] != 0) s.push_back(i);
    return s;
  }

  SiteVector& operator+=(const SiteVector& o) {
    for (int i = 0; i < n_; ++i) v_[static_cast<std::size_t>(i)] += o[i];
    return *this;
  }
  SiteVector& operator-=(const SiteVector& o) {
    for (int i = 0; i < n_; ++i) v_[static_cast<std::size_t>(i)] -= o[i];
    return *this;
  }
  friend SiteVector operator+(SiteVector a, const SiteVector& b) { return a += b; }
  friend SiteVector operator-(SiteVector a, const SiteVector& b) { return a -= b; }
  friend SiteVector operator-(SiteVector a) {
    for (int i = 0; i < a.n_; ++i) a[i] = -a[i];
    return a;
  }
  friend SiteVector operator*(int k, SiteVector a) {
    for (int i = 0; i < a.n_; ++i) a[i] *= k;
    return a;
  }
  friend int dot(const SiteVector& a, const SiteVector& b) {
    int s = 0;
    for (int i = 0; i < a.n_; ++i) s += a[i] * b[i];
    return s;
  }

  friend bool operator==(const SiteVector& a, const SiteVector& b) {
    return a.n_ == b.n_ && std::equal(a.begin(), a.end(), b.begin());
  }
  friend bool operator!=(const SiteVector& a, const SiteVector& b) { return !(a == b); }
  friend bool operator<(const SiteVector& a, const SiteVector& b) {
    if (a.n_ != b.n_) return a.n_ < b.n_;
    return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
  }

  std::size_t hash() const {
    std::uint64_t h = 1469598103934665603ULL;
    for (int a : *this) {
      h ^= static_cast<std::uint64_t>(static_cast<std::uint32_t>(a));
      h *= 1099511628211ULL;
    }
    return static_cast<std::size_t>(h);
  }

  friend std::ostream& operator<<(std::ostream& os, const SiteVector& s) {
    os << '(';
    for (int i = 0; i < s.n_; ++i) os << (i ? "," : "") << s[i];
    return os << ')';
  }

 private:
  std::array<int, kMaxSites> v_{};
  int n_ = 0;
};

struct SiteVectorHash {
  std::size_t operator()(const SiteVector& s) const { return s.hash(); }
};

using OccupationConfig = SiteVector;
using Move = SiteVector;

// Finite open chain. Sites are stored as 0..N-1; the centered labels
// -(N-1)/2 .. (N-1)/2 are used only for I/O. Even N is accepted, in which case
// the centered label of internal site x is x - (N-1)/2 rounded down.
class ChainGeometry {
 public:
  explicit ChainGeometry(int n_sites) : n_(n_sites) {
    if (n_sites < 1) throw ConfigError("chain needs at least one site");
    if (n_sites > kMaxSites) throw CapacityError("chain longer than kMaxSites");
  }
  int sites() const { return n_; }
  bool odd() const { return n_ % 2 == 1; }
  int centered_label(int x) const { return x - (n_ - 1) / 2; }
  int from_centered(int label) const { return label + (n_ - 1) / 2; }
  bool valid(int x) const { return x >= 0 && x < n_; }
  // Bond (x, x+1) exists for x < N-1.
  bool has_right_bond(int x) const { return x >= 0 && x < n_ - 1; }
  // Sites of the ball B(x, r) intersected with the chain.
  std::vector<int> ball(int x, int r) const {
    std::vector<int> b;
    for (int y = std::max(0, x - r); y <= std::min(n_ - 1, x + r); ++y) b.push_back(y);
    return b;
  }

 private:
  int n_;
};

// The hopping g is the ratio J/U. mu is the chemical potential; delta is the
// reduction scale of the reduced ladder operators; gamma the cutoff exponent.
struct ModelParams {
  double g = 1.0;
  double mu = 0.3;
  double delta = 0.3;
  double gamma = 0.75;

  double gamma_prime() const { return 1.0 - gamma; }
  // Width of the resonance cutoff in bare energy units.
  double cutoff_scale() const { return std::pow(delta, -gamma); }

  void validate() const {
    if (!(gamma > 0.5 && gamma < 1.0)) throw ConfigError("gamma must lie in (1/2, 1)");
    if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("delta must lie in (0, 1)");
    if (!(mu > 0.0 && mu < 1.0)) throw ConfigError("mu must lie in (0, 1)");
  }
};

inline constexpr std::size_t kDefaultSpaceLimit = 2'000'000;

// Truncated bosonic Fock space {0..n_max}^N with lexicographic enumeration
// (site 0 most significant).
class TruncatedFockSpace {
 public:
  TruncatedFockSpace(ChainGeometry geometry, int n_max, std::size_t limit = kDefaultSpaceLimit)
      : geometry_(geometry), n_max_(n_max) {
    if (n_max < 0) throw ConfigError("n_max must be non-negative");
    const double d = std::pow(static_cast<double>(n_max + 1), geometry.sites());
    if (d > static_cast<double>(limit)) {
      throw CapacityError("truncated space dimension " + std::to_string(d) +
                          " exceeds limit " + std::to_string(limit));
    }
    dim_ = static_cast<std::size_t>(d + 0.5);
  }

  const ChainGeometry& geometry() const { return geometry_; }
  int sites() const { return geometry_.sites(); }
  int n_max() const { return n_max_; }
  std::size_t dim() const { return dim_; }

  bool contains(const OccupationConfig& eta) const {
    return eta.size() == sites() && eta.min_entry() >= 0 && eta.max_entry() <= n_max_;
  }

  std::size_t index_of(const OccupationConfig& eta) const {
    std::size_t idx = 0;
    for (int x = 0; x < sites(); ++x) idx = idx * static_cast<std::size_t>(n_max_ + 1) + static_cast<std::size_t>(eta[x]);
    return idx;
  }

  OccupationConfig config_at(std::size_t index) const {
    OccupationConfig eta(sites());
    for (int x = sites() - 1; x >= 0; --x) {
      eta[x] = static_cast<int>(index % static_cast<std::size_t>(n_max_ + 1));
      index /= static_cast<std::size_t>(n_max_ + 1);
    }
    return eta;
  }

 private:
  ChainGeometry geometry_;
  int n_max_;
  std::size_t dim_ = 0;
};

inline std::vector<OccupationConfig> enumerate_configs(const TruncatedFockSpace& space) {
  std::vector<OccupationConfig> out;
  out.reserve(space.dim());
  for (std::size_t i = 0; i < space.dim(); ++i) out.push_back(space.config_at(i));
  return out;
}

enum class Ladder { annihilate, create };

struct LadderResult {
  OccupationConfig config;
  double amplitude = 0.0;
};

// a|n> = sqrt(n)|n-1>, a*|n> = sqrt(n+1)|n+1>.
inline LadderResult apply_ladder(const OccupationConfig& eta, int x, Ladder kind) {
  if (x < 0 || x >= eta.size()) throw ConfigError("site out of range in apply_ladder");
  LadderResult r{eta, 0.0};
  const int n = eta[x];
  if (kind == Ladder::annihilate) {
    if (n == 0) return r;
    r.config[x] = n - 1;
    r.amplitude = std::sqrt(static_cast<double>(n));
  } else {
    r.config[x] = n + 1;
    r.amplitude = std::sqrt(static_cast<double>(n + 1));
  }
  return r;
}

inline int onsite_energy(const OccupationConfig& eta) { return eta.norm2_sq(); }

}  // namespace bhkam

#endif  // BHKAM_LATTICE_HPP
