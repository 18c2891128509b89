#ifndef BHKAM_GIBBS_HPP
#define BHKAM_GIBBS_HPP

#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "bhkam/lattice.hpp"
#include "bhkam/matrix.hpp"
#include "bhkam/parallel.hpp"

namespace bhkam {

// Per-site law p(n) proportional to exp(-mu n) on {0..n_max}; n_max < 0 means untruncated.
class GibbsSampler {
 public:
  GibbsSampler(double mu, int n_max = -1) : mu_(mu), n_max_(n_max), geo_(1.0 - std::exp(-mu)) {
    if (!(mu > 0.0)) throw ConfigError("mu must be positive");
  }

  double mu() const { return mu_; }
  int n_max() const { return n_max_; }

  int sample_site(std::mt19937_64& rng) const {
    auto geo = geo_;
    while (true) {
      const int n = geo(rng);
      if (n_max_ < 0 || n <= n_max_) return n;
    }
  }
  OccupationConfig sample(int sites, std::mt19937_64& rng) const {
    OccupationConfig eta(sites);
    for (int x = 0; x < sites; ++x) eta[x] = sample_site(rng);
    return eta;
  }

  // Normalized per-site probability.
  double site_probability(int n) const {
    if (n < 0 || (n_max_ >= 0 && n > n_max_)) return 0.0;
    const double q = std::exp(-mu_);
    const double z = n_max_ < 0 ? 1.0 / (1.0 - q) : -std::expm1(-mu_ * (n_max_ + 1)) / (1.0 - q);
    return std::pow(q, n) / z;
  }
  // Untruncated weight of occupations above the cap on one site.
  double cap_weight() const { return n_max_ < 0 ? 0.0 : std::exp(-mu_ * (n_max_ + 1)); }
  // Untruncated mean occupancy 1 / (e^mu - 1).
  double mean_occupancy() const { return 1.0 / std::expm1(mu_); }

 private:
  double mu_;
  int n_max_;
  std::geometric_distribution<int> geo_;
};

// Smallest cap with untruncated weight above it below e^{-3}.
inline int recommended_n_max(double mu) { return static_cast<int>(std::ceil(3.0 / mu)) + 4; }

struct Estimate {
  double value = 0.0;
  double stderr_ = 0.0;
  std::size_t samples = 0;
};

// Pairwise summation keeps reductions reproducible independent of threading.
inline double pairwise_sum(const double* x, std::size_t n) {
  if (n <= 8) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += x[i];
    return s;
  }
  const std::size_t h = n / 2;
  return pairwise_sum(x, h) + pairwise_sum(x + h, n - h);
}

inline Estimate mean_estimate(const std::vector<double>& v) {
  Estimate e;
  e.samples = v.size();
  if (v.empty()) return e;
  const double n = static_cast<double>(v.size());
  e.value = pairwise_sum(v.data(), v.size()) / n;
  std::vector<double> d(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) d[i] = (v[i] - e.value) * (v[i] - e.value);
  e.stderr_ = v.size() > 1 ? std::sqrt(pairwise_sum(d.data(), d.size()) / (n - 1.0) / n) : 0.0;
  return e;
}

// MC average of f(eta) over Gibbs samples; sample i uses stream i of `seed`.
inline Estimate mc_expectation(const GibbsSampler& g, int sites, std::size_t samples, std::uint64_t seed, int threads,
                               const std::function<double(const OccupationConfig&)>& f) {
  std::vector<double> v(samples);
  parallel_for(samples, threads, [&](std::size_t i) {
    auto rng = stream_rng(seed, i);
    v[i] = f(g.sample(sites, rng));
  });
  return mean_estimate(v);
}

// Exact average of a product observable prod_x f_x(eta_x) over the truncated law.
inline double exact_product_expectation(const GibbsSampler& g, int sites, const std::function<double(int, int)>& f,
                                        int sum_cap = 4000) {
  const int cap = g.n_max() >= 0 ? g.n_max() : sum_cap;
  double out = 1.0;
  for (int x = 0; x < sites; ++x) {
    double s = 0.0;
    for (int n = 0; n <= cap; ++n) s += g.site_probability(n) * f(x, n);
    out *= s;
  }
  return out;
}

// Tr(e^{-mu N} O) / Tr(e^{-mu N}) on a finite basis.
inline cplx truncated_trace_expectation(const SparseMat& o, const ConfigBasis& basis, double mu) {
  double z = 0.0;
  cplx acc = 0.0;
  for (std::size_t j = 0; j < basis.dim(); ++j) {
    const double w = std::exp(-mu * basis.config(j).sum());
    z += w;
    acc += w * o.coeff(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(j));
  }
  return acc / z;
}

struct ChiSquareResult {
  double statistic = 0.0;
  int dof = 0;
  double p_value = 0.0;
};

// Histogram of single-site draws against the sampler's law; bins with expected
// count below 5 are pooled into the tail.
inline ChiSquareResult chi_square_site_law(const GibbsSampler& g, std::size_t draws, std::uint64_t seed) {
  auto rng = stream_rng(seed, 0);
  std::vector<std::size_t> counts;
  for (std::size_t i = 0; i < draws; ++i) {
    const auto n = static_cast<std::size_t>(g.sample_site(rng));
    if (n >= counts.size()) counts.resize(n + 1, 0);
    ++counts[n];
  }
  const double total = static_cast<double>(draws);
  ChiSquareResult r;
  int bins = 0;
  double tail_p = 1.0;
  std::size_t tail_count = draws;
  for (std::size_t n = 0;; ++n) {
    const double p = g.site_probability(static_cast<int>(n));
    if (p * total < 5.0 || tail_p - p <= 0.0) break;
    const double obs = n < counts.size() ? static_cast<double>(counts[n]) : 0.0;
    r.statistic += (obs - p * total) * (obs - p * total) / (p * total);
    tail_p -= p;
    tail_count -= static_cast<std::size_t>(obs);
    ++bins;
  }
  if (tail_p * total > 0.0) {
    const double e = tail_p * total;
    r.statistic += (static_cast<double>(tail_count) - e) * (static_cast<double>(tail_count) - e) / e;
    ++bins;
  }
  r.dof = std::max(1, bins - 1);
  boost::math::chi_squared dist(r.dof);
  r.p_value = boost::math::cdf(boost::math::complement(dist, r.statistic));
  return r;
}

}  // namespace bhkam

#endif  // BHKAM_GIBBS_HPP
