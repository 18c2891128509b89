#ifndef BHKAM_SERIES_HPP
#define BHKAM_SERIES_HPP

#include <cmath>
#include <vector>

#include "bhkam/class_s.hpp"

namespace bhkam {

// Truncated power series sum_{k<=order} mu^k Y^(k).
class FormalSeries {
 public:
  FormalSeries() = default;
  FormalSeries(int sites, int order) : sites_(sites), coeffs_(static_cast<std::size_t>(order + 1), ClassSOperator(sites)) {}
  explicit FormalSeries(std::vector<ClassSOperator> coeffs)
      : sites_(coeffs.empty() ? 0 : coeffs.front().sites()), coeffs_(std::move(coeffs)) {}

  int order() const { return static_cast<int>(coeffs_.size()) - 1; }
  int sites() const { return sites_; }
  const ClassSOperator& operator[](int k) const { return coeffs_[static_cast<std::size_t>(k)]; }
  ClassSOperator& operator[](int k) { return coeffs_[static_cast<std::size_t>(k)]; }
  const std::vector<ClassSOperator>& coefficients() const { return coeffs_; }

  FormalSeries truncated(int l) const {
    FormalSeries out(sites_, l);
    for (int k = 0; k <= std::min(l, order()); ++k) out[k] = (*this)[k];
    return out;
  }

  friend FormalSeries operator+(const FormalSeries& a, const FormalSeries& b) {
    FormalSeries out(std::max(a.sites_, b.sites_), std::max(a.order(), b.order()));
    for (int k = 0; k <= out.order(); ++k) {
      if (k <= a.order()) out[k] = out[k] + a[k];
      if (k <= b.order()) out[k] = out[k] + b[k];
    }
    return out;
  }

  FormalSeries scaled(cplx c) const {
    FormalSeries out(sites_, order());
    for (int k = 0; k <= order(); ++k) out[k] = (*this)[k].scaled(c);
    return out;
  }

 private:
  int sites_ = 0;
  std::vector<ClassSOperator> coeffs_;
};

// Coefficientwise commutator, truncated at order l.
inline FormalSeries series_commutator(const FormalSeries& a, const FormalSeries& b, int l,
                                      const AlgebraOptions& opt = {}) {
  FormalSeries out(std::max(a.sites(), b.sites()), l);
  for (int i = 0; i <= a.order(); ++i)
    for (int j = 0; j <= b.order() && i + j <= l; ++j) {
      if (a[i].empty() || b[j].empty()) continue;
      out[i + j] = out[i + j] + commutator(a[i], b[j], opt);
    }
  for (int k = 0; k <= l; ++k) out[k] = out[k].normalized();
  return out;
}

// Matrix of sum_k mu^k Y^(k) on the basis.
inline OperatorMatrix series_matrix(const FormalSeries& y, double mu, const BasisPtr& basis) {
  OperatorMatrix out;
  out.basis = basis;
  out.data.resize(static_cast<Eigen::Index>(basis->dim()), static_cast<Eigen::Index>(basis->dim()));
  for (int k = 0; k <= y.order(); ++k) {
    if (y[k].empty()) continue;
    auto m = to_matrix(y[k], basis);
    out.data += m.data * cplx(std::pow(mu, k), 0.0);
    out.truncation_loss += m.truncation_loss;
  }
  return out;
}

}  // namespace bhkam

#endif  // BHKAM_SERIES_HPP
