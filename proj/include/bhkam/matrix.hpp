#ifndef BHKAM_MATRIX_HPP
#define BHKAM_MATRIX_HPP

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cmath>
#include <fstream>
#include <iomanip>
#include <memory>
#include <ostream>
#include <string>
#include <unordered_map>
#include <vector>

#include "bhkam/lattice.hpp"

namespace bhkam {

using SparseMat = Eigen::SparseMatrix<cplx, Eigen::ColMajor>;
using DenseMat = Eigen::MatrixXcd;
using Triplet = Eigen::Triplet<cplx>;

// Ordered set of occupation configurations with a reverse index. Either the
// full box {0..n_max}^N or a particle-number sector sum(eta) <= n_total.
class ConfigBasis {
 public:
  ConfigBasis(int sites, std::vector<OccupationConfig> configs) : sites_(sites), configs_(std::move(configs)) {
    index_.reserve(configs_.size());
    for (std::size_t i = 0; i < configs_.size(); ++i) index_.emplace(configs_[i], static_cast<long>(i));
  }

  static std::shared_ptr<const ConfigBasis> box(const TruncatedFockSpace& space) {
    return std::make_shared<const ConfigBasis>(space.sites(), enumerate_configs(space));
  }

  // All eta with sum(eta) <= n_total, in lexicographic order. Every
  // particle-conserving operator maps this set into itself, so products of
  // such operators are represented without truncation error.
  static std::shared_ptr<const ConfigBasis> particle_sector(int sites, int n_total,
                                                            std::size_t limit = kDefaultSpaceLimit) {
    std::vector<OccupationConfig> out;
    OccupationConfig eta(sites);
    std::function<void(int, int)> rec = [&](int x, int left) {
      if (x == sites) {
        if (out.size() >= limit) throw CapacityError("particle sector exceeds limit");
        out.push_back(eta);
        return;
      }
      for (int n = 0; n <= left; ++n) {
        eta[x] = n;
        rec(x + 1, left - n);
      }
      eta[x] = 0;
    };
    rec(0, n_total);
    return std::make_shared<const ConfigBasis>(sites, std::move(out));
  }

  int sites() const { return sites_; }
  std::size_t dim() const { return configs_.size(); }
  const OccupationConfig& config(std::size_t i) const { return configs_[i]; }
  const std::vector<OccupationConfig>& configs() const { return configs_; }
  // -1 when absent.
  long index_of(const OccupationConfig& eta) const {
    auto it = index_.find(eta);
    return it == index_.end() ? -1 : it->second;
  }

 private:
  int sites_;
  std::vector<OccupationConfig> configs_;
  std::unordered_map<OccupationConfig, long, SiteVectorHash> index_;
};

using BasisPtr = std::shared_ptr<const ConfigBasis>;

enum class Symmetry { none, hermitian, antihermitian };

inline constexpr std::size_t kDenseThreshold = 20000;

struct OperatorMatrix {
  BasisPtr basis;
  SparseMat data;
  Symmetry symmetry = Symmetry::none;
  // Nonzero elements that would have left the basis.
  std::size_t truncation_loss = 0;
  double truncation_weight = 0.0;

  std::size_t dim() const { return basis ? basis->dim() : 0; }
  DenseMat dense() const {
    if (dim() > kDenseThreshold) throw CapacityError("dense realization above threshold");
    return DenseMat(data);
  }
  cplx element(std::size_t row, std::size_t col) const {
    return data.coeff(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(col));
  }
};

inline double max_abs(const SparseMat& m) {
  double v = 0.0;
  for (int k = 0; k < m.outerSize(); ++k)
    for (SparseMat::InnerIterator it(m, k); it; ++it) v = std::max(v, std::abs(it.value()));
  return v;
}

inline double max_abs(const DenseMat& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

inline double hermiticity_defect(const SparseMat& m) {
  SparseMat a = SparseMat(m.adjoint());
  return max_abs(SparseMat(m - a));
}

inline double skewness_defect(const SparseMat& m) {
  SparseMat a = SparseMat(m.adjoint());
  return max_abs(SparseMat(m + a));
}

// Consistency of the declared symmetry flag with the data.
inline bool symmetry_consistent(const OperatorMatrix& op, double tol = 1e-12) {
  switch (op.symmetry) {
    case Symmetry::hermitian: return hermiticity_defect(op.data) <= tol;
    case Symmetry::antihermitian: return skewness_defect(op.data) <= tol;
    case Symmetry::none: return true;
  }
  return true;
}

inline SparseMat commutator(const SparseMat& a, const SparseMat& b) {
  return SparseMat(a * b) - SparseMat(b * a);
}

// Largest |m_ij| restricted to rows and columns flagged in mask.
struct MaxLocation {
  double value = 0.0;
  long row = -1;
  long col = -1;
};

inline MaxLocation max_abs_on(const SparseMat& m, const std::vector<char>& mask) {
  MaxLocation best;
  for (int k = 0; k < m.outerSize(); ++k) {
    if (!mask[static_cast<std::size_t>(k)]) continue;
    for (SparseMat::InnerIterator it(m, k); it; ++it) {
      if (!mask[static_cast<std::size_t>(it.row())]) continue;
      const double a = std::abs(it.value());
      if (a > best.value) best = {a, static_cast<long>(it.row()), static_cast<long>(k)};
    }
  }
  return best;
}

// Configurations whose occupations all stay <= n_max - margin.
inline std::vector<char> buffered_mask(const ConfigBasis& basis, int n_max, int margin) {
  std::vector<char> mask(basis.dim(), 0);
  for (std::size_t i = 0; i < basis.dim(); ++i) mask[i] = basis.config(i).max_entry() <= n_max - margin;
  return mask;
}

inline std::vector<char> full_mask(const ConfigBasis& basis) { return std::vector<char>(basis.dim(), 1); }

// Bose-Hubbard Hamiltonian H = sum_x N_x^2 + g sum_{x<N-1} (a*_x a_{x+1} + a_x a*_{x+1}),
// assembled from ladder actions. Hops leaving the basis are tallied as losses.
inline OperatorMatrix build_hopping_model(const BasisPtr& basis, double onsite_scale, double hop_scale) {
  const int n = basis->sites();
  std::vector<Triplet> trip;
  std::size_t loss = 0;
  for (std::size_t j = 0; j < basis->dim(); ++j) {
    const auto& eta = basis->config(j);
    trip.emplace_back(static_cast<int>(j), static_cast<int>(j), cplx(onsite_scale * onsite_energy(eta), 0.0));
    if (hop_scale == 0.0) continue;
    for (int x = 0; x + 1 < n; ++x) {
      for (int dir = 0; dir < 2; ++dir) {
        const int from = dir == 0 ? x + 1 : x;
        const int to = dir == 0 ? x : x + 1;
        auto a = apply_ladder(eta, from, Ladder::annihilate);
        if (a.amplitude == 0.0) continue;
        auto c = apply_ladder(a.config, to, Ladder::create);
        const long i = basis->index_of(c.config);
        if (i < 0) {
          ++loss;
          continue;
        }
        trip.emplace_back(static_cast<int>(i), static_cast<int>(j), cplx(hop_scale * a.amplitude * c.amplitude, 0.0));
      }
    }
  }
  OperatorMatrix m;
  m.basis = basis;
  m.data.resize(static_cast<Eigen::Index>(basis->dim()), static_cast<Eigen::Index>(basis->dim()));
  m.data.setFromTriplets(trip.begin(), trip.end());
  m.data.makeCompressed();
  m.symmetry = Symmetry::hermitian;
  m.truncation_loss = loss;
  return m;
}

inline OperatorMatrix build_bose_hubbard(const ModelParams& p, const BasisPtr& basis) {
  return build_hopping_model(basis, 1.0, p.g);
}

// h = d + mu v with d = delta^2 sum eta_x^2 and v = g delta sum (a*_x a_{x+1} + h.c.).
inline OperatorMatrix build_reduced_hamiltonian(const ModelParams& p, const BasisPtr& basis) {
  return build_hopping_model(basis, p.delta * p.delta, p.mu * p.g * p.delta);
}

// Site-restricted pieces of the physical Hamiltonian: H_x = N_x^2 + g(a*_x a_{x+1} + h.c.).
inline OperatorMatrix build_local_energy(const ModelParams& p, const BasisPtr& basis, int x, double onsite_scale = 1.0,
                                         double hop_scale = -1.0) {
  if (hop_scale < 0.0) hop_scale = p.g;
  const int n = basis->sites();
  std::vector<Triplet> trip;
  for (std::size_t j = 0; j < basis->dim(); ++j) {
    const auto& eta = basis->config(j);
    trip.emplace_back(static_cast<int>(j), static_cast<int>(j),
                      cplx(onsite_scale * static_cast<double>(eta[x]) * eta[x], 0.0));
    if (x + 1 >= n || hop_scale == 0.0) continue;
    for (int dir = 0; dir < 2; ++dir) {
      const int from = dir == 0 ? x + 1 : x;
      const int to = dir == 0 ? x : x + 1;
      auto a = apply_ladder(eta, from, Ladder::annihilate);
      if (a.amplitude == 0.0) continue;
      auto c = apply_ladder(a.config, to, Ladder::create);
      const long i = basis->index_of(c.config);
      if (i < 0) continue;
      trip.emplace_back(static_cast<int>(i), static_cast<int>(j), cplx(hop_scale * a.amplitude * c.amplitude, 0.0));
    }
  }
  OperatorMatrix m;
  m.basis = basis;
  m.data.resize(static_cast<Eigen::Index>(basis->dim()), static_cast<Eigen::Index>(basis->dim()));
  m.data.setFromTriplets(trip.begin(), trip.end());
  m.symmetry = Symmetry::hermitian;
  return m;
}

// H_{>a} = sum_{x>a} H_x.
inline OperatorMatrix build_right_energy(const ModelParams& p, const BasisPtr& basis, int a, double onsite_scale = 1.0,
                                         double hop_scale = -1.0) {
  OperatorMatrix total;
  total.basis = basis;
  total.data.resize(static_cast<Eigen::Index>(basis->dim()), static_cast<Eigen::Index>(basis->dim()));
  for (int x = a + 1; x < basis->sites(); ++x)
    total.data += build_local_energy(p, basis, x, onsite_scale, hop_scale).data;
  total.symmetry = Symmetry::hermitian;
  return total;
}

inline OperatorMatrix build_number_operator(const BasisPtr& basis, int x) {
  std::vector<Triplet> trip;
  for (std::size_t j = 0; j < basis->dim(); ++j) {
    const auto& eta = basis->config(j);
    const double n = x < 0 ? eta.sum() : eta[x];
    trip.emplace_back(static_cast<int>(j), static_cast<int>(j), cplx(n, 0.0));
  }
  OperatorMatrix m;
  m.basis = basis;
  m.data.resize(static_cast<Eigen::Index>(basis->dim()), static_cast<Eigen::Index>(basis->dim()));
  m.data.setFromTriplets(trip.begin(), trip.end());
  m.symmetry = Symmetry::hermitian;
  return m;
}

inline OperatorMatrix build_ladder_matrix(const BasisPtr& basis, int x, Ladder kind) {
  std::vector<Triplet> trip;
  std::size_t loss = 0;
  for (std::size_t j = 0; j < basis->dim(); ++j) {
    auto r = apply_ladder(basis->config(j), x, kind);
    if (r.amplitude == 0.0) continue;
    const long i = basis->index_of(r.config);
    if (i < 0) {
      ++loss;
      continue;
    }
    trip.emplace_back(static_cast<int>(i), static_cast<int>(j), cplx(r.amplitude, 0.0));
  }
  OperatorMatrix m;
  m.basis = basis;
  m.data.resize(static_cast<Eigen::Index>(basis->dim()), static_cast<Eigen::Index>(basis->dim()));
  m.data.setFromTriplets(trip.begin(), trip.end());
  m.truncation_loss = loss;
  return m;
}

// Coordinate listing: row,col,re,im with 17 significant digits.
inline void write_coordinate_csv(std::ostream& os, const OperatorMatrix& m) {
  os << "row,col,re,im\n" << std::setprecision(17);
  for (int k = 0; k < m.data.outerSize(); ++k)
    for (SparseMat::InnerIterator it(m.data, k); it; ++it)
      os << it.row() << ',' << it.col() << ',' << it.value().real() << ',' << it.value().imag() << '\n';
}

}  // namespace bhkam

#endif  // BHKAM_MATRIX_HPP
