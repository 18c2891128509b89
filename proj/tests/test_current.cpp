#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "bhkam/current.hpp"

using namespace bhkam;

namespace {

ModelParams params(double mu = 0.3, double g = 1.0) {
  ModelParams p;
  p.delta = mu;
  p.mu = mu;
  p.g = g;
  p.gamma = 0.75;
  return p;
}

GeometryParams geometry(double delta, double L = 64.0) {
  GeometryParams gp;
  gp.L = L;
  gp.delta = delta;
  gp.gamma = 0.75;
  gp.n2 = 2;
  gp.n3 = 1;
  gp.r = 1;
  return gp;
}

// Smooth, configuration-dependent stand-in for the zone indicators, so that
// every weight varies with eta.
ThetaField wavy_theta(int n, int a, int n3) {
  ThetaField f;
  f.a = a;
  f.sites = ChainGeometry(n).ball(a, n3);
  f.window = Window{0, n - 1};
  f.values = [sites = f.sites, n](const SiteVector& eta) {
    std::vector<double> th;
    for (int y : sites) {
      const double nb = y + 1 < n ? eta[y + 1] : 0.0;
      th.push_back(0.5 + 0.5 * std::cos(1.3 * eta[y] + 0.7 * nb + y));
    }
    return th;
  };
  return f;
}

SparseMat diag_matrix(const BasisPtr& basis, const std::function<double(const OccupationConfig&)>& f) {
  std::vector<Triplet> t;
  for (std::size_t j = 0; j < basis->dim(); ++j)
    t.emplace_back(static_cast<int>(j), static_cast<int>(j), cplx(f(basis->config(j)), 0.0));
  SparseMat m(static_cast<Eigen::Index>(basis->dim()), static_cast<Eigen::Index>(basis->dim()));
  m.setFromTriplets(t.begin(), t.end());
  return m;
}

SparseMat mat(const ClassSOperator& f, const BasisPtr& b) { return to_matrix(f, b).data; }

}  // namespace

TEST(SplitWeights, ExtremeBranches) {
  const std::vector<int> sites{1, 2, 3};
  auto all_one = split_weights(2, sites, {1.0, 1.0, 1.0});
  EXPECT_DOUBLE_EQ(all_one.at(2), 1.0);
  EXPECT_DOUBLE_EQ(all_one.at(1), 0.0);
  EXPECT_DOUBLE_EQ(all_one.at(3), 0.0);
  EXPECT_DOUBLE_EQ(all_one.star, 0.0);
  auto all_zero = split_weights(2, sites, {0.0, 0.0, 0.0});
  EXPECT_DOUBLE_EQ(all_zero.star, 1.0);
  for (int x : sites) EXPECT_DOUBLE_EQ(all_zero.at(x), 0.0);
}

TEST(SplitWeights, HandWorkedRationalExample) {
  // Pi = 1/8, prod(1 - theta) = 0, sum = 7/4, so N = 1/8 + 7/8 * 7/4 = 53/32.
  auto w = split_weights(1, {0, 1, 2}, {0.5, 0.25, 1.0});
  EXPECT_NEAR(w.norm, 53.0 / 32.0, 1e-15);
  EXPECT_NEAR(w.at(0), 14.0 / 53.0, 1e-15);
  EXPECT_NEAR(w.at(1), 11.0 / 53.0, 1e-15);
  EXPECT_NEAR(w.at(2), 28.0 / 53.0, 1e-15);
  EXPECT_NEAR(w.star, 0.0, 1e-15);
}

TEST(SplitWeights, PartitionOfUnityOnRandomThetas) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::bernoulli_distribution pin(0.2);
  for (int trial = 0; trial < 1000; ++trial) {
    const int k = 1 + trial % 5;
    std::vector<int> sites;
    std::vector<double> th;
    for (int i = 0; i < k; ++i) {
      sites.push_back(i);
      th.push_back(pin(rng) ? static_cast<double>(trial % 2) : u(rng));
    }
    auto w = split_weights(k / 2, sites, th);
    EXPECT_NEAR(w.total(), 1.0, 1e-12);
    EXPECT_GE(w.norm, 1.0 - 1e-15);
    for (double v : w.vartheta) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
    EXPECT_GE(w.star, 0.0);
    EXPECT_LE(w.star, 1.0);
  }
}

TEST(Decomposition, PrescribedOrders) {
  EXPECT_EQ(prescribed_n1(1, 0.75), 9);
  EXPECT_EQ(prescribed_n2(1, 0.75), 48);
  EXPECT_EQ(locality_radius(48, 1, 1), 58);
}

TEST(Current, VanishesWithoutHopping) {
  auto basis = ConfigBasis::particle_sector(3, 6);
  EXPECT_EQ(max_abs(reduced_current(params(0.3, 0.0), basis, 0).data), 0.0);
  EXPECT_EQ(max_abs(physical_current(params(0.3, 0.0), basis, 1).data), 0.0);
}

TEST(Current, ReducedIsRescaledPhysical) {
  auto basis = ConfigBasis::box(TruncatedFockSpace(ChainGeometry(3), 6));
  for (double mu : {0.1, 0.3}) {
    const auto p = params(mu, 0.7);
    for (int a = 0; a < 2; ++a) {
      const SparseMat j = reduced_current(p, basis, a).data;
      const SparseMat big = physical_current(p, basis, a).data;
      EXPECT_LE(max_abs(SparseMat(j - big * cplx(std::pow(mu, 4), 0.0))), 1e-12);
      EXPECT_GT(max_abs(big), 0.0);
    }
  }
}

TEST(Current, ElementsCrossTheBond) {
  auto basis = ConfigBasis::particle_sector(5, 5);
  const int a = 2;
  const auto j = physical_current(params(0.3, 0.8), basis, a);
  for (int k = 0; k < j.data.outerSize(); ++k)
    for (SparseMat::InnerIterator it(j.data, k); it; ++it) {
      if (std::abs(it.value()) < 1e-14) continue;
      const auto d = basis->config(static_cast<std::size_t>(it.row())) - basis->config(static_cast<std::size_t>(it.col()));
      ASSERT_FALSE(d.is_zero());
      for (int x : d.support()) {
        EXPECT_GE(x, a);
        EXPECT_LE(x, a + 2);
      }
      EXPECT_TRUE(d[a] != 0 || d[a + 1] != 0);
    }
}

TEST(Split, SumsToResonantHamiltonian) {
  const auto p = params();
  KamState s(4, 2, p);
  auto basis = ConfigBasis::particle_sector(4, 5);
  const SparseMat h = series_matrix(s.htilde_series(), p.mu, basis).data;
  for (const ThetaField& f : {wavy_theta(4, 1, 1), constant_theta_field(4, 1, 1, 0.0),
                              constant_theta_field(4, 2, 1, 1.0)}) {
    const auto split = split_resonant_hamiltonian(s, SplitWeightField(f));
    const SparseMat sum = series_matrix(split.left, p.mu, basis).data + series_matrix(split.right, p.mu, basis).data;
    EXPECT_LE(max_abs(SparseMat(sum - h)), 1e-12);
  }
}

TEST(Split, ExtremeFieldsGivePlainSplit) {
  const auto p = params();
  KamState s(4, 1, p);
  auto basis = ConfigBasis::particle_sector(4, 6);
  for (double value : {0.0, 1.0}) {
    const int a = 1;
    const auto split = split_resonant_hamiltonian(s, SplitWeightField(constant_theta_field(4, a, 1, value)));
    for (int k = 0; k <= 1; ++k) {
      const SparseMat plain = mat(s.htilde(k).origin_range(a + 1, 3), basis);
      EXPECT_LE(max_abs(SparseMat(mat(split.right[k], basis) - plain)), 1e-14);
    }
  }
}

TEST(Split, MatchesIndependentAssembly) {
  const auto p = params();
  const int n = 4, a = 1;
  KamState s(n, 1, p);
  auto basis = ConfigBasis::particle_sector(n, 6);
  const ThetaField f = wavy_theta(n, a, 1);
  const auto split = split_resonant_hamiltonian(s, SplitWeightField(f));
  // Right partial sums of the local terms as matrices, times diagonal weight matrices.
  auto partial = [&](int from) {
    SparseMat m(static_cast<Eigen::Index>(basis->dim()), static_cast<Eigen::Index>(basis->dim()));
    for (int y = from; y < n; ++y) m += series_matrix(s.htilde_local(y), p.mu, basis).data;
    return m;
  };
  auto weights = [&](const OccupationConfig& eta) { return split_weights(a, f.sites, f.values(eta)); };
  SparseMat expected = partial(a + 1) * diag_matrix(basis, [&](const OccupationConfig& e) { return weights(e).star; });
  for (int x : f.sites)
    expected += partial(x + 1) * diag_matrix(basis, [&](const OccupationConfig& e) { return weights(e).at(x); });
  EXPECT_LE(max_abs(SparseMat(series_matrix(split.right, p.mu, basis).data - expected)), 1e-12);
  // Right multiplication by a varying weight breaks self-adjointness.
  EXPECT_GT(hermiticity_defect(expected), 1e-3);
}

TEST(Decomposition, IdentityOnZoneWeights) {
  const auto p = params();
  const int n = 4, a = 1;
  KamState s(n, 1, p);
  SplitWeightField w(zone_theta_field(n, a, geometry(p.delta)));
  auto basis = ConfigBasis::particle_sector(n, 6);
  const auto dec = build_decomposition(s, w, basis);
  EXPECT_LE(dec.identity_residual, 1e-9);
  EXPECT_GT(max_abs(dec.j_hat.data), 1e-3);
  EXPECT_GT(max_abs(dec.u_hat.data), 1e-3);
  EXPECT_LE(dec.u_hermiticity_defect, 1e-12);
  EXPECT_LE(dec.g_hermiticity_defect, 1e-12);
  EXPECT_EQ(dec.n1_prescribed, 9);
  EXPECT_EQ(dec.n2_prescribed, 48);
  EXPECT_LE(matrix_support_radius(dec.u_hat, a), dec.radius());
  EXPECT_LE(matrix_support_radius(dec.g_hat, a), dec.radius());
  // The constant shift makes the diagonal average of u_a vanish.
  const auto mean = mc_first_moment(dec.u_op, p.mu, 20000, 3, 2);
  EXPECT_LE(std::abs(mean.value), 3.0 * mean.stderr_ + 1e-12);
  const auto g = mc_first_moment(dec.g_op, p.mu, 20000, 4, 2);
  EXPECT_LE(std::abs(g.value), 3.0 * g.stderr_ + 1e-12);
}

TEST(Decomposition, IdentityOnVaryingWeights) {
  const auto p = params(0.25, 0.8);
  const int n = 4, a = 1;
  KamState s(n, 1, p);
  SplitWeightField w(wavy_theta(n, a, 1));
  auto basis = ConfigBasis::particle_sector(n, 5);
  const auto dec = build_decomposition(s, w, basis);
  EXPECT_LE(dec.identity_residual, 1e-9);
  EXPECT_GT(dec.u_hermiticity_defect, 1e-6);
}

TEST(Decomposition, VanishesWithoutHopping) {
  const auto p = params(0.3, 0.0);
  const int n = 4, a = 1;
  KamState s(n, 1, p);
  SplitWeightField w(zone_theta_field(n, a, geometry(p.delta)));
  auto basis = ConfigBasis::particle_sector(n, 5);
  const auto dec = build_decomposition(s, w, basis);
  EXPECT_LE(max_abs(dec.u_hat.data), 1e-14);
  EXPECT_LE(max_abs(dec.g_hat.data), 1e-14);
}

TEST(Decomposition, GibbsDiagonalAverageClosedForms) {
  const double mu = 0.4;
  const double q = std::exp(-mu);
  const int n = 3;
  ClassSOperator f(n);
  f.add(Move(n), DiagNode::leaf(Window::single(1), [](const SiteVector& e) { return cplx(1.0 * e[1] * e[1], 0.0); }));
  const auto sq = gibbs_diagonal_average(f, mu);
  EXPECT_FALSE(sq.sampled);
  EXPECT_NEAR(sq.value, q * (1.0 + q) / ((1.0 - q) * (1.0 - q)), 1e-9);
  EXPECT_LE(sq.truncation_loss, 1e-12);
  ClassSOperator g(n);
  g.add(Move(n), DiagNode::leaf(Window{0, 1}, [](const SiteVector& e) { return cplx(1.0 * e[0] * e[1], 0.0); }));
  const double mean = q / (1.0 - q);
  EXPECT_NEAR(gibbs_diagonal_average(g, mu).value, mean * mean, 1e-9);
  // Off-diagonal pieces do not contribute.
  ClassSOperator h(n);
  h.add(hop(n, 0), diag_constant(1.0));
  EXPECT_EQ(gibbs_diagonal_average(h, mu).value, 0.0);
}

TEST(Cancellation, FarFromResonancesIsExactlyZero) {
  const auto p = params();
  const int n = 4, a = 1;
  KamState s(n, 1, p);
  const auto gp = geometry(p.delta);
  SplitWeightField w(zone_theta_field(n, a, gp));
  const auto split = split_resonant_hamiltonian(s, w);
  const ExceptionalSet z(n, a, gp);
  // Widely separated, well spread occupations keep every local energy
  // difference far outside the cutoff.
  const std::vector<OccupationConfig> far{{100000, 1400000, 4100000, 8300000}, {9000000, 2500000, 300000, 6200000}};
  for (const auto& eta : far) {
    // Every theta_y is 1, so the weight sits on the bond site alone.
    const auto sw = w.at(eta);
    EXPECT_DOUBLE_EQ(sw.at(a), 1.0);
    EXPECT_DOUBLE_EQ(sw.star, 0.0);
  }
  const auto rep = verify_cancellation(s, w, split, z, far, 1, 1e-12);
  EXPECT_EQ(rep.restricted_checks, 2u);
  EXPECT_EQ(rep.restricted_violations, 0u);
  EXPECT_EQ(rep.nonzero, 0u);
}

TEST(Cancellation, GibbsViolationsLieInExceptionalSet) {
  const auto p = params();
  const int n = 5, a = 2;
  KamState s(n, 1, p);
  const auto gp = geometry(p.delta);
  SplitWeightField w(zone_theta_field(n, a, gp));
  const auto split = split_resonant_hamiltonian(s, w);
  const ExceptionalSet z(n, a, gp);
  const auto configs = gibbs_configs(GibbsSampler(p.mu), n, 300, 17);
  const auto rep = verify_cancellation(s, w, split, z, configs, 2);
  EXPECT_EQ(rep.samples, 300u);
  EXPECT_GT(rep.nonzero, 0u);
  EXPECT_EQ(rep.exceptions, 0u);
  EXPECT_EQ(rep.restricted_violations, 0u);
}

TEST(Scaling, ProbabilitiesAreProbabilities) {
  const auto res = probability_scalings(4, 1, geometry(0.2), {0.2, 0.4}, 200, 1.0, 5, 2);
  ASSERT_EQ(res.rows.size(), 2u);
  for (const auto& r : res.rows) {
    EXPECT_GE(r.w.value, 0.0);
    EXPECT_LE(r.w.value, 1.0);
    EXPECT_GE(r.z_s.value, 0.0);
    EXPECT_LE(r.z_s.value, 1.0);
  }
  EXPECT_DOUBLE_EQ(res.predicted_w, 0.25);
  EXPECT_DOUBLE_EQ(res.predicted_z, 0.5);
}
