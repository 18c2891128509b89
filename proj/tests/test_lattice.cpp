#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <map>
#include <random>
#include <sstream>

#include "bhkam/matrix.hpp"

using namespace bhkam;

TEST(Enumerate, SingleSite) {
  TruncatedFockSpace space(ChainGeometry(1), 2);
  auto c = enumerate_configs(space);
  ASSERT_EQ(c.size(), 3u);
  EXPECT_EQ(c[0], SiteVector({0}));
  EXPECT_EQ(c[1], SiteVector({1}));
  EXPECT_EQ(c[2], SiteVector({2}));
}

TEST(Enumerate, LexicographicTwoSites) {
  TruncatedFockSpace space(ChainGeometry(2), 1);
  auto c = enumerate_configs(space);
  ASSERT_EQ(c.size(), 4u);
  EXPECT_EQ(c.front(), SiteVector({0, 0}));
  EXPECT_EQ(c[1], SiteVector({0, 1}));
  EXPECT_EQ(c.back(), SiteVector({1, 1}));
}

TEST(Enumerate, CountAndBijection) {
  TruncatedFockSpace space(ChainGeometry(3), 8);
  EXPECT_EQ(space.dim(), 729u);
  for (std::size_t i = 0; i < space.dim(); ++i) EXPECT_EQ(space.index_of(space.config_at(i)), i);
  auto c = enumerate_configs(space);
  EXPECT_TRUE(std::is_sorted(c.begin(), c.end()));
}

TEST(Enumerate, CapacityError) {
  EXPECT_THROW(TruncatedFockSpace(ChainGeometry(10), 9, 1000), CapacityError);
  EXPECT_THROW(ChainGeometry(kMaxSites + 1), CapacityError);
}

TEST(Geometry, CenteredLabels) {
  ChainGeometry g(5);
  EXPECT_EQ(g.centered_label(0), -2);
  EXPECT_EQ(g.centered_label(4), 2);
  EXPECT_EQ(g.from_centered(0), 2);
  EXPECT_FALSE(g.has_right_bond(4));
  EXPECT_TRUE(g.has_right_bond(3));
}

TEST(Ladder, CreateAndAnnihilate) {
  auto r = apply_ladder(SiteVector({2}), 0, Ladder::create);
  EXPECT_DOUBLE_EQ(r.amplitude, std::sqrt(3.0));
  EXPECT_EQ(r.config[0], 3);
  EXPECT_DOUBLE_EQ(apply_ladder(SiteVector({0}), 0, Ladder::annihilate).amplitude, 0.0);
  auto a = apply_ladder(SiteVector({5}), 0, Ladder::annihilate);
  auto c = apply_ladder(a.config, 0, Ladder::create);
  EXPECT_NEAR(a.amplitude * c.amplitude, 5.0, 1e-14);
  EXPECT_THROW(apply_ladder(SiteVector({1}), 3, Ladder::create), ConfigError);
}

TEST(BoseHubbard, Elements) {
  ModelParams p;
  p.g = 0.0;
  auto basis = ConfigBasis::box(TruncatedFockSpace(ChainGeometry(2), 2));
  auto h0 = build_bose_hubbard(p, basis);
  const auto i11 = static_cast<std::size_t>(basis->index_of(SiteVector({1, 1})));
  EXPECT_DOUBLE_EQ(h0.element(i11, i11).real(), 2.0);
  p.g = 1.0;
  auto h1 = build_bose_hubbard(p, basis);
  const auto i01 = static_cast<std::size_t>(basis->index_of(SiteVector({0, 1})));
  const auto i10 = static_cast<std::size_t>(basis->index_of(SiteVector({1, 0})));
  EXPECT_DOUBLE_EQ(h1.element(i01, i10).real(), 1.0);
}

// Independent assembly from ladder matrices on an enlarged box, then
// restricted: the extra headroom makes every product exact on the small box.
TEST(BoseHubbard, SpectrumMatchesLadderProductOracle) {
  ModelParams p;
  p.g = 0.5;
  const int n = 2, nmax = 3;
  auto small = ConfigBasis::box(TruncatedFockSpace(ChainGeometry(n), nmax));
  auto big = ConfigBasis::box(TruncatedFockSpace(ChainGeometry(n), nmax + 2));
  DenseMat hb = DenseMat::Zero(static_cast<Eigen::Index>(big->dim()), static_cast<Eigen::Index>(big->dim()));
  std::vector<DenseMat> a, ad;
  for (int x = 0; x < n; ++x) {
    a.push_back(build_ladder_matrix(big, x, Ladder::annihilate).dense());
    ad.push_back(build_ladder_matrix(big, x, Ladder::create).dense());
  }
  for (int x = 0; x < n; ++x) {
    DenseMat nx = ad[static_cast<std::size_t>(x)] * a[static_cast<std::size_t>(x)];
    hb += nx * nx;
  }
  for (int x = 0; x + 1 < n; ++x)
    hb += p.g * (ad[static_cast<std::size_t>(x)] * a[static_cast<std::size_t>(x + 1)] +
                 a[static_cast<std::size_t>(x)] * ad[static_cast<std::size_t>(x + 1)]);
  // The box is not closed under hopping, so compare the restriction elementwise
  // and the spectra of the restrictions.
  DenseMat hs(static_cast<Eigen::Index>(small->dim()), static_cast<Eigen::Index>(small->dim()));
  for (std::size_t i = 0; i < small->dim(); ++i)
    for (std::size_t j = 0; j < small->dim(); ++j)
      hs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          hb(big->index_of(small->config(i)), big->index_of(small->config(j)));
  DenseMat h = build_bose_hubbard(p, small).dense();
  EXPECT_LE(max_abs(DenseMat(h - hs)), 1e-12);
  Eigen::SelfAdjointEigenSolver<DenseMat> e1(h), e2(hs);
  EXPECT_LE((e1.eigenvalues() - e2.eigenvalues()).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(BoseHubbard, SpectrumAtZeroHopping) {
  ModelParams p;
  p.g = 0.0;
  for (int n = 1; n <= 3; ++n)
    for (int nmax = 0; nmax <= 6; ++nmax) {
      TruncatedFockSpace space(ChainGeometry(n), nmax);
      auto basis = ConfigBasis::box(space);
      Eigen::SelfAdjointEigenSolver<DenseMat> es(build_bose_hubbard(p, basis).dense());
      std::vector<double> expect;
      for (const auto& eta : basis->configs()) expect.push_back(onsite_energy(eta));
      std::sort(expect.begin(), expect.end());
      for (std::size_t i = 0; i < expect.size(); ++i)
        EXPECT_NEAR(es.eigenvalues()(static_cast<Eigen::Index>(i)), expect[i], 1e-10);
    }
}

TEST(Reduced, EqualsScaledBoseHubbardAtDeltaEqualMu) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  for (int t = 0; t < 5; ++t) {
    ModelParams p;
    p.g = 2.0 * u(rng);
    p.mu = u(rng);
    p.delta = p.mu;
    auto basis = ConfigBasis::box(TruncatedFockSpace(ChainGeometry(3), 4));
    auto h = build_reduced_hamiltonian(p, basis).data;
    auto H = build_bose_hubbard(p, basis).data;
    EXPECT_LE(max_abs(SparseMat(h - H * cplx(p.mu * p.mu))), 1e-14);
  }
}

TEST(Reduced, DiagonalAndHermiticity) {
  ModelParams p;
  p.g = 0.0;
  p.delta = 0.5;
  auto basis = ConfigBasis::box(TruncatedFockSpace(ChainGeometry(2), 3));
  auto h = build_reduced_hamiltonian(p, basis);
  const auto i = static_cast<std::size_t>(basis->index_of(SiteVector({2, 0})));
  EXPECT_DOUBLE_EQ(h.element(i, i).real(), 1.0);
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  for (int t = 0; t < 5; ++t) {
    p.g = u(rng);
    p.mu = u(rng);
    p.delta = u(rng);
    auto m = build_reduced_hamiltonian(p, basis);
    EXPECT_LE(hermiticity_defect(m.data), 1e-12);
    EXPECT_TRUE(symmetry_consistent(m));
  }
}

TEST(Commutation, CanonicalOnBufferedSubspace) {
  const int nmax = 4;
  auto basis = ConfigBasis::box(TruncatedFockSpace(ChainGeometry(2), nmax));
  for (int x = 0; x < 2; ++x) {
    for (int y = 0; y < 2; ++y) {
      auto a = build_ladder_matrix(basis, x, Ladder::annihilate).data;
      auto ad = build_ladder_matrix(basis, y, Ladder::create).data;
      SparseMat c = commutator(a, ad);
      if (x == y) {
        SparseMat id(c.rows(), c.cols());
        id.setIdentity();
        c -= id;
        std::vector<char> mask(basis->dim());
        for (std::size_t i = 0; i < basis->dim(); ++i) mask[i] = basis->config(i)[x] <= nmax - 1;
        EXPECT_LE(max_abs_on(c, mask).value, 1e-14);
        EXPECT_GT(max_abs(c), 0.5);  // broken at the cap
      } else {
        EXPECT_LE(max_abs(c), 1e-14);
      }
    }
  }
}

TEST(Commutation, ParticleConservationBuffered) {
  ModelParams p;
  p.g = 0.7;
  const int nmax = 5;
  auto basis = ConfigBasis::box(TruncatedFockSpace(ChainGeometry(3), nmax));
  auto h = build_bose_hubbard(p, basis).data;
  auto n = build_number_operator(basis, -1).data;
  EXPECT_LE(max_abs_on(commutator(h, n), buffered_mask(*basis, nmax, 2)).value, 1e-12);
  EXPECT_LE(max_abs(commutator(h, n)), 1e-12);
}

TEST(Export, CoordinateCsv) {
  ModelParams p;
  p.g = 1.0;
  auto basis = ConfigBasis::box(TruncatedFockSpace(ChainGeometry(2), 1));
  std::ostringstream os;
  write_coordinate_csv(os, build_bose_hubbard(p, basis));
  std::string s = os.str();
  EXPECT_EQ(s.rfind("row,col,re,im\n", 0), 0u);
  EXPECT_NE(s.find("2,1,1,0"), std::string::npos);
}
