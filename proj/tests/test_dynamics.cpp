#include <gtest/gtest.h>

#include <cmath>
#include <unsupported/Eigen/MatrixFunctions>

#include "bhkam/dynamics.hpp"

using namespace bhkam;

namespace {

BasisPtr box(int n, int n_max) { return ConfigBasis::box(TruncatedFockSpace(ChainGeometry(n), n_max)); }

ModelParams physical(double g) {
  ModelParams p;
  p.g = g;
  return p;
}

// e^{iHt} O e^{-iHt} by the dense matrix exponential.
DenseMat expm_evolve(const SparseMat& h, const SparseMat& o, double t) {
  const DenseMat gen = DenseMat(h) * cplx(0.0, t);
  const DenseMat u = gen.exp();
  return u * DenseMat(o) * u.adjoint();
}

// Tr(e^{-mu N} A) / Tr(e^{-mu N}) for a dense A.
double trace_average(const DenseMat& a, const ConfigBasis& basis, double mu) {
  double z = 0.0;
  cplx acc = 0.0;
  for (std::size_t j = 0; j < basis.dim(); ++j) {
    const double w = std::exp(-mu * basis.config(j).sum());
    z += w;
    acc += w * a(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(j));
  }
  return (acc / z).real();
}

}  // namespace

TEST(Evolution, MatchesMatrixExponential) {
  auto basis = box(3, 3);
  const auto h = build_bose_hubbard(physical(0.4), basis);
  const SpectralEvolver ev(h);
  const SparseMat o = build_local_energy(physical(0.4), basis, 1).data;
  for (double t : {0.3, 1.7, 6.0}) {
    EXPECT_LE(max_abs(DenseMat(ev.evolve(o, t) - expm_evolve(h.data, o, t))), 1e-8) << "t=" << t;
    EXPECT_LE(ev.unitarity_defect(t), 1e-9);
  }
  const auto via_free = evolve_heisenberg(OperatorMatrix{basis, o, Symmetry::hermitian, 0, 0.0}, h, 1.7);
  EXPECT_LE(max_abs(DenseMat(DenseMat(via_free.data) - expm_evolve(h.data, o, 1.7))), 1e-8);
}

TEST(Evolution, TrivialCases) {
  auto basis = box(3, 4);
  const auto h = build_bose_hubbard(physical(0.6), basis);
  const SpectralEvolver ev(h);
  const SparseMat o = build_number_operator(basis, 0).data;
  EXPECT_LE(max_abs(DenseMat(ev.evolve(o, 0.0) - DenseMat(o))), 1e-12);
  for (double t : {0.5, 20.0}) EXPECT_LE(max_abs(DenseMat(ev.evolve(h.data, t) - DenseMat(h.data))), 1e-10);
}

TEST(Evolution, RejectsNonConservingObservables) {
  auto basis = box(2, 3);
  const SpectralEvolver ev(build_bose_hubbard(physical(0.5), basis));
  const SparseMat a = build_ladder_matrix(basis, 0, Ladder::annihilate).data;
  EXPECT_THROW(ev.evolve(a, 1.0), ConfigError);
}

TEST(Evolution, GibbsStateIsStationary) {
  auto basis = box(3, 4);
  const auto h = build_bose_hubbard(physical(0.7), basis);
  const SpectralEvolver ev(h);
  const SparseMat o = build_local_energy(physical(0.7), basis, 0).data;
  const double mu = 0.4;
  const double at0 = trace_average(DenseMat(o), *basis, mu);
  EXPECT_NEAR(ev.expectation(o, mu), at0, 1e-10);
  for (double t : {1.0, 9.0}) EXPECT_NEAR(trace_average(ev.evolve(o, t), *basis, mu), at0, 1e-10);
  // Energy conservation of the Gibbs-weighted total energy.
  EXPECT_NEAR(trace_average(ev.evolve(h.data, 30.0), *basis, mu), trace_average(DenseMat(h.data), *basis, mu), 1e-8);
}

TEST(Evolution, DriftMatchesDirectEvaluation) {
  auto basis = box(3, 4);
  const auto h = build_bose_hubbard(physical(0.3), basis);
  const SpectralEvolver ev(h);
  const SparseMat o = build_local_energy(physical(0.3), basis, 1).data;
  const double mu = 0.5;
  for (double t : {0.7, 4.0}) {
    const DenseMat d = expm_evolve(h.data, o, t) - DenseMat(o);
    EXPECT_NEAR(ev.drift(o, mu, t), trace_average(d * d, *basis, mu), 1e-9);
  }
  // Time average against a fine trapezoid rule of the pointwise drift.
  const double horizon = 3.0;
  const int steps = 6000;
  double acc = 0.0;
  for (int i = 0; i <= steps; ++i) {
    const double w = (i == 0 || i == steps) ? 0.5 : 1.0;
    acc += w * ev.drift(o, mu, horizon * i / steps);
  }
  acc /= steps;
  EXPECT_NEAR(ev.drift_time_average(o, mu, horizon), acc, 1e-6 * std::max(1.0, acc));
}

TEST(Expectation, ModesAgree) {
  const double mu = std::log(2.0);
  auto b1 = box(1, 40);
  const auto n0 = build_number_operator(b1, 0);
  EXPECT_NEAR(expectation(n0, mu, ExpectationMode::exact_diagonal).value, 1.0, 1e-9);
  EXPECT_NEAR(expectation(n0, mu, ExpectationMode::truncated_trace).value, 1.0, 1e-9);
  const auto mc = expectation(n0, mu, ExpectationMode::mc, {50000, 5, 2});
  EXPECT_NEAR(mc.value, 1.0, 3.0 * mc.stderr_);
  auto b2 = box(2, 6);
  OperatorMatrix id = build_number_operator(b2, 0);
  id.data.setIdentity();
  for (auto mode : {ExpectationMode::exact_diagonal, ExpectationMode::truncated_trace, ExpectationMode::mc})
    EXPECT_NEAR(expectation(id, 0.3, mode, {1000, 1, 1}).value, 1.0, 1e-12);
}

TEST(Expectation, EnergyWithoutHoppingIsSiteSecondMoment) {
  const double mu = 0.5;
  const int cap = 30;
  auto basis = box(2, cap);
  const auto h = build_bose_hubbard(physical(0.0), basis);
  double num = 0.0, den = 0.0;
  for (int n = 0; n <= cap; ++n) {
    num += std::exp(-mu * n) * n * n;
    den += std::exp(-mu * n);
  }
  EXPECT_NEAR(expectation(h, mu, ExpectationMode::exact_diagonal).value, 2.0 * num / den, 1e-9);
  EXPECT_NEAR(expectation(h, mu, ExpectationMode::truncated_trace).value, 2.0 * num / den, 1e-9);
  EXPECT_THROW(expectation(build_bose_hubbard(physical(0.5), basis), mu, ExpectationMode::exact_diagonal), ConfigError);
}

TEST(Quadrature, AdaptiveSimpson) {
  auto f = [](double x) {
    DenseMat m(1, 2);
    m(0, 0) = std::sin(x);
    m(0, 1) = std::exp(cplx(0.0, 7.0 * x));
    return m;
  };
  const DenseMat r = adaptive_simpson(f, 0.0, M_PI, 1e-10);
  EXPECT_NEAR(r(0, 0).real(), 2.0, 1e-9);
  const cplx exact = (std::exp(cplx(0.0, 7.0 * M_PI)) - 1.0) / cplx(0.0, 7.0);
  EXPECT_LE(std::abs(r(0, 1) - exact), 1e-9);
}

TEST(Nekhoroshev, NoHoppingMeansNoDrift) {
  NekhoroshevConfig c;
  c.sites = 3;
  c.n_max = 5;
  c.a1 = 0;
  c.a2 = 1;
  c.g = 0.0;
  c.mus = {0.3, 0.5};
  c.times = {0.0, 7.0, 50.0};
  const auto r = nekhoroshev_experiment(c);
  EXPECT_EQ(r.max_of("energy_drift"), 0.0);
  EXPECT_EQ(r.max_of("energy_drift_time_average"), 0.0);
  EXPECT_EQ(r.max_of("sum_rule_residual"), 0.0);
  EXPECT_EQ(r.rows.size(), 2u * (2u * 3u + 1u));
}

TEST(Nekhoroshev, SumRule) {
  NekhoroshevConfig c;
  c.sites = 3;
  c.n_max = 5;
  c.a1 = 0;
  c.a2 = 1;
  c.g = 0.3;
  c.times = {0.0, 3.0, 25.0, 50.0};
  const auto r = nekhoroshev_experiment(c);
  EXPECT_LE(r.max_of("sum_rule_residual"), 1e-8);
  EXPECT_GT(r.max_of("energy_drift"), 0.0);
  EXPECT_NEAR(r.cap_weight.at(0.5), std::exp(-0.5 * 6), 1e-15);
}

TEST(IntegratedCurrent, IdentityAndBoundaryBound) {
  IntegratedCurrentConfig c;
  c.sites = 3;
  c.n_total = 5;
  c.model.mu = 0.3;
  c.model.delta = 0.3;
  c.model.g = 1.0;
  c.times = {0.0, 2.0, 6.0};
  const auto r = integrated_current_experiment(c);
  EXPECT_LE(r.max_of("decomposition_residual"), 1e-9);
  EXPECT_LE(r.max_of("integrated_identity_residual"), 1e-7);
  double bound = 0.0;
  for (const auto& row : r.rows)
    if (row.observable == "boundary_bound") bound = row.value;
  EXPECT_GT(bound, 0.0);
  for (const auto& row : r.rows) {
    if (row.observable != "boundary_term") continue;
    EXPECT_LE(row.value, bound * (1.0 + 1e-12));
    if (row.t == 0.0) {
      EXPECT_EQ(row.value, 0.0);
    }
  }
}
