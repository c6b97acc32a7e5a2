#include "oracles.hpp"
#include "rrkf/lti_sde.hpp"
#include "rrkf/problems.hpp"

#include <gtest/gtest.h>

using namespace rrkf;

namespace {

/// Solves A S + S A^T + G = 0 by vectorization.
Matrix dense_stationary(const Matrix& a, const Matrix& g) {
  const Index n = a.rows();
  const Matrix id = Matrix::Identity(n, n);
  Matrix big(n * n, n * n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) big.block(i * n, j * n, n, n) = a(i, j) * id + (i == j ? a : Matrix::Zero(n, n));
  // Column-major vec: vec(A S) = (I kron A) vec S, vec(S A^T) = (A kron I) vec S.
  const Eigen::Map<const Vector> gv(g.data(), n * n);
  const Vector sv = big.partialPivLu().solve(-gv);
  return Eigen::Map<const Matrix>(sv.data(), n, n);
}

MaternScenario small_matern(int smoothness, Index points, double ell_x) {
  MaternScenario sc;
  sc.points = uniform_grid(0.0, 1.0, 1.0 / static_cast<double>(points - 1), 1);
  sc.smoothness = smoothness;
  sc.ell_t = 0.7;
  sc.ell_x = ell_x;
  sc.sigma_t = 1.3;
  sc.sigma_x = 0.8;
  sc.noise_std = 0.2;
  sc.dt = 0.1;
  sc.steps = 5;
  sc.seed = 3;
  return sc;
}

}  // namespace

TEST(Advection, ShiftDynamicsAndNormConservation) {
  AdvectionScenario sc;
  sc.n = 128;
  sc.steps = 60;
  sc.seed = 4;
  const Problem p = build_advection(sc);
  const LinearOperator phi = p.transitions->transition(1.0);
  EXPECT_EQ(phi.cost_class(), CostClass::linear);
  for (Index l = 1; l <= sc.steps; ++l) {
    EXPECT_NEAR(p.truth.col(l).norm(), p.truth.col(0).norm(), 1e-12 * p.truth.col(0).norm());
    EXPECT_EQ((phi.apply(Vector(p.truth.col(l - 1))) - p.truth.col(l)).norm(), 0.0);
  }
  EXPECT_TRUE(p.transitions->is_noise_free());
}

TEST(Advection, ObservationSchedule) {
  AdvectionScenario sc;
  sc.n = 100;
  sc.steps = 20;
  const Problem p = build_advection(sc);
  ASSERT_EQ(p.observations.size(), 21u);
  for (std::size_t l = 0; l < p.observations.size(); ++l) {
    EXPECT_EQ(p.observations[l].has_value(), l > 0 && l % 5 == 0) << l;
    EXPECT_DOUBLE_EQ(p.observations[l].time, double(l));
  }
  EXPECT_EQ(p.observations[5].model->dim(), 10);
  EXPECT_EQ(p.observations[5].model->c.to_dense()(3, 30), 1.0);
}

TEST(Advection, InitialCovarianceHasRank51) {
  AdvectionScenario sc;
  sc.n = 200;
  sc.wave_period = 200;
  sc.steps = 1;
  sc.seed = 9;
  const Problem p = build_advection(sc);
  const Matrix cov = p.init_covariance();
  Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
  const Vector ev = eig.eigenvalues().reverse();
  EXPECT_GT(ev(50), 1e-8 * ev(0));
  EXPECT_LT(std::abs(ev(51)), 1e-10 * ev(0));
  EXPECT_LT(oracle::rel_frob(p.init_factor(51).covariance(), cov), 1e-10);
  EXPECT_LT(oracle::rel_frob(p.init_factor(60).covariance(), cov), 1e-10);
  // Sample covariance oracle from explicit members.
  const Matrix members = p.init_ensemble(200, 0);
  const Vector mean = members.rowwise().mean();
  const Matrix c = members.colwise() - mean;
  EXPECT_LT(oracle::rel_frob(c * c.transpose() / 199.0, cov), 1e-10);
  EXPECT_LT((mean - p.init_mean).norm(), 1e-10 * mean.norm());
  // Members are normalized to unit spread over the grid.
  const Vector col = members.col(3);
  const double sd = std::sqrt((col.array() - col.mean()).square().mean());
  EXPECT_NEAR(sd, 1.0, 1e-10);
  const double sd_truth = std::sqrt((p.truth.col(0).array() - p.truth.col(0).mean()).square().mean());
  EXPECT_NEAR(sd_truth, 1.0, 1e-10);
}

TEST(MaternTemporal, StationaryCovarianceSolvesLyapunov) {
  for (int nu2 : {1, 3, 5}) {
    const MaternTemporal t = matern_temporal(nu2, 0.6, 1.7);
    const Matrix res = t.drift * t.stationary_cov + t.stationary_cov * t.drift.transpose() + t.diffusion_gram;
    EXPECT_LT(res.norm(), 1e-10 * t.diffusion_gram.norm()) << nu2;
    EXPECT_NEAR(t.stationary_cov(0, 0), 1.7 * 1.7, 1e-12);
  }
  const MaternTemporal ou = matern_temporal(1, 2.0, 1.0);
  EXPECT_NEAR(ou.drift(0, 0), -0.5, 1e-15);
  EXPECT_THROW(matern_temporal(2, 1.0, 1.0), std::invalid_argument);
}

TEST(Matern, KroneckerStationaryMatchesDenseLyapunov) {
  const MaternModel m = build_matern_model(small_matern(3, 20, 0.3));
  const LtiSdeModel* sde = m.transitions->sde();
  const Matrix dense = dense_stationary(sde->drift.to_dense(), sde->diffusion_gram.to_dense());
  EXPECT_LT(oracle::rel_frob(m.stationary_covariance(), dense), 1e-8);
  EXPECT_LT(oracle::rel_frob(m.stationary_factor(m.dim()).covariance(), dense), 1e-8);
  const Matrix sq = m.stationary_sqrt();
  EXPECT_LT(oracle::rel_frob(sq * sq.transpose(), dense), 1e-8);
}

TEST(Matern, StructuredOperatorsMatchDense) {
  for (int nu2 : {1, 3, 5}) {
    const MaternModel m = build_matern_model(small_matern(nu2, 12, 0.4));
    const LtiSdeModel* sde = m.transitions->sde();
    const Matrix phi = oracle::taylor_exp(sde->drift.to_dense() * 0.1, 40);
    EXPECT_LT(oracle::rel_frob(m.transitions->transition(0.1).to_dense(), phi), 1e-10);
    const Matrix q = exact_process_noise(*sde, 0.1);
    EXPECT_LT(oracle::rel_frob(m.transitions->dense_noise(0.1), q), 1e-9) << nu2;
    const Matrix qs = m.transitions->dense_noise_sqrt(0.1);
    EXPECT_LT(oracle::rel_frob(qs * qs.transpose(), q), 1e-9) << nu2;
  }
}

TEST(Matern, GridSizeAndSpectrumMonotone) {
  const Matrix grid = uniform_grid(0.0, 2.0, 0.1, 2);
  EXPECT_EQ(grid.rows(), 441);
  double prev = 0.0;
  for (double ell : {0.01, 0.1, 0.25, 1.0}) {
    MaternScenario sc = small_matern(1, 2, ell);
    sc.points = grid;
    const double frac = matern_spectrum_fraction(build_matern_model(sc), 50);
    EXPECT_GT(frac, prev) << ell;
    prev = frac;
  }
}

TEST(Matern, ObservationsFollowTrajectory) {
  MaternScenario sc = small_matern(3, 10, 0.3);
  sc.noise_std = 1e-9;
  sc.steps = 4;
  const Problem p = build_matern(sc);
  for (std::size_t l = 0; l < p.observations.size(); ++l) {
    ASSERT_TRUE(p.observations[l].has_value());
    EXPECT_LT((*p.observations[l].value - p.truth.col(l).head(10)).norm(), 1e-7);
  }
}

TEST(Matern, RandomObservationScheme) {
  MaternScenario sc = small_matern(1, 30, 0.3);
  sc.steps = 50;
  sc.observation = MaternObservation::random;
  sc.obs_count = 7;
  sc.obs_times = 12;
  const Problem p = build_matern(sc);
  int observed = 0;
  for (const auto& o : p.observations) {
    if (o.has_value()) {
      ++observed;
      EXPECT_EQ(o.model->dim(), 7);
    }
  }
  EXPECT_EQ(observed, 12);
}

TEST(Matern, OuStationaryVarianceByMonteCarlo) {
  MaternScenario sc = small_matern(1, 2, 1.0);
  sc.points = Matrix::Zero(1, 1);
  sc.ell_t = 1.0;
  sc.sigma_t = 1.0;
  sc.sigma_x = 1.0;
  sc.dt = 1.0;
  sc.steps = 20000;
  const Problem p = build_matern(sc);
  const double var = p.truth.row(0).squaredNorm() / static_cast<double>(sc.steps);
  const double rho = std::exp(-1.0);
  const double se = std::sqrt(2.0 / sc.steps * (1 + rho * rho) / (1 - rho * rho));
  EXPECT_NEAR(var, 1.0, 3.0 * se);
}

TEST(RankCollapse, NoiseOverrideMatchesOperatorModel) {
  RankCollapseScenario sc;
  sc.n = 30;
  sc.true_rank = 4;
  sc.obs_dim = 5;
  sc.steps = 3;
  const Problem p = build_rank_collapse(sc);
  const LtiSdeModel* sde = p.transitions->sde();
  EXPECT_LT(oracle::rel_frob(p.transitions->dense_noise(0.1), exact_process_noise(*sde, 0.1)), 1e-10);
  const Matrix phi = discretize_transition(*sde, 0.1).to_dense();
  EXPECT_LT(oracle::rel_frob(p.transitions->transition(0.1).to_dense(), phi), 1e-10);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(p.init_covariance());
  EXPECT_LT(eig.eigenvalues()(25), 1e-12 * eig.eigenvalues()(29));
}

TEST(RandomLti, BuildsConsistentProblem) {
  const Problem p = build_random_lti(RandomLtiScenario{6, 4, 10, 0.1, 0.5, 2});
  EXPECT_EQ(p.dim(), 6);
  EXPECT_EQ(p.observations.size(), 10u);
  EXPECT_EQ(p.truth.cols(), 10);
  EXPECT_LT(oracle::rel_frob(p.init_factor(6).covariance(), p.init_covariance()), 1e-12);
  Eigen::EigenSolver<Matrix> eig(p.transitions->sde()->drift.to_dense());
  EXPECT_LT(eig.eigenvalues().real().maxCoeff(), 0.0);
}
