#include "oracles.hpp"
#include "rrkf/filter.hpp"
#include "system_fixture.hpp"

#include <gtest/gtest.h>

using namespace rrkf;

namespace {

OracleRun oracle_filter(const DenseSystem& s) { return oracle_run(s); }

SqrtGaussian random_prior(Index n, Index r, std::uint32_t seed) {
  return SqrtGaussian{oracle::randn(n, 1, seed), LowRankFactor(oracle::randn(n, r, seed + 1))};
}

}  // namespace

TEST(Predict, IdentityNoNoiseKeepsCovariance) {
  const SqrtGaussian prior = random_prior(7, 3, 1);
  const PredictResult p = predict(prior, LinearOperator::identity(7), nullptr, 3);
  EXPECT_LT(oracle::rel_frob(p.predicted.cov_factor.covariance(), prior.cov_factor.covariance()), 1e-12);
  EXPECT_LT((p.predicted.mean - prior.mean).norm(), 1e-15);
}

TEST(Predict, FullRankMatchesDense) {
  const SqrtGaussian prior = random_prior(8, 8, 2);
  const Matrix phi = oracle::randn(8, 8, 3);
  const LowRankFactor q(oracle::randn(8, 8, 4));
  const PredictResult p = predict(prior, LinearOperator::dense(phi), &q, 8);
  const Matrix dense = phi * prior.cov_factor.covariance() * phi.transpose() + q.covariance();
  EXPECT_LT(oracle::rel_frob(p.predicted.cov_factor.covariance(), dense), 1e-10);
  EXPECT_LT((p.predicted.mean - phi * prior.mean).norm(), 1e-12);
}

TEST(Predict, ExactRankHasNoDiscardedMass) {
  const Matrix basis = oracle::randn(20, 5, 5);
  const SqrtGaussian prior{Vector::Zero(20), LowRankFactor(basis * oracle::randn(5, 5, 6))};
  const LowRankFactor q(basis * oracle::randn(5, 5, 7));
  const PredictResult p = predict(prior, LinearOperator::identity(20), &q, 5);
  EXPECT_LT(p.truncated_mass, 1e-12);
}

TEST(Predict, TruncationIsFrobeniusOptimal) {
  const SqrtGaussian prior = random_prior(30, 4, 8);
  const Matrix phi = oracle::randn(30, 30, 9) / 5.0;
  const LowRankFactor q(oracle::randn(30, 4, 10));
  const PredictResult p = predict(prior, LinearOperator::dense(phi), &q, 4);
  const Matrix full = phi * prior.cov_factor.covariance() * phi.transpose() + q.covariance();
  Eigen::SelfAdjointEigenSolver<Matrix> eig(full);
  const double best = eig.eigenvalues().head(26).norm();
  EXPECT_NEAR((full - p.predicted.cov_factor.covariance()).norm(), best, 1e-10 * full.norm());
  const double tail = eig.eigenvalues().head(26).sum();
  EXPECT_NEAR(p.truncated_mass, tail / eig.eigenvalues().sum(), 1e-10);
}

TEST(ObservationModelTest, NoiseOperatorsAreConsistent) {
  Vector sd(3);
  sd << 0.5, 2.0, 1.5;
  const ObservationModel diag = ObservationModel::with_diagonal_noise(LinearOperator::identity(3), sd);
  const Vector x = oracle::randn(3, 1, 1);
  EXPECT_LT((diag.noise_sqrt.apply(diag.noise_sqrt_inv.apply(x)) - x).norm(), 1e-14);
  EXPECT_NEAR(diag.log_det_noise_sqrt, std::log(0.5 * 2.0 * 1.5), 1e-14);
  const Matrix r = oracle::random_spd(4, 2);
  const ObservationModel dense = ObservationModel::with_dense_noise(LinearOperator::identity(4), r);
  EXPECT_LT((dense.noise_covariance() - r).norm(), 1e-12);
  EXPECT_NEAR(2.0 * dense.log_det_noise_sqrt, std::log(r.determinant()), 1e-12);
  const Vector y = oracle::randn(4, 1, 3);
  EXPECT_LT((dense.noise_sqrt.apply(dense.noise_sqrt_inv.apply(y)) - y).norm(), 1e-12);
  EXPECT_THROW(ObservationModel::with_isotropic_noise(LinearOperator::identity(2), 0.0), std::invalid_argument);
}

TEST(CorrectLowRank, UninformativeMeasurement) {
  const SqrtGaussian pred = random_prior(6, 3, 11);
  const ObservationModel obs = ObservationModel::with_isotropic_noise(LinearOperator::zero(4, 6), 0.7);
  const Vector y = oracle::randn(4, 1, 12);
  const CorrectionResult c = correct_low_rank(pred, obs, y);
  EXPECT_LT((c.posterior.mean - pred.mean).norm(), 1e-15);
  EXPECT_LT(oracle::rel_frob(c.posterior.cov_factor.covariance(), pred.cov_factor.covariance()), 1e-14);
  const Vector e = y / 0.7;
  EXPECT_NEAR(c.loglik, -2.0 * std::log(2 * M_PI) - 4.0 * std::log(0.7) - 0.5 * e.squaredNorm(), 1e-12);
}

TEST(CorrectLowRank, MatchesDenseJosephUpdate) {
  const SqrtGaussian pred = random_prior(10, 4, 13);
  const Matrix c = oracle::randn(6, 10, 14);
  const ObservationModel obs = ObservationModel::with_isotropic_noise(LinearOperator::dense(c), 0.3);
  const Vector y = oracle::randn(6, 1, 15);
  const CorrectionResult res = correct_low_rank(pred, obs, y);
  double ll = 0.0;
  const oracle::Gauss ref =
      oracle::kf_update({pred.mean, pred.cov_factor.covariance()}, c, 0.09 * Matrix::Identity(6, 6), y, &ll);
  EXPECT_LT((res.posterior.mean - ref.mean).norm(), 1e-9 * ref.mean.norm());
  EXPECT_LT(oracle::rel_frob(res.posterior.cov_factor.covariance(), ref.cov), 1e-9);
  EXPECT_NEAR(res.loglik, ll, 1e-8);
  const Matrix s = c * pred.cov_factor.covariance() * c.transpose() + 0.09 * Matrix::Identity(6, 6);
  EXPECT_NEAR(res.loglik, oracle::gauss_logpdf(y, c * pred.mean, s), 1e-8);
  EXPECT_EQ(res.internals.branch, CorrectionBranch::low_rank);
  EXPECT_EQ(res.internals.u.rows(), 4);
  EXPECT_EQ(res.internals.v.rows(), 6);
}

TEST(CorrectLowRank, RejectsWideRank) {
  const SqrtGaussian pred = random_prior(8, 5, 1);
  const ObservationModel obs = ObservationModel::with_isotropic_noise(LinearOperator::selection(8, {0, 1}), 1.0);
  EXPECT_THROW(correct_low_rank(pred, obs, Vector::Zero(2)), std::invalid_argument);
  EXPECT_THROW(correct(pred, obs, Vector::Zero(3)), std::invalid_argument);
}

TEST(CorrectWideRank, UninformativeMeasurement) {
  const SqrtGaussian pred = random_prior(8, 5, 16);
  const ObservationModel obs = ObservationModel::with_isotropic_noise(LinearOperator::zero(2, 8), 0.4);
  const Vector y = oracle::randn(2, 1, 17);
  const CorrectionResult c = correct_wide_rank(pred, obs, y);
  EXPECT_LT((c.posterior.mean - pred.mean).norm(), 1e-14);
  EXPECT_LT(oracle::rel_frob(c.posterior.cov_factor.covariance(), pred.cov_factor.covariance()), 1e-13);
  EXPECT_NEAR(c.loglik, -std::log(2 * M_PI) - 2.0 * std::log(0.4) - 0.5 * (y / 0.4).squaredNorm(), 1e-12);
}

TEST(CorrectWideRank, MatchesDenseJosephUpdate) {
  const SqrtGaussian pred = random_prior(8, 5, 18);
  const Matrix c = oracle::randn(2, 8, 19);
  const Matrix r = oracle::random_spd(2, 20);
  const ObservationModel obs = ObservationModel::with_dense_noise(LinearOperator::dense(c), r);
  const Vector y = oracle::randn(2, 1, 21);
  const CorrectionResult res = correct_wide_rank(pred, obs, y);
  double ll = 0.0;
  const oracle::Gauss ref = oracle::kf_update({pred.mean, pred.cov_factor.covariance()}, c, r, y, &ll);
  EXPECT_LT((res.posterior.mean - ref.mean).norm(), 1e-9 * ref.mean.norm());
  EXPECT_LT(oracle::rel_frob(res.posterior.cov_factor.covariance(), ref.cov), 1e-9);
  EXPECT_NEAR(res.loglik, ll, 1e-8);
  EXPECT_EQ(res.posterior.cov_factor.rank(), 5);
  EXPECT_EQ(correct(pred, obs, y).internals.branch, CorrectionBranch::wide_rank);
}

TEST(Correct, BranchesAgreeAtBoundary) {
  for (std::uint32_t t = 0; t < 10; ++t) {
    const Index n = 6 + t, m = 3 + t % 3;
    const SqrtGaussian pred = random_prior(n, m, 100 + t);
    const Matrix c = oracle::randn(m, n, 200 + t);
    const ObservationModel obs = ObservationModel::with_dense_noise(LinearOperator::dense(c), oracle::random_spd(m, 300 + t));
    const Vector y = oracle::randn(m, 1, 400 + t);
    const CorrectionResult a = correct_low_rank(pred, obs, y);
    const CorrectionResult b = correct_wide_rank(pred, obs, y);
    EXPECT_LT((a.posterior.mean - b.posterior.mean).norm(), 1e-9 * (1.0 + a.posterior.mean.norm()));
    EXPECT_LT(oracle::rel_frob(a.posterior.cov_factor.covariance(), b.posterior.cov_factor.covariance()), 1e-9);
    EXPECT_NEAR(a.loglik, b.loglik, 1e-9 * (1.0 + std::abs(a.loglik)));
  }
}

TEST(FilterPass, EmptySequenceReturnsInit) {
  const DenseSystem s = make_system(4, 4, 1, 1);
  const SqrtGaussian init{s.mu0, truncated_eigen_factor(s.sigma0, 4)};
  const FilterTrace t = filter_pass(*s.transitions, {}, init, FilterOptions{4});
  ASSERT_EQ(t.records.size(), 1u);
  EXPECT_EQ(t.total_loglik, 0.0);
  EXPECT_EQ((t.records[0].corrected.mean - s.mu0).norm(), 0.0);
}

TEST(FilterPass, FullRankMatchesTextbookKalman) {
  const DenseSystem s = make_system(12, 12, 20, 30);
  const OracleRun ref = oracle_filter(s);
  const SqrtGaussian init{s.mu0, truncated_eigen_factor(s.sigma0, 12)};
  const FilterTrace t = filter_pass(*s.transitions, s.obs, init, FilterOptions{12});
  ASSERT_EQ(t.records.size(), 20u);
  for (std::size_t l = 0; l < 20; ++l) {
    EXPECT_LT((t.records[l].corrected.mean - ref.filt[l].mean).norm(), 1e-8 * ref.filt[l].mean.norm()) << l;
    EXPECT_LT(oracle::rel_frob(t.records[l].corrected.cov_factor.covariance(), ref.filt[l].cov), 1e-8) << l;
  }
  EXPECT_NEAR(t.total_loglik, ref.loglik, 1e-7);
  double sum = 0.0;
  for (const auto& rec : t.records) sum += rec.loglik_increment;
  EXPECT_NEAR(t.total_loglik, sum, 1e-12 * std::abs(sum));
}

TEST(FilterPass, GainCoreSolvesPropagation) {
  const DenseSystem s = make_system(6, 6, 3, 40);
  const SqrtGaussian init{s.mu0, truncated_eigen_factor(s.sigma0, 6)};
  const FilterTrace t = filter_pass(*s.transitions, s.obs, init, FilterOptions{6});
  const Matrix phi_sigma = t.records[2].phi->apply_mat(t.records[1].corrected.cov_factor.matrix());
  const Matrix& pi = t.records[2].predicted.cov_factor.matrix();
  EXPECT_LT((pi * t.records[2].gain_core.transpose() - phi_sigma).norm(), 1e-10 * phi_sigma.norm());
  EXPECT_EQ(t.records[0].gain_core.size(), 0);
}

TEST(FilterPass, MissingMeasurementsPredictOnly) {
  DenseSystem s = make_system(5, 3, 6, 50);
  s.obs[2].value.reset();
  s.obs[4].model.reset();
  const OracleRun ref = oracle_filter(s);
  const SqrtGaussian init{s.mu0, truncated_eigen_factor(s.sigma0, 5)};
  const FilterTrace t = filter_pass(*s.transitions, s.obs, init, FilterOptions{5});
  EXPECT_EQ(t.records[2].loglik_increment, 0.0);
  EXPECT_EQ(t.records[2].diagnostics.branch, CorrectionBranch::none);
  EXPECT_EQ((t.records[2].corrected.mean - t.records[2].predicted.mean).norm(), 0.0);
  for (std::size_t l = 0; l < 6; ++l)
    EXPECT_LT(oracle::rel_frob(t.records[l].corrected.cov_factor.covariance(), ref.filt[l].cov), 1e-8);
  EXPECT_NEAR(t.total_loglik, ref.loglik, 1e-7);
}

TEST(FilterPass, RejectsNonMonotoneTimes) {
  DenseSystem s = make_system(3, 3, 3, 60);
  s.obs[2].time = s.obs[1].time;
  const SqrtGaussian init{s.mu0, truncated_eigen_factor(s.sigma0, 3)};
  EXPECT_THROW(filter_pass(*s.transitions, s.obs, init, FilterOptions{3}), std::invalid_argument);
}

TEST(FilterPass, TrueRankRecoveryAndCollapse) {
  // Dynamics and noise confined to a 3-dimensional subspace of R^40.
  const Index n = 40, k = 3;
  const Matrix v = random_orthonormal(n, k, 3);
  const Matrix as = oracle::random_stable(k, 4);
  const Matrix a = v * as * v.transpose() - 0.5 * (Matrix::Identity(n, n) - v * v.transpose());
  const Matrix g = v * oracle::random_spd(k, 5) * v.transpose();
  DenseSystem s;
  s.a = a;
  s.g = g;
  s.c = oracle::randn(8, n, 6);
  s.r = 0.25 * Matrix::Identity(8, 8);
  s.sigma0 = v * oracle::random_spd(k, 7) * v.transpose();
  s.mu0 = v * oracle::randn(k, 1, 8);
  s.transitions = std::make_shared<TransitionModel>(
      TransitionModel::from_sde(LtiSdeModel{LinearOperator::dense(a), LinearOperator::dense(g), n}));
  auto model = std::make_shared<const ObservationModel>(
      ObservationModel::with_isotropic_noise(LinearOperator::dense(s.c), 0.5));
  for (Index l = 0; l < 10; ++l) s.obs.push_back(Observation{0.1 * l, model, Vector(oracle::randn(8, 1, 100 + l))});
  const OracleRun ref = oracle_filter(s);
  Matrix init_factor = Matrix::Zero(n, 5);
  init_factor.leftCols(k) = v * psd_sqrt(v.transpose() * s.sigma0 * v);
  const FilterTrace t = filter_pass(*s.transitions, s.obs, SqrtGaussian{s.mu0, LowRankFactor(init_factor)}, FilterOptions{5});
  for (std::size_t l = 0; l < t.records.size(); ++l) {
    EXPECT_LT(oracle::rel_frob(t.records[l].corrected.cov_factor.covariance(), ref.filt[l].cov), 1e-6);
    for (const Matrix* f : {&t.records[l].predicted.cov_factor.matrix(), &t.records[l].corrected.cov_factor.matrix()}) {
      Eigen::JacobiSVD<Matrix> svd(*f);
      EXPECT_LT(svd.singularValues()(3), 1e-8 * svd.singularValues()(0)) << l;
    }
  }
}

TEST(RankReducedFilterTest, StreamingKeepsOnlyLatest) {
  const DenseSystem s = make_system(5, 5, 8, 70);
  FilterOptions opts{3};
  opts.store_records = false;
  RankReducedFilter f(*s.transitions, SqrtGaussian{s.mu0, truncated_eigen_factor(s.sigma0, 3)}, opts);
  for (const auto& o : s.obs) f.step(o);
  EXPECT_EQ(f.trace().records.size(), 1u);
  EXPECT_EQ(f.steps(), 8u);
  const FilterTrace full = filter_pass(*s.transitions, s.obs, SqrtGaussian{s.mu0, truncated_eigen_factor(s.sigma0, 3)}, FilterOptions{3});
  EXPECT_EQ(f.trace().total_loglik, full.total_loglik);
  EXPECT_EQ((f.last().corrected.mean - full.records.back().corrected.mean).norm(), 0.0);
}
