#include "oracles.hpp"
#include "rrkf/smoother.hpp"
#include "system_fixture.hpp"

#include <gtest/gtest.h>

using namespace rrkf;

namespace {

Matrix gain_dense(const BackwardKernel& k, Index n) { return k.gain_apply(Matrix(Matrix::Identity(n, n))); }

}  // namespace

TEST(BackwardKernel, DeterministicTransitionWithoutInformation) {
  const Index n = 6;
  const Matrix l = oracle::randn(n, 3, 1);
  FilterStepRecord cur, next;
  cur.corrected = SqrtGaussian{oracle::randn(n, 1, 2), LowRankFactor(l)};
  next.predicted = cur.corrected;
  next.phi = LinearOperator::identity(n);
  next.gain_core = tall_pinv_apply(l, l).transpose();
  const BackwardKernel k = build_backward_kernel(cur, next);
  EXPECT_LT((k.gain_apply(l) - l).norm(), 1e-10 * l.norm());
  // G is the projector onto range(L), so v = mu - G mu is the complement part.
  const Matrix q = orthonormalize(l).q;
  const Vector& mu = cur.corrected.mean;
  EXPECT_LT((k.shift - (mu - q * (q.transpose() * mu))).norm(), 1e-10);
  EXPECT_LT(k.noise_factor.covariance().norm(), 1e-10);
}

TEST(BackwardKernel, FullRankMatchesDenseFormulas) {
  const DenseSystem s = make_system(10, 10, 3, 5);
  const FilterTrace t = filter_pass(*s.transitions, s.obs, s.init(10), FilterOptions{10});
  const BackwardKernel k = build_backward_kernel(t.records[1], t.records[2]);
  const Matrix phi = oracle::taylor_exp(s.a * s.dt);
  const Matrix sigma = t.records[1].corrected.cov_factor.covariance();
  const Matrix pi = t.records[2].predicted.cov_factor.covariance();
  const Matrix g = sigma * phi.transpose() * pi.inverse();
  EXPECT_LT(oracle::rel_frob(gain_dense(k, 10), g), 1e-8);
  const Vector v = t.records[1].corrected.mean - g * t.records[2].predicted.mean;
  EXPECT_LT((k.shift - v).norm(), 1e-8 * v.norm());
  const Matrix q = oracle::quadrature_noise(s.a, s.g, s.dt);
  const Matrix ikg = Matrix::Identity(10, 10) - g * phi;
  const Matrix p = ikg * sigma * ikg.transpose() + g * q * g.transpose();
  EXPECT_LT(oracle::rel_frob(k.noise_factor.covariance(), p), 1e-8);
  EXPECT_LT(oracle::rel_frob(k.noise_factor.covariance(), sigma - g * pi * g.transpose()), 1e-7);
}

TEST(BackwardKernel, RankDeficientUsesPseudoinverse) {
  const Index n = 9;
  const Matrix l = oracle::randn(n, 2, 7) * oracle::randn(2, 4, 8);  // rank 2, four columns
  const Matrix phi = oracle::taylor_exp(oracle::random_stable(n, 9) * 0.2);
  FilterStepRecord cur, next;
  cur.corrected = SqrtGaussian{oracle::randn(n, 1, 10), LowRankFactor(l)};
  const PredictResult pr = predict(cur.corrected, LinearOperator::dense(phi), nullptr, 4);
  next.predicted = pr.predicted;
  next.phi = LinearOperator::dense(phi);
  next.gain_core = tall_pinv_apply(pr.predicted.cov_factor.matrix(), phi * l).transpose();
  const BackwardKernel k = build_backward_kernel(cur, next);
  EXPECT_TRUE(k.pinv_cutoff_engaged);
  const Matrix sigma = l * l.transpose();
  const Matrix pi = pr.predicted.cov_factor.covariance();
  const Matrix g = sigma * phi.transpose() * oracle::pinv(pi, 1e-12);
  EXPECT_LT(oracle::rel_frob(gain_dense(k, n), g), 1e-7);
  const Vector v = cur.corrected.mean - g * next.predicted.mean;
  EXPECT_LT((k.shift - v).norm(), 1e-7 * v.norm());
}

TEST(SmoothPass, SingleStepEqualsFiltering) {
  const DenseSystem s = make_system(4, 4, 1, 11);
  const FilterTrace t = filter_pass(*s.transitions, s.obs, s.init(4), FilterOptions{4});
  const auto sm = smooth_pass(t);
  ASSERT_EQ(sm.size(), 1u);
  EXPECT_EQ((sm[0].mean - t.records[0].corrected.mean).norm(), 0.0);
}

TEST(SmoothPass, FullRankMatchesTextbookRts) {
  const DenseSystem s = make_system(12, 12, 15, 12);
  const OracleRun ref = oracle_run(s);
  const FilterTrace t = filter_pass(*s.transitions, s.obs, s.init(12), FilterOptions{12});
  const auto sm = smooth_pass(t);
  for (std::size_t l = 0; l < sm.size(); ++l) {
    EXPECT_LT((sm[l].mean - ref.smooth[l].mean).norm(), 1e-7 * ref.smooth[l].mean.norm()) << l;
    EXPECT_LT(oracle::rel_frob(sm[l].cov_factor.covariance(), ref.smooth[l].cov), 1e-7) << l;
    // Classical dominance at full rank: Lambda <= Sigma.
    Eigen::SelfAdjointEigenSolver<Matrix> eig(ref.filt[l].cov - sm[l].cov_factor.covariance());
    EXPECT_GE(eig.eigenvalues().minCoeff(), -1e-9 * ref.filt[l].cov.norm());
  }
}

TEST(SamplePosterior, DegenerateGivesMeanPath) {
  const Index n = 5;
  auto transitions = std::make_shared<TransitionModel>(
      TransitionModel::noise_free(n, [n](double) { return LinearOperator::circular_shift(n, 1); }));
  ObservationSequence obs;
  for (int l = 0; l < 4; ++l) obs.push_back(Observation{double(l), nullptr, std::nullopt});
  const SqrtGaussian init{oracle::randn(n, 1, 3), LowRankFactor::zero(n, 2)};
  const FilterTrace t = filter_pass(*transitions, obs, init, FilterOptions{2});
  const auto sm = smooth_pass(t);
  for (const Matrix& path : sample_posterior(t, 3, 9)) {
    for (std::size_t l = 0; l < sm.size(); ++l) EXPECT_LT((path.col(l) - sm[l].mean).norm(), 1e-12);
  }
}

TEST(SamplePosterior, MonteCarloMatchesSmootherMoments) {
  const DenseSystem s = make_system(4, 2, 3, 13);
  const FilterTrace t = filter_pass(*s.transitions, s.obs, s.init(4), FilterOptions{4});
  const SmootherResult sm = smooth(t);
  const Index draws = 10000;
  const auto paths = sample_posterior(t, sm.kernels, draws, 21);
  for (std::size_t l = 0; l < sm.marginals.size(); ++l) {
    Matrix x(4, draws);
    for (Index i = 0; i < draws; ++i) x.col(i) = paths[i].col(l);
    const Vector mean = x.rowwise().mean();
    const Matrix centered = x.colwise() - mean;
    const Matrix cov = centered * centered.transpose() / double(draws - 1);
    const Matrix lam = sm.marginals[l].cov_factor.covariance();
    for (Index k = 0; k < 4; ++k) {
      EXPECT_LT(std::abs(mean(k) - sm.marginals[l].mean(k)), 4.0 * std::sqrt(lam(k, k) / draws)) << l << "," << k;
    }
    EXPECT_LT(oracle::rel_frob(cov, lam), 0.1) << l;
  }
  const auto again = sample_posterior(t, sm.kernels, 2, 21);
  EXPECT_EQ((again[1] - paths[1]).norm(), 0.0);
}
