#include "oracles.hpp"
#include "rrkf/dlra.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace rrkf;

namespace {

LtiSdeModel dense_model(const Matrix& a, const Matrix& g) {
  return LtiSdeModel{LinearOperator::dense(a), LinearOperator::dense(g), a.rows()};
}

/// A leaves span(V) invariant and BB^T lives in it, so every Q(t) has rank k.
struct SubspaceProblem {
  Matrix v;
  LtiSdeModel model;
  Matrix a;
  Matrix g;
};

SubspaceProblem subspace_problem(Index n, Index k, std::uint32_t seed) {
  SubspaceProblem p;
  p.v = random_orthonormal(n, k, seed);
  const Matrix as = oracle::random_stable(k, seed + 1);
  const Matrix gs = oracle::random_spd(k, seed + 2);
  const Matrix pv = p.v * p.v.transpose();
  p.a = p.v * as * p.v.transpose() - 0.7 * (Matrix::Identity(n, n) - pv);
  p.g = p.v * gs * p.v.transpose();
  p.model = dense_model(p.a, p.g);
  return p;
}

}  // namespace

TEST(BugStep, ZeroStaysZero) {
  const LtiSdeModel m = dense_model(oracle::random_stable(6, 1), Matrix::Zero(6, 6));
  DlraState s{random_orthonormal(6, 3, 2), Matrix::Zero(3, 3), 0.0};
  for (int i = 0; i < 5; ++i) s = bug_step(s, m, 0.1, {}, i);
  EXPECT_EQ(s.represented().norm(), 0.0);
  EXPECT_NEAR(s.t, 0.5, 1e-15);
}

TEST(BugStep, FullRankMatchesDenseFlow) {
  for (int n : {3, 6, 8}) {
    const Matrix a = oracle::random_stable(n, 30 + n);
    const Matrix g = oracle::random_spd(n, 40 + n);
    const Matrix y0 = oracle::random_spd(n, 50 + n);
    Eigen::SelfAdjointEigenSolver<Matrix> eig(y0);
    DlraState s{eig.eigenvectors(), eig.eigenvalues().asDiagonal(), 0.0};
    const DlraState out = bug_step(s, dense_model(a, g), 0.05);
    const Matrix dense = oracle::rk4_lyapunov(a, g, y0, 0.05);
    EXPECT_LT(oracle::rel_frob(out.represented(), dense), 1e-10) << n;
    EXPECT_LT((out.u.transpose() * out.u - Matrix::Identity(n, n)).norm(), 1e-10 * n);
    EXPECT_LT((out.d - out.d.transpose()).norm(), 1e-12 * out.d.norm());
  }
}

TEST(BugStep, InvariantSubspaceIsExact) {
  const Index n = 9;
  const Matrix u0 = random_orthonormal(n, 3, 3);
  const Matrix a = -Matrix::Identity(n, n);
  const Matrix g = u0 * oracle::random_spd(3, 4) * u0.transpose();
  const Matrix d0 = oracle::random_spd(3, 5);
  const DlraState out = bug_step(DlraState{u0, d0, 0.0}, dense_model(a, g), 0.2);
  const Matrix dense = oracle::rk4_lyapunov(a, g, u0 * d0 * u0.transpose(), 0.2);
  EXPECT_LT(oracle::rel_frob(out.represented(), dense), 1e-10);
}

TEST(BugStep, RejectsInvalidState) {
  const LtiSdeModel m = dense_model(oracle::random_stable(4, 1), Matrix::Identity(4, 4));
  DlraState bad{Matrix::Ones(4, 2), Matrix::Zero(2, 2), 0.0};
  EXPECT_THROW(bug_step(bad, m, 0.1), std::invalid_argument);
  DlraState ok{random_orthonormal(4, 2, 1), Matrix::Zero(2, 2), 0.0};
  EXPECT_THROW(bug_step(ok, m, -0.1), std::invalid_argument);
}

TEST(ProcessNoiseFactor, ZeroDiffusionGivesZeroFactor) {
  const LtiSdeModel m = dense_model(oracle::random_stable(5, 1), Matrix::Zero(5, 5));
  const Matrix basis = random_orthonormal(5, 2, 9);
  const ProcessNoiseFactor f = process_noise_factor(m, &basis, 2, 0.1, {}, 3);
  EXPECT_EQ(f.factor.matrix().norm(), 0.0);
  EXPECT_LT((f.basis * f.basis.transpose() - basis * basis.transpose()).norm(), 1e-12);
}

TEST(ProcessNoiseFactor, FullRankMatchesExactNoise) {
  for (int n : {2, 5, 8}) {
    const Matrix a = oracle::random_stable(n, 60 + n);
    const Matrix g = oracle::random_spd(n, 70 + n);
    const LtiSdeModel m = dense_model(a, g);
    for (KStepMethod method : {KStepMethod::rk4, KStepMethod::exponential}) {
      DlraConfig cfg;
      cfg.k_step = method;
      const ProcessNoiseFactor f = process_noise_factor(m, nullptr, n, 0.1, cfg, 11);
      const Matrix q = oracle::quadrature_noise(a, g, 0.1);
      EXPECT_LT(oracle::rel_frob(f.factor.covariance(), q), 1e-10) << n;
      EXPECT_LT((f.basis.transpose() * f.basis - Matrix::Identity(n, n)).norm(), 1e-10 * n);
      EXPECT_FALSE(f.clamp_warning);
    }
  }
}

TEST(ProcessNoiseFactor, DeterministicGivenSeed) {
  const LtiSdeModel m = dense_model(oracle::random_stable(12, 1), oracle::random_spd(12, 2));
  const ProcessNoiseFactor a = process_noise_factor(m, nullptr, 4, 0.1, {}, 77);
  const ProcessNoiseFactor b = process_noise_factor(m, nullptr, 4, 0.1, {}, 77);
  EXPECT_EQ((a.factor.matrix() - b.factor.matrix()).norm(), 0.0);
  EXPECT_EQ((a.basis - b.basis).norm(), 0.0);
}

TEST(ProcessNoiseFactor, ExcessRankDoesNotHurt) {
  const SubspaceProblem p = subspace_problem(14, 2, 5);
  const Matrix exact = oracle::quadrature_noise(p.a, p.g, 0.2);
  const double err2 = (process_noise_factor(p.model, nullptr, 2, 0.2, {}, 1).factor.covariance() - exact).norm();
  const ProcessNoiseFactor f5 = process_noise_factor(p.model, nullptr, 5, 0.2, {}, 1);
  const double err5 = (f5.factor.covariance() - exact).norm();
  EXPECT_LE(err5, err2 + 1e-8);
  EXPECT_TRUE(f5.basis_completed);
  EXPECT_LT((f5.basis.transpose() * f5.basis - Matrix::Identity(5, 5)).norm(), 1e-10 * 5);
}

TEST(ProcessNoiseFactor, BasisReuseAcrossSteps) {
  const SubspaceProblem p = subspace_problem(10, 3, 8);
  const ProcessNoiseFactor first = process_noise_factor(p.model, nullptr, 3, 0.1, {}, 2);
  const ProcessNoiseFactor second = process_noise_factor(p.model, &first.basis, 3, 0.1, {}, 3);
  const Matrix exact = oracle::quadrature_noise(p.a, p.g, 0.1);
  EXPECT_LT(oracle::rel_frob(second.factor.covariance(), exact), 1e-8);
}

TEST(ProcessNoiseFactor, SubstepsStayExactAtFullRank) {
  const Matrix a = oracle::random_stable(6, 3);
  const Matrix g = oracle::random_spd(6, 4);
  const Matrix q = oracle::quadrature_noise(a, g, 0.5);
  for (Index s : {1, 2, 4, 8}) {
    DlraConfig cfg;
    cfg.substeps = s;
    const ProcessNoiseFactor f = process_noise_factor(dense_model(a, g), nullptr, 6, 0.5, cfg, 1);
    EXPECT_LT(oracle::rel_frob(f.factor.covariance(), q), 1e-10);
  }
}

TEST(KStep, Rk4IsFourthOrder) {
  const Index n = 6;
  const Matrix a = oracle::random_stable(n, 12);
  const LtiSdeModel m = dense_model(a, oracle::random_spd(n, 13));
  const Matrix u0 = random_orthonormal(n, n, 14);
  const Matrix k0 = u0 * oracle::random_spd(n, 15);
  const KStepField field(m, u0);
  DlraConfig exact_cfg;
  exact_cfg.k_step = KStepMethod::exponential;
  const double h = 0.8;
  const Matrix exact = integrate_k_step(field, m, k0, h, exact_cfg);
  std::vector<double> err;
  for (Index s : {1, 2, 4, 8, 16}) {
    DlraConfig cfg;
    cfg.rk4_substeps = s;
    err.push_back((integrate_k_step(field, m, k0, h, cfg) - exact).norm());
  }
  for (std::size_t i = 1; i < err.size(); ++i) EXPECT_GE(std::log2(err[i - 1] / err[i]), 3.5) << i;
}
