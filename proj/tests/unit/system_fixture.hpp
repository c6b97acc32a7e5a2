#pragma once

#include "oracles.hpp"
#include "rrkf/filter.hpp"

#include <memory>
#include <vector>

/// Random dense LTI system with a textbook Kalman filter / RTS smoother
/// oracle written independently of the library.
struct DenseSystem {
  oracle::Mat a, g, c, r, sigma0;
  oracle::Vec mu0;
  double dt = 0.1;
  std::shared_ptr<rrkf::TransitionModel> transitions;
  rrkf::ObservationSequence obs;

  rrkf::SqrtGaussian init(rrkf::Index rank) const {
    return rrkf::SqrtGaussian{mu0, rrkf::truncated_eigen_factor(sigma0, rank)};
  }
};

inline DenseSystem make_system(rrkf::Index n, rrkf::Index m, rrkf::Index steps, std::uint32_t seed,
                               double noise = 0.5) {
  using namespace rrkf;
  DenseSystem s;
  s.a = oracle::random_stable(n, seed);
  s.g = oracle::random_spd(n, seed + 1, 0.05);
  s.c = oracle::randn(m, n, seed + 2) / std::sqrt(static_cast<double>(n));
  s.r = noise * noise * Matrix::Identity(m, m);
  s.sigma0 = oracle::random_spd(n, seed + 3);
  s.mu0 = oracle::randn(n, 1, seed + 4);
  s.transitions = std::make_shared<TransitionModel>(
      TransitionModel::from_sde(LtiSdeModel{LinearOperator::dense(s.a), LinearOperator::dense(s.g), n}));
  auto model = std::make_shared<const ObservationModel>(
      ObservationModel::with_isotropic_noise(LinearOperator::dense(s.c), noise));
  const Matrix ys = oracle::randn(m, steps, seed + 5);
  for (Index l = 0; l < steps; ++l) s.obs.push_back(Observation{s.dt * l, model, Vector(ys.col(l))});
  return s;
}

struct OracleRun {
  std::vector<oracle::Gauss> pred;
  std::vector<oracle::Gauss> filt;
  std::vector<oracle::Gauss> smooth;
  double loglik = 0.0;
};

inline OracleRun oracle_run(const DenseSystem& s) {
  const oracle::Mat phi = oracle::taylor_exp(s.a * s.dt);
  const oracle::Mat q = oracle::quadrature_noise(s.a, s.g, s.dt);
  OracleRun out;
  oracle::Gauss cur{s.mu0, s.sigma0};
  for (std::size_t l = 0; l < s.obs.size(); ++l) {
    if (l > 0) cur = {phi * cur.mean, phi * cur.cov * phi.transpose() + q};
    out.pred.push_back(cur);
    if (s.obs[l].has_value()) {
      double ll = 0.0;
      cur = oracle::kf_update(cur, s.c, s.r, *s.obs[l].value, &ll);
      out.loglik += ll;
    }
    out.filt.push_back(cur);
  }
  out.smooth.resize(out.filt.size());
  out.smooth.back() = out.filt.back();
  for (std::size_t l = out.filt.size() - 1; l-- > 0;) {
    const oracle::Mat gain = out.filt[l].cov * phi.transpose() * out.pred[l + 1].cov.inverse();
    out.smooth[l].mean = out.filt[l].mean + gain * (out.smooth[l + 1].mean - out.pred[l + 1].mean);
    out.smooth[l].cov = out.filt[l].cov + gain * (out.smooth[l + 1].cov - out.pred[l + 1].cov) * gain.transpose();
  }
  return out;
}
