#include "rrkf/transition.hpp"

#include <cmath>

namespace rrkf {

TransitionModel TransitionModel::from_sde(LtiSdeModel model, PhiFactory phi, DenseFactory dense_noise,
                                          DenseFactory dense_noise_sqrt) {
  model.validate();
  TransitionModel out;
  out.dim_ = model.dim();
  out.sde_ = std::move(model);
  out.phi_ = std::move(phi);
  out.dense_noise_ = std::move(dense_noise);
  out.dense_noise_sqrt_ = std::move(dense_noise_sqrt);
  return out;
}

TransitionModel TransitionModel::noise_free(Index n, PhiFactory phi) {
  require(static_cast<bool>(phi), "TransitionModel::noise_free: transition factory required");
  TransitionModel out;
  out.dim_ = n;
  out.phi_ = std::move(phi);
  return out;
}

LinearOperator TransitionModel::transition(double dt) const {
  require(dt > 0.0, "TransitionModel::transition: dt must be positive");
  if (phi_) return phi_(dt);
  return discretize_transition(*sde_, dt);
}

ProcessNoiseFactor TransitionModel::low_rank_noise(double dt, const Matrix* basis_prev, Index rank,
                                                   const DlraConfig& config, std::uint64_t seed) const {
  if (is_noise_free()) {
    ProcessNoiseFactor out;
    out.factor = LowRankFactor::zero(dim_, rank);
    out.basis = basis_prev ? *basis_prev : Matrix();
    return out;
  }
  const Matrix* basis = config.reuse_basis ? basis_prev : nullptr;
  return process_noise_factor(*sde_, basis, rank, dt, config, seed);
}

Matrix TransitionModel::dense_noise(double dt, Index cap) const {
  if (is_noise_free()) return Matrix::Zero(dim_, dim_);
  if (dense_noise_) return dense_noise_(dt);
  return exact_process_noise(*sde_, dt, cap);
}

Matrix TransitionModel::dense_noise_sqrt(double dt, Index cap) const {
  if (is_noise_free()) return Matrix::Zero(dim_, dim_);
  if (dense_noise_sqrt_) return dense_noise_sqrt_(dt);
  return psd_sqrt(dense_noise(dt, cap));
}

const LinearOperator& TransitionCache::phi(double dt) {
  if (!dt_ || std::abs(*dt_ - dt) > 1e-14 * std::max(1.0, std::abs(dt))) {
    phi_ = model_->transition(dt);
    dt_ = dt;
  }
  return phi_;
}

}  // namespace rrkf
