#pragma once

#include "rrkf/common.hpp"
#include "rrkf/dlra.hpp"
#include "rrkf/linear_operator.hpp"
#include "rrkf/lowrank.hpp"
#include "rrkf/lti_sde.hpp"

#include <functional>
#include <optional>

namespace rrkf {

/// Source of per-interval dynamics (Phi_l, Q_l) for every filter in the
/// library.
///
/// SDE-backed models produce the low-rank Q^{1/2} by DLRA and the dense Q by
/// matrix-fraction decomposition; either route can be overridden with a
/// closed form (e.g. Kronecker structure). Noise-free models only carry a
/// transition action.
class TransitionModel {
 public:
  using PhiFactory = std::function<LinearOperator(double)>;
  using DenseFactory = std::function<Matrix(double)>;

  /// `phi` defaults to the dense exponential of the drift.
  static TransitionModel from_sde(LtiSdeModel model, PhiFactory phi = {}, DenseFactory dense_noise = {},
                                  DenseFactory dense_noise_sqrt = {});
  static TransitionModel noise_free(Index n, PhiFactory phi);

  Index dim() const { return dim_; }
  bool is_noise_free() const { return !sde_.has_value() || sde_->diffusion_gram.is_zero(); }
  const LtiSdeModel* sde() const { return sde_ ? &*sde_ : nullptr; }

  LinearOperator transition(double dt) const;

  /// Rank-`rank` Q^{1/2} over dt. The zero factor is returned for noise-free
  /// models, with the basis passed through.
  ProcessNoiseFactor low_rank_noise(double dt, const Matrix* basis_prev, Index rank,
                                    const DlraConfig& config, std::uint64_t seed) const;

  /// Dense Q(dt); CapacityError above `cap` unless a closed form was given.
  Matrix dense_noise(double dt, Index cap = kDefaultDenseCap) const;
  /// Square n x n factor of Q(dt).
  Matrix dense_noise_sqrt(double dt, Index cap = kDefaultDenseCap) const;

 private:
  Index dim_ = 0;
  std::optional<LtiSdeModel> sde_;
  PhiFactory phi_;
  DenseFactory dense_noise_;
  DenseFactory dense_noise_sqrt_;
};

/// Remembers the last (dt, Phi) pair so constant-step runs build Phi once.
class TransitionCache {
 public:
  explicit TransitionCache(const TransitionModel& model) : model_(&model) {}
  const LinearOperator& phi(double dt);

 private:
  const TransitionModel* model_;
  std::optional<double> dt_;
  LinearOperator phi_;
};

}  // namespace rrkf
