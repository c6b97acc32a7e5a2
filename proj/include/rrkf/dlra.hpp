#pragma once

#include "rrkf/common.hpp"
#include "rrkf/lowrank.hpp"
#include "rrkf/lti_sde.hpp"

#include <cstdint>

namespace rrkf {

enum class KStepMethod {
  /// Classical fourth-order Runge-Kutta, `rk4_substeps` steps per BUG step.
  rk4,
  /// Exact solution via the augmented (n r + 1) Kronecker generator; small
  /// problems only (n * r <= exponential_cap).
  exponential,
};

struct DlraConfig {
  /// BUG steps per filter interval. One step reproduces the experiments'
  /// protocol.
  Index substeps = 1;
  Index rk4_substeps = 1;
  KStepMethod k_step = KStepMethod::rk4;
  /// Carry the propagated basis to the next filter step instead of drawing
  /// a fresh random one.
  bool reuse_basis = true;
  Index exponential_cap = 1024;
};

/// Rank-r symmetric iterate Y = U D U^T of the projected Lyapunov flow.
struct DlraState {
  Matrix u;
  Matrix d;
  double t = 0.0;

  Matrix represented() const { return u * d * u.transpose(); }
};

struct BugStepInfo {
  /// K(t+h) was numerically rank deficient and its basis was completed.
  bool basis_completed = false;
  Index k_rank = 0;
};

/// One basis-update & Galerkin step of size h for
/// Qdot = A Q + Q A^T + B B^T.
///
/// K-step: integrate K' = F(K U0^T) U0 from K = U0 D0, orthonormalize to get
/// U_h and M = U_h^T U0. S-step: solve the projected r x r Lyapunov equation
/// from M D0 M^T exactly by matrix-fraction decomposition.
DlraState bug_step(const DlraState& state, const LtiSdeModel& model, double h,
                   const DlraConfig& config = {}, std::uint64_t seed = 0,
                   BugStepInfo* info = nullptr);

struct ProcessNoiseFactor {
  /// Q^{1/2} = U D^{1/2}.
  LowRankFactor factor;
  /// Final orthonormal basis, reusable at the next filter step.
  Matrix basis;
  /// Absolute sum of negative eigenvalues of D clamped to zero.
  double clamped_mass = 0.0;
  /// clamped_mass > 1e-6 * trace(D).
  bool clamp_warning = false;
  bool basis_completed = false;
};

/// Low-rank process-noise factor over an interval of length dt.
///
/// Starts from D0 = 0 and either `basis_prev` (when non-null) or a seeded
/// random orthonormal n x rank basis, then runs `config.substeps` BUG steps.
ProcessNoiseFactor process_noise_factor(const LtiSdeModel& model, const Matrix* basis_prev, Index rank,
                                        double dt, const DlraConfig& config, std::uint64_t seed);

/// K(t0 + h) for the K-step ODE, exposed for convergence studies.
Matrix integrate_k_step(const KStepField& field, const LtiSdeModel& model, const Matrix& k0, double h,
                        const DlraConfig& config);

}  // namespace rrkf
