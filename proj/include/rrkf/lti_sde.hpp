#pragma once

#include "rrkf/common.hpp"
#include "rrkf/linear_operator.hpp"

namespace rrkf {

/// Continuous-time prior dx = A x dt + B dw, stored as the drift A and the
/// diffusion Gram matrix B B^T. The Wiener dimension is metadata only.
struct LtiSdeModel {
  LinearOperator drift;
  LinearOperator diffusion_gram;
  Index wiener_dim = 0;

  Index dim() const { return drift.in_dim(); }
  /// Throws std::invalid_argument on shape errors.
  void validate() const;
};

/// exp(m), scaling and squaring with a degree-13 Pade approximant.
Matrix matrix_exponential(const Eigen::Ref<const Matrix>& m);

/// exp(A dt) as a dense operator (CostClass::quadratic).
LinearOperator discretize_transition(const LtiSdeModel& model, double dt);

/// Accepts a closed-form transition action; when the state dimension is at
/// most `validation_limit`, probes it against the dense exponential and
/// throws NumericalError on a relative mismatch above 1e-8.
LinearOperator discretize_transition(const LtiSdeModel& model, double dt, LinearOperator closed_form,
                                     Index validation_limit = 512);

/// Largest relative probe error ||phi x - exp(A dt) x|| / ||exp(A dt) x||.
double transition_probe_error(const LtiSdeModel& model, double dt, const LinearOperator& phi,
                              int probes = 4, std::uint64_t seed = 7);

constexpr Index kDefaultDenseCap = 2048;

/// Q(dt) solving Qdot = A Q + Q A^T + B B^T, Q(0) = 0, by matrix-fraction
/// decomposition of the 2n x 2n block generator. Throws CapacityError when
/// n exceeds `cap`.
Matrix exact_process_noise(const LtiSdeModel& model, double dt, Index cap = kDefaultDenseCap);

/// Dense Lyapunov flow Y(h) for Ydot = A Y + Y A^T + G from Y(0) = y0.
/// Uses one exponential of the 2k x 2k block generator.
Matrix lyapunov_flow(const Eigen::Ref<const Matrix>& a, const Eigen::Ref<const Matrix>& g,
                     const Eigen::Ref<const Matrix>& y0, double h);

/// Right-hand side of the K-step, F(K U0^T) U0 = A K + K (U0^T A U0)^T + B B^T U0.
/// The r x r coupling and B B^T U0 are fixed for a step and cached here.
class KStepField {
 public:
  KStepField(const LtiSdeModel& model, const Matrix& u0);

  Matrix operator()(const Matrix& k) const;

  const Matrix& coupling() const { return coupling_; }
  const Matrix& inhomogeneity() const { return forcing_; }

 private:
  const LtiSdeModel* model_;
  Matrix coupling_;  // (U0^T A U0)^T
  Matrix forcing_;   // B B^T U0
};

/// Galerkin-projected Lyapunov data U^T A U and U^T (B B^T U).
struct ProjectedLyapunov {
  Matrix drift;
  Matrix forcing;
};

ProjectedLyapunov project_lyapunov(const LtiSdeModel& model, const Matrix& u);

/// U^T F(U D U^T) U = A_D D + D A_D^T + G_D.
Matrix s_step_rhs(const ProjectedLyapunov& projected, const Matrix& d);

/// One-shot evaluation of the K-step right-hand side (tests, diagnostics).
Matrix lyapunov_k_rhs(const LtiSdeModel& model, const Matrix& k, const Matrix& u0);

}  // namespace rrkf
