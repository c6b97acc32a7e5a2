#include "rrkf/lti_sde.hpp"

#include "rrkf/random.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <sstream>

namespace rrkf {

void LtiSdeModel::validate() const {
  require(drift.in_dim() == drift.out_dim(), "LtiSdeModel: drift must be square");
  require(diffusion_gram.in_dim() == drift.in_dim() && diffusion_gram.out_dim() == drift.in_dim(),
          "LtiSdeModel: diffusion Gram dimension mismatch");
}

Matrix matrix_exponential(const Eigen::Ref<const Matrix>& m) {
  require(m.rows() == m.cols(), "matrix_exponential: matrix must be square");
  require_finite(m, "matrix_exponential");
  Matrix out = Matrix(m).exp();
  require_finite(out, "matrix_exponential");
  return out;
}

LinearOperator discretize_transition(const LtiSdeModel& model, double dt) {
  require(dt > 0.0, "discretize_transition: dt must be positive");
  return LinearOperator::dense(matrix_exponential(model.drift.to_dense() * dt));
}

double transition_probe_error(const LtiSdeModel& model, double dt, const LinearOperator& phi,
                              int probes, std::uint64_t seed) {
  const Matrix reference = matrix_exponential(model.drift.to_dense() * dt);
  Rng rng(seed);
  Matrix x = rng.normal_matrix(model.dim(), probes);
  Matrix expected = reference * x;
  Matrix actual = phi.apply_mat(x);
  double worst = 0.0;
  for (Index j = 0; j < probes; ++j) {
    const double denom = std::max(expected.col(j).norm(), 1e-300);
    worst = std::max(worst, (actual.col(j) - expected.col(j)).norm() / denom);
  }
  return worst;
}

LinearOperator discretize_transition(const LtiSdeModel& model, double dt, LinearOperator closed_form,
                                     Index validation_limit) {
  require(dt > 0.0, "discretize_transition: dt must be positive");
  require(closed_form.in_dim() == model.dim() && closed_form.out_dim() == model.dim(),
          "discretize_transition: closed-form transition has wrong shape");
  if (model.dim() <= validation_limit) {
    const double err = transition_probe_error(model, dt, closed_form);
    if (err > 1e-8) {
      std::ostringstream msg;
      msg << "discretize_transition: closed-form transition deviates from exp(A dt) by " << err;
      throw NumericalError(msg.str());
    }
  }
  return closed_form;
}

Matrix lyapunov_flow(const Eigen::Ref<const Matrix>& a, const Eigen::Ref<const Matrix>& g,
                     const Eigen::Ref<const Matrix>& y0, double h) {
  const Index k = a.rows();
  require(a.cols() == k && g.rows() == k && g.cols() == k && y0.rows() == k && y0.cols() == k,
          "lyapunov_flow: shape mismatch");
  Matrix block = Matrix::Zero(2 * k, 2 * k);
  block.topLeftCorner(k, k) = a * h;
  block.topRightCorner(k, k) = g * h;
  block.bottomRightCorner(k, k) = -a.transpose() * h;
  const Matrix e = matrix_exponential(block);
  const Matrix transition = e.topLeftCorner(k, k);
  // exp(-A^T h) is the inverse of transition^T, so the forced part is F12 * F11^T.
  Matrix forced = e.topRightCorner(k, k) * transition.transpose();
  return symmetrize(transition * y0 * transition.transpose() + forced);
}

Matrix exact_process_noise(const LtiSdeModel& model, double dt, Index cap) {
  require(dt > 0.0, "exact_process_noise: dt must be positive");
  const Index n = model.dim();
  if (n > cap) {
    std::ostringstream msg;
    msg << "exact_process_noise: state dimension " << n << " exceeds dense cap " << cap
        << "; use the low-rank (DLRA) process-noise factor instead";
    throw CapacityError(msg.str());
  }
  if (model.diffusion_gram.is_zero()) return Matrix::Zero(n, n);
  const Matrix a = model.drift.to_dense();
  const Matrix g = symmetrize(model.diffusion_gram.to_dense());
  return lyapunov_flow(a, g, Matrix::Zero(n, n), dt);
}

KStepField::KStepField(const LtiSdeModel& model, const Matrix& u0) : model_(&model) {
  coupling_ = (u0.transpose() * model.drift.apply_mat(u0)).transpose();
  forcing_ = model.diffusion_gram.apply_mat(u0);
}

Matrix KStepField::operator()(const Matrix& k) const {
  Matrix out = model_->drift.apply_mat(k);
  out.noalias() += k * coupling_;
  out += forcing_;
  return out;
}

ProjectedLyapunov project_lyapunov(const LtiSdeModel& model, const Matrix& u) {
  ProjectedLyapunov p;
  p.drift = u.transpose() * model.drift.apply_mat(u);
  p.forcing = symmetrize(u.transpose() * model.diffusion_gram.apply_mat(u));
  return p;
}

Matrix s_step_rhs(const ProjectedLyapunov& projected, const Matrix& d) {
  return projected.drift * d + d * projected.drift.transpose() + projected.forcing;
}

Matrix lyapunov_k_rhs(const LtiSdeModel& model, const Matrix& k, const Matrix& u0) {
  return KStepField(model, u0)(k);
}

}  // namespace rrkf
