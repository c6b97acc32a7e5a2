#include "rrkf/dense_kf.hpp"

#include <cmath>

namespace rrkf {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

Matrix symmetric_pinv(const Matrix& s) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(symmetrize(s));
  if (eig.info() != Eigen::Success) throw NumericalError("dense_rts_pass: eigendecomposition failed");
  const Vector& w = eig.eigenvalues();
  const double top = w.cwiseAbs().maxCoeff();
  Vector inv = Vector::Zero(w.size());
  for (Index i = 0; i < w.size(); ++i) {
    if (w(i) > 1e-12 * top) inv(i) = 1.0 / w(i);
  }
  return eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace

DenseGaussian dense_predict(const DenseGaussian& prior, const LinearOperator& phi, const Matrix& q) {
  DenseGaussian out;
  out.mean = phi.apply(prior.mean);
  const Matrix half = phi.apply_mat(prior.cov);  // Phi Sigma
  Matrix cov = phi.apply_mat(half.transpose());
  if (q.size() > 0) cov += q;
  out.cov = symmetrize(cov);
  return out;
}

DenseCorrection dense_correct(const DenseGaussian& pred, const ObservationModel& obs, const Vector& y) {
  require(obs.state_dim() == pred.dim() && y.size() == obs.dim(), "dense_correct: shape mismatch");
  const Matrix cp = obs.c.apply_mat(pred.cov);  // C Pi, m x n
  Matrix s = obs.c.apply_mat(cp.transpose());   // C Pi C^T
  s += obs.noise_covariance();
  s = symmetrize(s);
  Eigen::LLT<Matrix> llt(s);
  if (llt.info() != Eigen::Success) throw NumericalError("dense_correct: innovation covariance not SPD");

  const Vector v = y - obs.c.apply(pred.mean);
  const Matrix kt = llt.solve(cp);  // K^T = S^{-1} C Pi, m x n
  DenseCorrection out;
  out.posterior.mean = pred.mean + kt.transpose() * v;
  // (I - K C) Pi (I - K C)^T + K R K^T = Pi - K C Pi - Pi C^T K^T + K S K^T
  Matrix cov = pred.cov;
  cov.noalias() -= kt.transpose() * cp;
  cov.noalias() -= cp.transpose() * kt;
  cov.noalias() += kt.transpose() * (s * kt);
  out.posterior.cov = symmetrize(cov);

  const Matrix l = llt.matrixL();
  const Vector w = l.triangularView<Eigen::Lower>().solve(v);
  out.loglik = -0.5 * static_cast<double>(obs.dim()) * kLog2Pi - l.diagonal().array().log().sum() -
               0.5 * w.squaredNorm();
  return out;
}

DenseKalmanFilter::DenseKalmanFilter(const TransitionModel& transitions, DenseGaussian init,
                                     DenseFilterOptions options)
    : transitions_(&transitions), cache_(transitions), init_(std::move(init)), options_(options) {
  const Index n = transitions.dim();
  if (n > options_.dense_cap) {
    throw CapacityError("dense Kalman filter: state dimension " + std::to_string(n) + " exceeds cap " +
                        std::to_string(options_.dense_cap));
  }
  require(init_.mean.size() == n && init_.cov.rows() == n && init_.cov.cols() == n,
          "DenseKalmanFilter: init has wrong shape");
}

const DenseStepRecord& DenseKalmanFilter::step(const Observation& obs) {
  DenseStepRecord rec;
  rec.time = obs.time;
  if (count_ == 0) {
    rec.predicted = init_;
  } else {
    const DenseStepRecord& prev = trace_.records.back();
    const double dt = obs.time - prev.time;
    require(dt > 0.0, "DenseKalmanFilter: observation times must be strictly increasing");
    const LinearOperator& phi = cache_.phi(dt);
    if (!transitions_->is_noise_free() &&
        (!noise_dt_ || std::abs(*noise_dt_ - dt) > 1e-14 * std::max(1.0, std::abs(dt)))) {
      noise_ = transitions_->dense_noise(dt, options_.dense_cap);
      noise_dt_ = dt;
    }
    rec.predicted = dense_predict(prev.corrected, phi, transitions_->is_noise_free() ? Matrix() : noise_);
    rec.phi = phi;
  }
  if (obs.has_value()) {
    DenseCorrection c = dense_correct(rec.predicted, *obs.model, *obs.value);
    rec.corrected = std::move(c.posterior);
    rec.loglik_increment = c.loglik;
  } else {
    rec.corrected = rec.predicted;
  }
  trace_.total_loglik += rec.loglik_increment;
  if (!options_.store_records) {
    trace_.records.clear();
    trace_.times.clear();
  }
  trace_.times.push_back(rec.time);
  trace_.records.push_back(std::move(rec));
  ++count_;
  return trace_.records.back();
}

DenseTrace dense_kf_pass(const TransitionModel& transitions, const ObservationSequence& observations,
                         const DenseGaussian& init, const DenseFilterOptions& options) {
  require_increasing_times(observations);
  DenseKalmanFilter filter(transitions, init, options);
  if (observations.empty()) {
    DenseTrace trace;
    trace.records.push_back(DenseStepRecord{0.0, init, init, std::nullopt, 0.0});
    trace.times.push_back(0.0);
    return trace;
  }
  for (const Observation& obs : observations) filter.step(obs);
  return filter.take_trace();
}

std::vector<DenseGaussian> dense_rts_pass(const DenseTrace& trace) {
  require(!trace.records.empty(), "dense_rts_pass: empty trace");
  const std::size_t count = trace.records.size();
  std::vector<DenseGaussian> out(count);
  out[count - 1] = trace.records[count - 1].corrected;
  for (std::size_t l = count - 1; l-- > 0;) {
    const DenseGaussian& filt = trace.records[l].corrected;
    const DenseStepRecord& next = trace.records[l + 1];
    require(next.phi.has_value(), "dense_rts_pass: record lacks transition");
    const Matrix sigma_phi_t = next.phi->apply_mat(filt.cov).transpose();  // Sigma Phi^T
    const Matrix g = sigma_phi_t * symmetric_pinv(next.predicted.cov);
    out[l].mean = filt.mean + g * (out[l + 1].mean - next.predicted.mean);
    out[l].cov = symmetrize(filt.cov + g * (out[l + 1].cov - next.predicted.cov) * g.transpose());
  }
  return out;
}

}  // namespace rrkf
