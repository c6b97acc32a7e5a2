#include "rrkf/filter.hpp"

#include "rrkf/random.hpp"

#include <cmath>
#include <numbers>

namespace rrkf {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;  // log(2 pi)

void require_obs_shapes(const SqrtGaussian& pred, const ObservationModel& obs, const Vector& y) {
  require(obs.state_dim() == pred.dim(), "correct: observation operator does not match state dimension");
  require(y.size() == obs.dim(), "correct: measurement has wrong length");
  require(obs.noise_sqrt.in_dim() == obs.dim() && obs.noise_sqrt_inv.in_dim() == obs.dim(),
          "correct: noise operators do not match measurement dimension");
  require_finite(y, "correct: measurement");
}

}  // namespace

const char* to_string(CorrectionBranch branch) {
  switch (branch) {
    case CorrectionBranch::none:
      return "none";
    case CorrectionBranch::low_rank:
      return "low_rank";
    case CorrectionBranch::wide_rank:
      return "wide_rank";
  }
  return "unknown";
}

Matrix ObservationModel::noise_covariance() const {
  const Matrix s = noise_sqrt.to_dense();
  return s * s.transpose();
}

ObservationModel ObservationModel::with_diagonal_noise(LinearOperator c, const Vector& noise_std) {
  require(noise_std.size() == c.out_dim(), "with_diagonal_noise: noise_std length must equal m");
  require((noise_std.array() > 0.0).all(), "with_diagonal_noise: noise std must be positive");
  ObservationModel out;
  out.c = std::move(c);
  out.noise_sqrt = LinearOperator::diagonal(noise_std);
  out.noise_sqrt_inv = LinearOperator::diagonal(noise_std.cwiseInverse());
  out.log_det_noise_sqrt = noise_std.array().log().sum();
  return out;
}

ObservationModel ObservationModel::with_isotropic_noise(LinearOperator c, double noise_std) {
  const Index m = c.out_dim();
  return with_diagonal_noise(std::move(c), Vector::Constant(m, noise_std));
}

ObservationModel ObservationModel::with_dense_noise(LinearOperator c, const Matrix& r) {
  require(r.rows() == c.out_dim() && r.cols() == c.out_dim(), "with_dense_noise: R must be m x m");
  Eigen::LLT<Matrix> llt(symmetrize(r));
  if (llt.info() != Eigen::Success) throw std::invalid_argument("with_dense_noise: R is not SPD");
  const Matrix l = llt.matrixL();
  const Index m = r.rows();
  const Matrix l_inv = l.triangularView<Eigen::Lower>().solve(Matrix::Identity(m, m));
  ObservationModel out;
  out.c = std::move(c);
  out.noise_sqrt = LinearOperator::dense(l);
  out.noise_sqrt_inv = LinearOperator::dense(l_inv);
  out.log_det_noise_sqrt = l.diagonal().array().log().sum();
  return out;
}

PredictResult predict_from_propagated(Vector mean, const Matrix& phi_sigma, const LowRankFactor* q_sqrt,
                                      Index rank) {
  const Index n = phi_sigma.rows();
  require(mean.size() == n, "predict: mean/factor dimension mismatch");
  const Index q_cols = q_sqrt ? q_sqrt->rank() : 0;
  if (q_sqrt) require(q_sqrt->dim() == n, "predict: process-noise factor has wrong dimension");
  Matrix block(n, phi_sigma.cols() + q_cols);
  block.leftCols(phi_sigma.cols()) = phi_sigma;
  if (q_cols > 0) block.rightCols(q_cols) = q_sqrt->matrix();
  require(rank <= std::min(n, block.cols()), "predict: rank budget exceeds the prediction block");

  const SvdTriple full = thin_svd(block);
  const double total = full.d.squaredNorm();
  const double kept = full.d.head(rank).squaredNorm();
  PredictResult out;
  out.truncated_mass = total > 0.0 ? std::max(0.0, (total - kept) / total) : 0.0;
  Matrix factor = full.u.leftCols(rank) * full.d.head(rank).asDiagonal();
  require_finite(factor, "predict: predicted factor");
  out.predicted = SqrtGaussian{std::move(mean), LowRankFactor(std::move(factor))};
  return out;
}

PredictResult predict(const SqrtGaussian& prior, const LinearOperator& phi, const LowRankFactor* q_sqrt,
                      Index rank) {
  require(phi.in_dim() == prior.dim() && phi.out_dim() == prior.dim(), "predict: transition has wrong shape");
  return predict_from_propagated(phi.apply(prior.mean), phi.apply_mat(prior.cov_factor.matrix()), q_sqrt,
                                 rank);
}

CorrectionResult correct_low_rank(const SqrtGaussian& pred, const ObservationModel& obs, const Vector& y) {
  require_obs_shapes(pred, obs, y);
  const Index m = obs.dim();
  const Index r = pred.rank();
  require(r <= m, "correct_low_rank: rank exceeds measurement dimension; use correct_wide_rank");

  const Matrix& p = pred.cov_factor.matrix();
  const Vector e = obs.noise_sqrt_inv.apply(y - obs.c.apply(pred.mean));
  const Matrix w = obs.noise_sqrt_inv.apply_mat(obs.c.apply_mat(p));  // m x r
  // w = V D U^T, i.e. w^T = U D V^T.
  const SvdTriple s = thin_svd(w);
  const Matrix& u = s.v;
  const Matrix& v = s.u;
  const Vector& d = s.d;
  const Vector one_plus = (1.0 + d.array().square()).matrix();

  const Vector vte = v.transpose() * e;
  const Vector coeff = (d.array() * vte.array() / one_plus.array()).matrix();
  CorrectionResult out;
  out.posterior.mean = pred.mean + p * (u * coeff);
  out.posterior.cov_factor = LowRankFactor(p * (u * one_plus.cwiseSqrt().cwiseInverse().asDiagonal()));
  require_finite(out.posterior.mean, "correct_low_rank: posterior mean");

  const double quad = (d.array().square() / one_plus.array() * vte.array().square()).sum();
  out.loglik = -0.5 * static_cast<double>(m) * kLog2Pi - obs.log_det_noise_sqrt -
               0.5 * one_plus.array().log().sum() - 0.5 * e.squaredNorm() + 0.5 * quad;
  out.internals = UpdateInternals{CorrectionBranch::low_rank, u, d, v, e, 0.0};
  return out;
}

CorrectionResult correct_wide_rank(const SqrtGaussian& pred, const ObservationModel& obs, const Vector& y) {
  require_obs_shapes(pred, obs, y);
  const Index m = obs.dim();
  const Index r = pred.rank();

  const Matrix& p = pred.cov_factor.matrix();
  const Vector resid = y - obs.c.apply(pred.mean);
  const Matrix cp = obs.c.apply_mat(p);  // m x r
  Matrix block(m, r + m);
  block.leftCols(r) = cp;
  block.rightCols(m) = obs.noise_sqrt.to_dense();
  const SvdTriple s = thin_svd(block);
  const Matrix& us = s.u;
  const Vector& ds = s.d;
  if (ds.size() < m || ds(m - 1) <= 0.0) throw NumericalError("correct_wide_rank: singular innovation covariance");

  const Vector z = (us.transpose() * resid).cwiseQuotient(ds);
  const Matrix kt = cp.transpose() * us * ds.cwiseInverse().asDiagonal();  // r x m

  CorrectionResult out;
  out.posterior.mean = pred.mean + p * (kt * z);
  require_finite(out.posterior.mean, "correct_wide_rank: posterior mean");

  Eigen::JacobiSVD<Matrix> ksvd(kt, Eigen::ComputeFullU);
  Vector dk = Vector::Zero(r);
  dk.head(ksvd.singularValues().size()) = ksvd.singularValues();
  if (dk.size() > 0 && dk.maxCoeff() > 1.0 + 1e-8) {
    throw NumericalError("correct_wide_rank: gain singular value exceeds one; inputs are inconsistent");
  }
  Vector keep = (1.0 - dk.array().square()).matrix();
  double clamped = 0.0;
  for (Index i = 0; i < keep.size(); ++i) {
    if (keep(i) < 0.0) {
      clamped += -keep(i);
      keep(i) = 0.0;
    }
  }
  const Matrix& uk = ksvd.matrixU();
  out.posterior.cov_factor = LowRankFactor(p * (uk * keep.cwiseSqrt().asDiagonal()));
  out.loglik = -0.5 * static_cast<double>(m) * kLog2Pi - ds.array().log().sum() - 0.5 * z.squaredNorm();
  out.internals =
      UpdateInternals{CorrectionBranch::wide_rank, uk, dk, us, obs.noise_sqrt_inv.apply(resid), clamped};
  return out;
}

CorrectionResult correct(const SqrtGaussian& pred, const ObservationModel& obs, const Vector& y) {
  if (pred.rank() <= obs.dim()) return correct_low_rank(pred, obs, y);
  return correct_wide_rank(pred, obs, y);
}

void require_increasing_times(const ObservationSequence& observations) {
  for (std::size_t i = 1; i < observations.size(); ++i) {
    require(observations[i].time > observations[i - 1].time,
            "observation times must be strictly increasing (index " + std::to_string(i) + ")");
  }
}

RankReducedFilter::RankReducedFilter(const TransitionModel& transitions, SqrtGaussian init,
                                     FilterOptions options)
    : transitions_(&transitions), cache_(transitions), init_(std::move(init)), options_(options) {
  if (options_.rank == 0) options_.rank = init_.rank();
  require(init_.dim() == transitions.dim(), "RankReducedFilter: init dimension does not match model");
  require(init_.rank() == options_.rank, "RankReducedFilter: init factor must have `rank` columns");
  require(options_.rank >= 1 && options_.rank <= transitions.dim(), "RankReducedFilter: rank out of range");
  require_finite(init_.mean, "RankReducedFilter: init mean");
}

const FilterStepRecord& RankReducedFilter::step(const Observation& obs) {
  FilterStepRecord rec;
  rec.time = obs.time;
  const Index r = options_.rank;

  if (count_ == 0) {
    rec.predicted = init_;
  } else {
    const FilterStepRecord& prev = trace_.records.back();
    const double dt = obs.time - prev.time;
    require(dt > 0.0, "RankReducedFilter: observation times must be strictly increasing");
    const LinearOperator& phi = cache_.phi(dt);

    const LowRankFactor* q_ptr = nullptr;
    if (!transitions_->is_noise_free()) {
      ProcessNoiseFactor noise = transitions_->low_rank_noise(
          dt, noise_basis_.size() > 0 ? &noise_basis_ : nullptr, r, options_.dlra,
          mix_seed(options_.seed, count_));
      noise_basis_ = std::move(noise.basis);
      rec.diagnostics.noise_clamped_mass = noise.clamped_mass;
      rec.diagnostics.noise_clamp_warning = noise.clamp_warning;
      rec.diagnostics.noise_basis_completed = noise.basis_completed;
      rec.q_factor = std::move(noise.factor);
      q_ptr = &*rec.q_factor;
    }

    const Matrix phi_sigma = phi.apply_mat(prev.corrected.cov_factor.matrix());
    PredictResult pr = predict_from_propagated(phi.apply(prev.corrected.mean), phi_sigma, q_ptr, r);
    rec.diagnostics.truncated_mass = pr.truncated_mass;
    PinvDiagnostics pinv;
    rec.gain_core = tall_pinv_apply(pr.predicted.cov_factor.matrix(), phi_sigma, &pinv).transpose();
    rec.diagnostics.pinv_cutoff_engaged = pinv.cutoff_engaged;
    rec.predicted = std::move(pr.predicted);
    rec.phi = phi;
  }

  if (obs.has_value()) {
    CorrectionResult cr = correct(rec.predicted, *obs.model, *obs.value);
    if (!std::isfinite(cr.loglik)) throw NumericalError("RankReducedFilter: non-finite log-likelihood");
    rec.corrected = std::move(cr.posterior);
    rec.loglik_increment = cr.loglik;
    rec.whitened_residual = std::move(cr.internals.residual);
    rec.diagnostics.branch = cr.internals.branch;
    rec.diagnostics.gain_clamped_mass = cr.internals.clamped_mass;
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

FilterTrace filter_pass(const TransitionModel& transitions, const ObservationSequence& observations,
                        const SqrtGaussian& init, const FilterOptions& options) {
  require_increasing_times(observations);
  RankReducedFilter filter(transitions, init, options);
  if (observations.empty()) {
    FilterTrace trace;
    FilterStepRecord rec;
    rec.predicted = init;
    rec.corrected = init;
    trace.records.push_back(std::move(rec));
    trace.times.push_back(0.0);
    return trace;
  }
  for (const Observation& obs : observations) filter.step(obs);
  return filter.take_trace();
}

}  // namespace rrkf
