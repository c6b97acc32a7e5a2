#include "rrkf/ensemble.hpp"

#include <cmath>

namespace rrkf {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

/// Whitened quantities of one correction. With S = R^{-1/2} C A = U diag(s) V^T
/// (thin), every ensemble-space inverse reduces to the k = min(m, r)
/// singular directions:
///   (I + S^T S)^{-1} S^T = V diag(s / (1 + s^2)) U^T,
///   (I + S^T S)^{-1/2}   = I + V (diag((1 + s^2)^{-1/2}) - I) V^T.
struct WhitenedInnovation {
  Vector e;
  SvdTriple svd;
  double loglik = 0.0;
};

WhitenedInnovation whiten(const ObservationModel& obs, const Vector& y, const Vector& mean, const Matrix& anomalies) {
  require(obs.state_dim() == mean.size() && y.size() == obs.dim(), "ensemble correction: shape mismatch");
  WhitenedInnovation w;
  w.e = obs.noise_sqrt_inv.apply(y - obs.c.apply(mean));
  w.svd = thin_svd(obs.noise_sqrt_inv.apply_mat(obs.c.apply_mat(anomalies)));
  const Vector s2 = w.svd.d.array().square();
  const Vector ute = w.svd.u.transpose() * w.e;
  // Predictive covariance R^{1/2}(I + S S^T)R^{T/2}: determinant lemma and
  // Woodbury in the singular directions.
  const double quad = w.e.squaredNorm() - (s2.array() / (1.0 + s2.array()) * ute.array().square()).sum();
  w.loglik = -0.5 * static_cast<double>(obs.dim()) * kLog2Pi - obs.log_det_noise_sqrt -
             0.5 * s2.array().log1p().sum() - 0.5 * quad;
  return w;
}

/// (I + S^T S)^{-1} S^T x for a block x of whitened innovations.
Matrix ensemble_gain_weights(const WhitenedInnovation& w, const Matrix& x) {
  const Vector scale = (w.svd.d.array() / (1.0 + w.svd.d.array().square())).matrix();
  return w.svd.v * (scale.asDiagonal() * (w.svd.u.transpose() * x));
}

}  // namespace

const char* to_string(EnsembleKind kind) { return kind == EnsembleKind::enkf ? "enkf" : "etkf"; }

Vector ensemble_mean(const Matrix& members) { return members.rowwise().mean(); }

Matrix ensemble_anomalies(const Matrix& members) {
  require(members.cols() >= 2, "ensemble_anomalies: need at least two members");
  const Vector mean = ensemble_mean(members);
  return (members.colwise() - mean) / std::sqrt(static_cast<double>(members.cols() - 1));
}

double enkf_correct(const ObservationModel& obs, const Vector& y, Matrix& members, Rng& rng) {
  const Vector mean = ensemble_mean(members);
  const Matrix a = ensemble_anomalies(members);
  const WhitenedInnovation w = whiten(obs, y, mean, a);
  const Index m = obs.dim();
  const Index r = members.cols();
  // Whitened innovations of the perturbed observations, one column per member.
  Matrix d = obs.noise_sqrt_inv.apply_mat((-obs.c.apply_mat(members)).colwise() + y);
  d += rng.normal_matrix(m, r);
  members.noalias() += a * ensemble_gain_weights(w, d);
  return w.loglik;
}

double etkf_correct(const ObservationModel& obs, const Vector& y, Matrix& members) {
  const Vector mean = ensemble_mean(members);
  const Matrix a = ensemble_anomalies(members);
  const WhitenedInnovation w = whiten(obs, y, mean, a);
  const Index r = members.cols();
  const Vector new_mean = mean + a * ensemble_gain_weights(w, w.e);
  const Vector shrink = ((1.0 + w.svd.d.array().square()).rsqrt() - 1.0).matrix();
  // A T with the symmetric T = (I + S^T S)^{-1/2}.
  Matrix new_anom = a;
  new_anom.noalias() += (a * w.svd.v) * shrink.asDiagonal() * w.svd.v.transpose();
  members = (new_anom * std::sqrt(static_cast<double>(r - 1))).colwise() + new_mean;
  return w.loglik;
}

EnsembleFilter::EnsembleFilter(EnsembleKind kind, const TransitionModel& transitions, Matrix members,
                               EnsembleOptions options)
    : kind_(kind),
      transitions_(&transitions),
      cache_(transitions),
      init_(std::move(members)),
      options_(options),
      rng_(options.seed, 0x656e73) {
  require(init_.rows() == transitions.dim(), "EnsembleFilter: members have wrong dimension");
  require(init_.cols() >= 2, "EnsembleFilter: ensemble size must be at least 2");
  require_finite(init_, "EnsembleFilter: initial members");
}

void EnsembleFilter::propagate(double dt, Matrix& members) {
  members = cache_.phi(dt).apply_mat(members);
  if (transitions_->is_noise_free()) return;
  const Index r = members.cols();
  if (options_.exact_noise) {
    if (!exact_dt_ || std::abs(*exact_dt_ - dt) > 1e-14 * std::max(1.0, std::abs(dt))) {
      exact_sqrt_ = transitions_->dense_noise_sqrt(dt, options_.dense_cap);
      exact_dt_ = dt;
    }
    members.noalias() += exact_sqrt_ * rng_.normal_matrix(exact_sqrt_.cols(), r);
    return;
  }
  const Index rank = std::min<Index>(r, transitions_->dim());
  ProcessNoiseFactor noise =
      transitions_->low_rank_noise(dt, noise_basis_.size() > 0 ? &noise_basis_ : nullptr, rank, options_.dlra,
                                   mix_seed(options_.seed, count_));
  noise_basis_ = std::move(noise.basis);
  members.noalias() += noise.factor.matrix() * rng_.normal_matrix(noise.factor.rank(), r);
}

double EnsembleFilter::correct(const ObservationModel& obs, const Vector& y, Matrix& members) {
  return kind_ == EnsembleKind::enkf ? enkf_correct(obs, y, members, rng_) : etkf_correct(obs, y, members);
}

const EnsembleStepRecord& EnsembleFilter::step(const Observation& obs) {
  EnsembleStepRecord rec;
  rec.time = obs.time;
  if (count_ == 0) {
    rec.members = init_;
  } else {
    const EnsembleStepRecord& prev = trace_.records.back();
    const double dt = obs.time - prev.time;
    require(dt > 0.0, "EnsembleFilter: observation times must be strictly increasing");
    rec.members = prev.members;
    propagate(dt, rec.members);
  }
  if (obs.has_value()) {
    rec.loglik_increment = correct(*obs.model, *obs.value, rec.members);
    require_finite(rec.members, "EnsembleFilter: corrected members");
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

namespace {

EnsembleTrace ensemble_pass(EnsembleKind kind, const TransitionModel& transitions,
                            const ObservationSequence& observations, const Matrix& init_members,
                            const EnsembleOptions& options) {
  require_increasing_times(observations);
  EnsembleFilter filter(kind, transitions, init_members, options);
  if (observations.empty()) {
    EnsembleTrace trace;
    trace.records.push_back(EnsembleStepRecord{0.0, init_members, 0.0});
    trace.times.push_back(0.0);
    return trace;
  }
  for (const Observation& obs : observations) filter.step(obs);
  return filter.take_trace();
}

}  // namespace

EnsembleTrace enkf_pass(const TransitionModel& transitions, const ObservationSequence& observations,
                        const Matrix& init_members, const EnsembleOptions& options) {
  return ensemble_pass(EnsembleKind::enkf, transitions, observations, init_members, options);
}

EnsembleTrace etkf_pass(const TransitionModel& transitions, const ObservationSequence& observations,
                        const Matrix& init_members, const EnsembleOptions& options) {
  return ensemble_pass(EnsembleKind::etkf, transitions, observations, init_members, options);
}

}  // namespace rrkf
