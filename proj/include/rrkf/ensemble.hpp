#pragma once

#include "rrkf/common.hpp"
#include "rrkf/dlra.hpp"
#include "rrkf/filter.hpp"
#include "rrkf/random.hpp"
#include "rrkf/transition.hpp"

#include <optional>
#include <vector>

namespace rrkf {

enum class EnsembleKind {
  /// Stochastic EnKF with perturbed observations.
  enkf,
  /// Ensemble transform KF, symmetric square-root transform.
  etkf,
};
const char* to_string(EnsembleKind kind);

struct EnsembleOptions {
  std::uint64_t seed = 0;
  DlraConfig dlra;
  /// Sample process noise from the dense Q^{1/2} instead of the rank-r DLRA
  /// factor. Oracle scale only.
  bool exact_noise = false;
  Index dense_cap = kDefaultDenseCap;
  bool store_records = true;
};

struct EnsembleStepRecord {
  double time = 0.0;
  /// Members after correction, n x r.
  Matrix members;
  double loglik_increment = 0.0;
};

struct EnsembleTrace {
  std::vector<EnsembleStepRecord> records;
  std::vector<double> times;
  double total_loglik = 0.0;
};

/// Sample mean of the columns.
Vector ensemble_mean(const Matrix& members);
/// Centered anomalies scaled by 1/sqrt(r-1), so that A A^T is the sample
/// covariance.
Matrix ensemble_anomalies(const Matrix& members);

class EnsembleFilter {
 public:
  EnsembleFilter(EnsembleKind kind, const TransitionModel& transitions, Matrix members, EnsembleOptions options);

  const EnsembleStepRecord& step(const Observation& obs);
  const EnsembleStepRecord& last() const { return trace_.records.back(); }
  const EnsembleTrace& trace() const { return trace_; }
  EnsembleTrace take_trace() { return std::move(trace_); }
  EnsembleKind kind() const { return kind_; }

 private:
  void propagate(double dt, Matrix& members);
  double correct(const ObservationModel& obs, const Vector& y, Matrix& members);

  EnsembleKind kind_;
  const TransitionModel* transitions_;
  TransitionCache cache_;
  Matrix init_;
  EnsembleOptions options_;
  Rng rng_;
  Matrix noise_basis_;
  std::optional<double> exact_dt_;
  Matrix exact_sqrt_;
  EnsembleTrace trace_;
  std::size_t count_ = 0;
};

/// Single correction of an ensemble (exposed for tests); `rng` only drives
/// the EnKF observation perturbations. Returns the log-likelihood of y under
/// the ensemble's Gaussian predictive.
double enkf_correct(const ObservationModel& obs, const Vector& y, Matrix& members, Rng& rng);
double etkf_correct(const ObservationModel& obs, const Vector& y, Matrix& members);

EnsembleTrace enkf_pass(const TransitionModel& transitions, const ObservationSequence& observations,
                        const Matrix& init_members, const EnsembleOptions& options);
EnsembleTrace etkf_pass(const TransitionModel& transitions, const ObservationSequence& observations,
                        const Matrix& init_members, const EnsembleOptions& options);

}  // namespace rrkf
