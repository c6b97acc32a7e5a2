#pragma once

#include "rrkf/common.hpp"
#include "rrkf/filter.hpp"
#include "rrkf/transition.hpp"

#include <optional>
#include <vector>

namespace rrkf {

struct DenseGaussian {
  Vector mean;
  Matrix cov;

  Index dim() const { return mean.size(); }
};

struct DenseStepRecord {
  double time = 0.0;
  DenseGaussian predicted;
  DenseGaussian corrected;
  /// Phi used to reach this step; empty for the first record.
  std::optional<LinearOperator> phi;
  double loglik_increment = 0.0;
};

struct DenseTrace {
  std::vector<DenseStepRecord> records;
  std::vector<double> times;
  double total_loglik = 0.0;
};

struct DenseFilterOptions {
  Index dense_cap = kDefaultDenseCap;
  bool store_records = true;
};

/// Full-covariance Kalman filter, the reference for every low-rank and
/// ensemble method. Step semantics match RankReducedFilter.
class DenseKalmanFilter {
 public:
  DenseKalmanFilter(const TransitionModel& transitions, DenseGaussian init, DenseFilterOptions options = {});

  const DenseStepRecord& step(const Observation& obs);
  const DenseStepRecord& last() const { return trace_.records.back(); }
  const DenseTrace& trace() const { return trace_; }
  DenseTrace take_trace() { return std::move(trace_); }

 private:
  const TransitionModel* transitions_;
  TransitionCache cache_;
  DenseGaussian init_;
  DenseFilterOptions options_;
  std::optional<double> noise_dt_;
  Matrix noise_;
  DenseTrace trace_;
  std::size_t count_ = 0;
};

/// Prediction Phi Sigma Phi^T + Q (Q may be empty for zero noise).
DenseGaussian dense_predict(const DenseGaussian& prior, const LinearOperator& phi, const Matrix& q);

struct DenseCorrection {
  DenseGaussian posterior;
  double loglik = 0.0;
};
/// Kalman update with the covariance in Joseph form, expanded so no n x n
/// gain product is formed.
DenseCorrection dense_correct(const DenseGaussian& pred, const ObservationModel& obs, const Vector& y);

DenseTrace dense_kf_pass(const TransitionModel& transitions, const ObservationSequence& observations,
                         const DenseGaussian& init, const DenseFilterOptions& options = {});

/// Rauch-Tung-Striebel smoother with G = Sigma Phi^T Pi^+ (eigen pseudoinverse,
/// relative cutoff 1e-12).
std::vector<DenseGaussian> dense_rts_pass(const DenseTrace& trace);

}  // namespace rrkf
