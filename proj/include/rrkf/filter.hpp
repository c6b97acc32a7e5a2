#pragma once

#include "rrkf/common.hpp"
#include "rrkf/dlra.hpp"
#include "rrkf/linear_operator.hpp"
#include "rrkf/lowrank.hpp"
#include "rrkf/transition.hpp"

#include <functional>
#include <memory>
#include <optional>
#include <vector>

namespace rrkf {

struct SqrtGaussian {
  Vector mean;
  LowRankFactor cov_factor;

  Index dim() const { return mean.size(); }
  Index rank() const { return cov_factor.rank(); }
};

/// y = C x + v, v ~ N(0, R), with R accessed only through R^{1/2},
/// R^{-1/2} and log|R^{1/2}|.
struct ObservationModel {
  LinearOperator c;
  LinearOperator noise_sqrt;
  LinearOperator noise_sqrt_inv;
  double log_det_noise_sqrt = 0.0;

  Index dim() const { return c.out_dim(); }
  Index state_dim() const { return c.in_dim(); }
  Matrix noise_covariance() const;

  static ObservationModel with_diagonal_noise(LinearOperator c, const Vector& noise_std);
  static ObservationModel with_isotropic_noise(LinearOperator c, double noise_std);
  /// R must be SPD; its lower Cholesky factor is used as R^{1/2}.
  static ObservationModel with_dense_noise(LinearOperator c, const Matrix& r);
};

/// One entry of an observation sequence; `value` empty marks a missing
/// measurement (prediction only).
struct Observation {
  double time = 0.0;
  std::shared_ptr<const ObservationModel> model;
  std::optional<Vector> value;

  bool has_value() const { return model && value.has_value(); }
};
using ObservationSequence = std::vector<Observation>;

enum class CorrectionBranch { none, low_rank, wide_rank };
const char* to_string(CorrectionBranch branch);

struct StepDiagnostics {
  /// Discarded singular mass of the prediction block, sum_{k>r} d_k^2 / sum d_k^2.
  double truncated_mass = 0.0;
  /// Negative DLRA eigenvalue mass clamped when forming Q^{1/2}.
  double noise_clamped_mass = 0.0;
  bool noise_clamp_warning = false;
  bool noise_basis_completed = false;
  /// Wide-rank branch: mass of 1 - d_k^2 clamped at zero.
  double gain_clamped_mass = 0.0;
  bool pinv_cutoff_engaged = false;
  CorrectionBranch branch = CorrectionBranch::none;
};

struct FilterStepRecord {
  double time = 0.0;
  SqrtGaussian predicted;
  SqrtGaussian corrected;
  /// Gamma linking the previous filtering factor to this step's predicted
  /// factor (r x r). Empty for the first record.
  Matrix gain_core;
  /// Q^{1/2} used to reach this step; empty for the first record or for
  /// noise-free dynamics.
  std::optional<LowRankFactor> q_factor;
  /// Phi used to reach this step; empty for the first record.
  std::optional<LinearOperator> phi;
  double loglik_increment = 0.0;
  Vector whitened_residual;
  StepDiagnostics diagnostics;
};

struct FilterTrace {
  std::vector<FilterStepRecord> records;
  std::vector<double> times;
  double total_loglik = 0.0;
};

struct PredictResult {
  SqrtGaussian predicted;
  double truncated_mass = 0.0;
};

/// mu^- = Phi mu and Pi^{1/2} = U~ D~ from the rank-r truncated SVD of
/// [Phi Sigma^{1/2} | Q^{1/2}]. A null `q_sqrt` means Q = 0.
PredictResult predict(const SqrtGaussian& prior, const LinearOperator& phi, const LowRankFactor* q_sqrt,
                      Index rank);
/// Same, with Phi Sigma^{1/2} already formed.
PredictResult predict_from_propagated(Vector mean, const Matrix& phi_sigma, const LowRankFactor* q_sqrt,
                                      Index rank);

struct UpdateInternals {
  CorrectionBranch branch = CorrectionBranch::none;
  Matrix u;
  Vector d;
  Matrix v;
  /// e = R^{-1/2}(y - C mu^-).
  Vector residual;
  double clamped_mass = 0.0;
};

struct CorrectionResult {
  SqrtGaussian posterior;
  double loglik = 0.0;
  UpdateInternals internals;
};

/// Correction for r <= m via the SVD of R^{-1/2} C Pi^{1/2}.
CorrectionResult correct_low_rank(const SqrtGaussian& pred, const ObservationModel& obs, const Vector& y);
/// Correction for r > m via the SVD of [C Pi^{1/2} | R^{1/2}].
CorrectionResult correct_wide_rank(const SqrtGaussian& pred, const ObservationModel& obs, const Vector& y);
/// Dispatches on r <= m.
CorrectionResult correct(const SqrtGaussian& pred, const ObservationModel& obs, const Vector& y);

struct FilterOptions {
  Index rank = 0;
  DlraConfig dlra;
  std::uint64_t seed = 0;
  /// Keep every record in the trace (required by the smoother). When false
  /// only the latest record is retained.
  bool store_records = true;
};

/// Steppable rank-reduced filter. The first `step` call initializes at the
/// first observation time (correcting if a value is present); later calls
/// predict over the elapsed interval and correct.
class RankReducedFilter {
 public:
  RankReducedFilter(const TransitionModel& transitions, SqrtGaussian init, FilterOptions options);

  const FilterStepRecord& step(const Observation& obs);
  const FilterStepRecord& last() const { return trace_.records.back(); }
  std::size_t steps() const { return count_; }
  const FilterTrace& trace() const { return trace_; }
  FilterTrace take_trace() { return std::move(trace_); }

 private:
  const TransitionModel* transitions_;
  TransitionCache cache_;
  SqrtGaussian init_;
  FilterOptions options_;
  Matrix noise_basis_;
  FilterTrace trace_;
  std::size_t count_ = 0;
};

FilterTrace filter_pass(const TransitionModel& transitions, const ObservationSequence& observations,
                        const SqrtGaussian& init, const FilterOptions& options);

/// Throws std::invalid_argument unless observation times strictly increase.
void require_increasing_times(const ObservationSequence& observations);

}  // namespace rrkf
