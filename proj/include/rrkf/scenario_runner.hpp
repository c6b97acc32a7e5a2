#pragma once

#include "rrkf/common.hpp"
#include "rrkf/dlra.hpp"
#include "rrkf/lti_sde.hpp"
#include "rrkf/problems.hpp"

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

namespace rrkf {

enum class Method { rrkf, kf, enkf, etkf };

const char* to_string(Method method);
/// Throws std::invalid_argument for unknown names.
Method parse_method(const std::string& name);

struct RunSpec {
  Method method = Method::rrkf;
  /// Ignored for kf.
  Index rank = 0;
  /// Drives the DLRA basis draws, ensemble noise and the initial ensemble.
  std::uint64_t seed = 0;
};

struct RunOutcome {
  RunSpec spec;
  bool ok = true;
  std::string error;
  double rmse_mean_vs_kf = std::numeric_limits<double>::quiet_NaN();
  double cov_rel_frob_vs_kf = std::numeric_limits<double>::quiet_NaN();
  double total_loglik = 0.0;
  /// Time spent inside the method's own step calls.
  double wall_ms = 0.0;
  /// Reference-step pairs skipped by the covariance metric.
  std::size_t cov_excluded = 0;
  /// Largest sigma_k / sigma_1 over k > collapse_rank, across stored factors.
  double max_excess_ratio = 0.0;

  // Filled when LockstepOptions::keep_per_step is set.
  std::vector<double> step_rmse;
  std::vector<double> step_mean_norm;
  std::vector<double> step_cov_rel;
  std::vector<double> step_loglik;
};

struct LockstepOptions {
  Index dense_cap = kDefaultDenseCap;
  DlraConfig dlra;
  /// Ensembles sample process noise from the dense Q^{1/2}.
  bool exact_ensemble_noise = false;
  /// When positive, track singular values beyond this index for rrkf runs.
  Index collapse_rank = 0;
  bool keep_per_step = false;
  /// Worker threads; each runs its own reference filter.
  int threads = 1;
};

/// Runs every spec against one problem, stepping all methods and the dense
/// reference filter together so no per-step covariance is stored. A failing
/// method is recorded and dropped; the others continue. Without a reference
/// (n above the cap) the comparison metrics stay NaN.
std::vector<RunOutcome> run_lockstep(const Problem& problem, const std::vector<RunSpec>& specs,
                                     const LockstepOptions& options);

}  // namespace rrkf
