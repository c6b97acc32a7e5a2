#pragma once

#include "rrkf/common.hpp"

#include <cstddef>
#include <vector>

namespace rrkf {

/// sqrt of the mean of squared entrywise differences; columns are time steps.
double metric_rmse(const Matrix& approx_means, const Matrix& reference_means);

/// ||L L^T - Sigma||_F. `workspace` (optional) avoids an n x n allocation.
double factor_covariance_distance(const Matrix& factor, const Matrix& cov, Matrix* workspace = nullptr);

struct CovFrobeniusResult {
  double value = 0.0;
  /// Steps skipped because the reference covariance was zero.
  std::size_t excluded = 0;
};

/// (1/N) sum_l ||L_l L_l^T - Sigma_l||_F / ||Sigma_l||_F.
CovFrobeniusResult metric_cov_frobenius(const std::vector<Matrix>& factors, const std::vector<Matrix>& covs);

/// Online versions used when the per-step covariances are not kept.
class RmseAccumulator {
 public:
  void add(const Vector& approx, const Vector& reference);
  double value() const;
  std::size_t entries() const { return count_; }

 private:
  double sum_ = 0.0;
  std::size_t count_ = 0;
};

class RatioAccumulator {
 public:
  /// Adds num / den; den <= 0 counts as excluded.
  void add(double num, double den);
  double mean() const;
  std::size_t count() const { return values_.size(); }
  std::size_t excluded() const { return excluded_; }
  const std::vector<double>& values() const { return values_; }

 private:
  std::vector<double> values_;
  std::size_t excluded_ = 0;
};

struct ZScores {
  std::vector<double> scores;
  /// Entries with marginal std below 1e-12.
  std::size_t excluded = 0;
};

/// (mean - reference) / std per component; appends to `out`.
void metric_zscores(const Vector& mean, const Vector& stddev, const Vector& reference, ZScores& out);

/// Chi(1) CDF, erf(x / sqrt(2)) for x >= 0.
double chi1_cdf(double x);
/// One-sample Kolmogorov-Smirnov statistic of |scores| against Chi(1).
double ks_statistic_chi1(const std::vector<double>& scores);
/// One-sample KS statistic of `values` against a standard normal.
double ks_statistic_normal(const std::vector<double>& values);

struct HistogramBin {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t count = 0;
};
std::vector<HistogramBin> histogram(const std::vector<double>& values, double lo, double hi, std::size_t bins);

/// Least-squares slope of log(y) against log(x).
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace rrkf
