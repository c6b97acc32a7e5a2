#include "rrkf/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace rrkf {

double metric_rmse(const Matrix& approx, const Matrix& reference) {
  require(approx.rows() == reference.rows() && approx.cols() == reference.cols(), "metric_rmse: shape mismatch");
  if (approx.size() == 0) return 0.0;
  return std::sqrt((approx - reference).squaredNorm() / static_cast<double>(approx.size()));
}

double factor_covariance_distance(const Matrix& factor, const Matrix& cov, Matrix* workspace) {
  require(factor.rows() == cov.rows() && cov.rows() == cov.cols(), "factor_covariance_distance: shape mismatch");
  Matrix local;
  Matrix& diff = workspace ? *workspace : local;
  diff = cov;
  diff.noalias() -= factor * factor.transpose();
  return diff.norm();
}

CovFrobeniusResult metric_cov_frobenius(const std::vector<Matrix>& factors, const std::vector<Matrix>& covs) {
  require(factors.size() == covs.size(), "metric_cov_frobenius: length mismatch");
  RatioAccumulator acc;
  Matrix work;
  for (std::size_t l = 0; l < covs.size(); ++l) {
    acc.add(factor_covariance_distance(factors[l], covs[l], &work), covs[l].norm());
  }
  return CovFrobeniusResult{acc.mean(), acc.excluded()};
}

void RmseAccumulator::add(const Vector& approx, const Vector& reference) {
  require(approx.size() == reference.size(), "RmseAccumulator: length mismatch");
  sum_ += (approx - reference).squaredNorm();
  count_ += static_cast<std::size_t>(approx.size());
}

double RmseAccumulator::value() const { return count_ == 0 ? 0.0 : std::sqrt(sum_ / static_cast<double>(count_)); }

void RatioAccumulator::add(double num, double den) {
  if (!(den > 0.0)) {
    ++excluded_;
    return;
  }
  values_.push_back(num / den);
}

double RatioAccumulator::mean() const {
  if (values_.empty()) return 0.0;
  double s = 0.0;
  for (double v : values_) s += v;
  return s / static_cast<double>(values_.size());
}

void metric_zscores(const Vector& mean, const Vector& stddev, const Vector& reference, ZScores& out) {
  require(mean.size() == stddev.size() && mean.size() == reference.size(), "metric_zscores: length mismatch");
  for (Index i = 0; i < mean.size(); ++i) {
    if (stddev(i) < 1e-12) {
      ++out.excluded;
      continue;
    }
    out.scores.push_back((mean(i) - reference(i)) / stddev(i));
  }
}

double chi1_cdf(double x) { return x <= 0.0 ? 0.0 : std::erf(x / std::sqrt(2.0)); }

namespace {

template <typename Cdf>
double ks_statistic(std::vector<double> v, Cdf cdf) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const double n = static_cast<double>(v.size());
  double d = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double f = cdf(v[i]);
    d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  return d;
}

}  // namespace

double ks_statistic_chi1(const std::vector<double>& scores) {
  std::vector<double> a(scores.size());
  std::transform(scores.begin(), scores.end(), a.begin(), [](double z) { return std::abs(z); });
  return ks_statistic(std::move(a), chi1_cdf);
}

double ks_statistic_normal(const std::vector<double>& values) {
  return ks_statistic(values, [](double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); });
}

std::vector<HistogramBin> histogram(const std::vector<double>& values, double lo, double hi, std::size_t bins) {
  require(hi > lo && bins > 0, "histogram: invalid range");
  std::vector<HistogramBin> out(bins);
  const double w = (hi - lo) / static_cast<double>(bins);
  for (std::size_t b = 0; b < bins; ++b) {
    out[b].lo = lo + w * static_cast<double>(b);
    out[b].hi = out[b].lo + w;
  }
  for (double v : values) {
    if (v < lo || v >= hi) continue;
    const auto b = std::min(bins - 1, static_cast<std::size_t>((v - lo) / w));
    ++out[b].count;
  }
  return out;
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  require(x.size() == y.size(), "loglog_slope: length mismatch");
  require(x.size() >= 2, "loglog_slope: need at least two points to fit a slope");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    require(x[i] > 0.0 && y[i] > 0.0, "loglog_slope: values must be positive");
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(x.size());
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  require(sxx > 0.0, "loglog_slope: x values must not all coincide");
  return sxy / sxx;
}

}  // namespace rrkf
