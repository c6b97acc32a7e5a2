#pragma once

#include "rrkf/common.hpp"
#include "rrkf/filter.hpp"

#include <cstdint>
#include <vector>

namespace rrkf {

/// Gaussian backward kernel x_l | x_{l+1} ~ N(G x_{l+1} + v, P).
///
/// G = Sigma_l^{1/2} Gamma (Pi_{l+1}^{1/2})^+ is kept as two n x r blocks,
/// G x = left * (right^T x), with the pseudoinverse taken by SVD.
struct BackwardKernel {
  Matrix gain_left;
  Matrix gain_right;
  Vector shift;
  LowRankFactor noise_factor;
  bool pinv_cutoff_engaged = false;

  Matrix gain_apply(const Matrix& x) const { return gain_left * (gain_right.transpose() * x); }
  Vector gain_apply(const Vector& x) const { return gain_left * (gain_right.transpose() * x); }
};

/// Kernel between `current` (time l) and `next` (time l+1).
BackwardKernel build_backward_kernel(const FilterStepRecord& current, const FilterStepRecord& next);

struct SmootherResult {
  std::vector<SqrtGaussian> marginals;
  /// kernels[l] links step l to step l+1; size N-1.
  std::vector<BackwardKernel> kernels;
};

SmootherResult smooth(const FilterTrace& trace);
/// Smoothing marginals only.
std::vector<SqrtGaussian> smooth_pass(const FilterTrace& trace);

/// Backward simulation; each trajectory is an n x N matrix (column l is the
/// state at trace.times[l]). Sample i uses stream i of `seed`.
std::vector<Matrix> sample_posterior(const FilterTrace& trace, Index count, std::uint64_t seed);
std::vector<Matrix> sample_posterior(const FilterTrace& trace, const std::vector<BackwardKernel>& kernels,
                                     Index count, std::uint64_t seed);

}  // namespace rrkf
