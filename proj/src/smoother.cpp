#include "rrkf/smoother.hpp"

#include "rrkf/random.hpp"

namespace rrkf {

BackwardKernel build_backward_kernel(const FilterStepRecord& current, const FilterStepRecord& next) {
  require(next.phi.has_value() && next.gain_core.size() > 0,
          "build_backward_kernel: next record lacks transition or gain core");
  const Matrix& sigma = current.corrected.cov_factor.matrix();
  const Matrix& pi = next.predicted.cov_factor.matrix();
  require(next.gain_core.rows() == sigma.cols() && next.gain_core.cols() == pi.cols(),
          "build_backward_kernel: gain core shape mismatch");

  BackwardKernel k;
  const SvdTriple s = thin_svd(pi);
  const double cutoff = s.d.size() > 0 ? 1e-12 * s.d(0) : 0.0;
  Vector d_inv = Vector::Zero(s.d.size());
  for (Index i = 0; i < s.d.size(); ++i) {
    if (s.d(i) > cutoff && s.d(i) > 0.0) {
      d_inv(i) = 1.0 / s.d(i);
    } else {
      k.pinv_cutoff_engaged = true;
    }
  }
  k.gain_left = sigma * (next.gain_core * (s.v * d_inv.asDiagonal()));
  k.gain_right = s.u;

  k.shift = current.corrected.mean - k.gain_apply(next.predicted.mean);

  const Matrix phi_sigma = next.phi->apply_mat(sigma);
  const Index q_cols = next.q_factor ? next.q_factor->rank() : 0;
  Matrix block(sigma.rows(), sigma.cols() + q_cols);
  block.leftCols(sigma.cols()) = sigma - k.gain_apply(phi_sigma);
  if (q_cols > 0) block.rightCols(q_cols) = k.gain_apply(next.q_factor->matrix());
  const SvdTriple t = truncated_svd(block, sigma.cols());
  k.noise_factor = LowRankFactor(t.u * t.d.asDiagonal());
  return k;
}

SmootherResult smooth(const FilterTrace& trace) {
  require(!trace.records.empty(), "smooth: empty trace");
  const std::size_t count = trace.records.size();
  SmootherResult out;
  out.marginals.resize(count);
  out.kernels.resize(count - 1);
  out.marginals[count - 1] = trace.records[count - 1].corrected;
  for (std::size_t l = count - 1; l-- > 0;) {
    const BackwardKernel& k = out.kernels[l] = build_backward_kernel(trace.records[l], trace.records[l + 1]);
    const SqrtGaussian& after = out.marginals[l + 1];
    const Index r = trace.records[l].corrected.rank();
    Matrix block(after.dim(), after.rank() + k.noise_factor.rank());
    block.leftCols(after.rank()) = k.gain_apply(after.cov_factor.matrix());
    block.rightCols(k.noise_factor.rank()) = k.noise_factor.matrix();
    const SvdTriple t = truncated_svd(block, r);
    out.marginals[l] = SqrtGaussian{k.gain_apply(after.mean) + k.shift, LowRankFactor(t.u * t.d.asDiagonal())};
  }
  return out;
}

std::vector<SqrtGaussian> smooth_pass(const FilterTrace& trace) { return smooth(trace).marginals; }

std::vector<Matrix> sample_posterior(const FilterTrace& trace, const std::vector<BackwardKernel>& kernels,
                                     Index count, std::uint64_t seed) {
  require(count >= 1, "sample_posterior: count must be positive");
  require(!trace.records.empty(), "sample_posterior: empty trace");
  require(kernels.size() + 1 == trace.records.size(), "sample_posterior: kernel count mismatch");
  const std::size_t steps = trace.records.size();
  const SqrtGaussian& last = trace.records.back().corrected;
  std::vector<Matrix> out;
  out.reserve(static_cast<std::size_t>(count));
  for (Index i = 0; i < count; ++i) {
    Rng rng(seed, static_cast<std::uint64_t>(i));
    Matrix path(last.dim(), static_cast<Index>(steps));
    path.col(static_cast<Index>(steps - 1)) = last.mean + last.cov_factor.matrix() * rng.normal_vector(last.rank());
    for (std::size_t l = steps - 1; l-- > 0;) {
      const BackwardKernel& k = kernels[l];
      path.col(static_cast<Index>(l)) = k.gain_apply(Vector(path.col(static_cast<Index>(l + 1)))) + k.shift +
                                        k.noise_factor.matrix() * rng.normal_vector(k.noise_factor.rank());
    }
    out.push_back(std::move(path));
  }
  return out;
}

std::vector<Matrix> sample_posterior(const FilterTrace& trace, Index count, std::uint64_t seed) {
  return sample_posterior(trace, smooth(trace).kernels, count, seed);
}

}  // namespace rrkf
