#pragma once

#include "rrkf/common.hpp"

#include <cstdint>

namespace rrkf {

/// Tall n x r factor L of the PSD matrix L * L^T.
///
/// Two factors describe the same covariance iff their outer products agree;
/// column order, signs and rotations carry no meaning. Use `covariance()` or
/// `same_covariance()` for comparisons, never the raw entries.
class LowRankFactor {
 public:
  LowRankFactor() = default;
  explicit LowRankFactor(Matrix data);

  static LowRankFactor zero(Index n, Index r) { return LowRankFactor(Matrix::Zero(n, r)); }

  Index dim() const { return data_.rows(); }
  Index rank() const { return data_.cols(); }
  const Matrix& matrix() const { return data_; }

  /// Dense n x n outer product. Only for oracle-scale problems.
  Matrix covariance() const { return data_ * data_.transpose(); }
  /// diag(L L^T), i.e. squared row norms.
  Vector marginal_variances() const { return data_.rowwise().squaredNorm(); }

 private:
  Matrix data_;
};

/// Thin singular triple: u (a x k), d (k, non-increasing), v (b x k).
struct SvdTriple {
  Matrix u;
  Vector d;
  Matrix v;

  Matrix reconstruct() const { return u * d.asDiagonal() * v.transpose(); }
};

/// Best rank-`rank` approximation in Frobenius norm (full thin SVD, then cut).
SvdTriple truncated_svd(const Eigen::Ref<const Matrix>& m, Index rank);

/// Full thin SVD; k = min(a, b).
SvdTriple thin_svd(const Eigen::Ref<const Matrix>& m);

struct OrthonormalBasis {
  Matrix q;
  /// Numerical rank of the input (columns kept before completion).
  Index input_rank = 0;
  /// True when random columns were appended to reach full width.
  bool completed = false;
};

/// Thin-QR orthonormal basis with the same column span as `m`.
///
/// Rank-deficient inputs (smallest singular value <= 1e-12 * largest, or a
/// zero matrix) are completed with seeded Gaussian columns orthogonalized
/// against the retained span, so the output always has m.cols() orthonormal
/// columns.
OrthonormalBasis orthonormalize(const Eigen::Ref<const Matrix>& m, std::uint64_t seed = 0);

/// Seeded n x r matrix with orthonormal columns.
Matrix random_orthonormal(Index n, Index r, std::uint64_t seed);

struct PinvDiagnostics {
  Index effective_rank = 0;
  bool used_svd = false;
  bool cutoff_engaged = false;
};

/// Applies the Moore-Penrose pseudoinverse of a tall factor: l^+ * x.
///
/// Uses thin QR when the R-diagonal condition estimate is below 1e8 and an
/// SVD with relative cutoff 1e-12 otherwise, so rank-deficient factors get
/// true pseudoinverse semantics.
Matrix tall_pinv_apply(const Eigen::Ref<const Matrix>& l, const Eigen::Ref<const Matrix>& x,
                       PinvDiagnostics* diagnostics = nullptr);

/// Symmetric PSD square root of a symmetric matrix. Negative eigenvalues
/// are clamped to zero; their absolute sum is written to `clamped_mass`.
Matrix psd_sqrt(const Eigen::Ref<const Matrix>& sym, double* clamped_mass = nullptr);

/// Factor with the top-`rank` eigenpairs of a symmetric PSD matrix,
/// V * sqrt(max(lambda, 0)). Columns past the numerical rank are zero.
LowRankFactor truncated_eigen_factor(const Eigen::Ref<const Matrix>& sym, Index rank);

/// Relative Frobenius distance ||a - b||_F / ||b||_F.
double relative_frobenius(const Eigen::Ref<const Matrix>& a, const Eigen::Ref<const Matrix>& b);

}  // namespace rrkf
