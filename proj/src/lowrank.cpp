#include "rrkf/lowrank.hpp"

#include "rrkf/random.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>

namespace rrkf {

namespace {

constexpr double kRankTolerance = 1e-12;
constexpr double kQrConditionLimit = 1e8;
// Below this size JacobiSVD is both accurate and fast enough.
constexpr Index kJacobiLimit = 96;

SvdTriple svd_small_or_square(const Eigen::Ref<const Matrix>& m) {
  SvdTriple out;
  if (std::min(m.rows(), m.cols()) <= kJacobiLimit) {
    Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    out.u = svd.matrixU();
    out.d = svd.singularValues();
    out.v = svd.matrixV();
  } else {
    Eigen::BDCSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    out.u = svd.matrixU();
    out.d = svd.singularValues();
    out.v = svd.matrixV();
  }
  return out;
}

}  // namespace

LowRankFactor::LowRankFactor(Matrix data) : data_(std::move(data)) {
  require_finite(data_, "LowRankFactor");
}

SvdTriple thin_svd(const Eigen::Ref<const Matrix>& m) {
  require_finite(m, "thin_svd");
  const Index a = m.rows();
  const Index b = m.cols();
  if (a == 0 || b == 0) {
    return SvdTriple{Matrix(a, 0), Vector(0), Matrix(b, 0)};
  }
  // Tall inputs: reduce to the small triangular factor first, O(a b^2).
  if (a > 2 * b) {
    Eigen::HouseholderQR<Matrix> qr(m);
    Matrix r = qr.matrixQR().topRows(b).triangularView<Eigen::Upper>();
    SvdTriple small = svd_small_or_square(r);
    Matrix q = qr.householderQ() * Matrix::Identity(a, b);
    small.u = q * small.u;
    return small;
  }
  if (b > 2 * a) {
    SvdTriple t = thin_svd(m.transpose());
    std::swap(t.u, t.v);
    return t;
  }
  return svd_small_or_square(m);
}

SvdTriple truncated_svd(const Eigen::Ref<const Matrix>& m, Index rank) {
  require(rank >= 0 && rank <= std::min(m.rows(), m.cols()),
          "truncated_svd: rank exceeds min(rows, cols)");
  SvdTriple full = thin_svd(m);
  return SvdTriple{full.u.leftCols(rank), full.d.head(rank), full.v.leftCols(rank)};
}

Matrix random_orthonormal(Index n, Index r, std::uint64_t seed) {
  require(r <= n, "random_orthonormal: r must not exceed n");
  Rng rng(seed, 0x6f72);
  Matrix g = rng.normal_matrix(n, r);
  Eigen::HouseholderQR<Matrix> qr(g);
  return qr.householderQ() * Matrix::Identity(n, r);
}

OrthonormalBasis orthonormalize(const Eigen::Ref<const Matrix>& m, std::uint64_t seed) {
  require_finite(m, "orthonormalize");
  const Index n = m.rows();
  const Index r = m.cols();
  require(r <= n, "orthonormalize: more columns than rows");
  OrthonormalBasis out;
  if (r == 0) {
    out.q = Matrix(n, 0);
    return out;
  }

  Eigen::ColPivHouseholderQR<Matrix> pivoted(m);
  const Vector rdiag = pivoted.matrixQR().diagonal().cwiseAbs();
  const double largest = rdiag.size() > 0 ? rdiag(0) : 0.0;
  Index rank = 0;
  if (largest > 0.0) {
    pivoted.setThreshold(kRankTolerance);
    rank = pivoted.rank();
  }
  out.input_rank = rank;

  if (rank == r) {
    Eigen::HouseholderQR<Matrix> qr(m);
    out.q = qr.householderQ() * Matrix::Identity(n, r);
    return out;
  }

  // Keep the numerical range, fill the rest with seeded directions.
  Matrix q(n, r);
  if (rank > 0) {
    q.leftCols(rank) = pivoted.householderQ() * Matrix::Identity(n, rank);
  }
  Rng rng(seed, 0x636f6d70);
  for (Index j = rank; j < r; ++j) {
    Vector candidate = rng.normal_vector(n);
    // Two Gram-Schmidt passes against everything kept so far.
    for (int pass = 0; pass < 2; ++pass) {
      if (j > 0) {
        candidate -= q.leftCols(j) * (q.leftCols(j).transpose() * candidate);
      }
    }
    candidate.normalize();
    q.col(j) = candidate;
  }
  out.q = std::move(q);
  out.completed = true;
  return out;
}

Matrix tall_pinv_apply(const Eigen::Ref<const Matrix>& l, const Eigen::Ref<const Matrix>& x,
                       PinvDiagnostics* diagnostics) {
  require(l.rows() == x.rows(), "tall_pinv_apply: row mismatch");
  require(l.rows() >= l.cols(), "tall_pinv_apply: factor must be tall");
  const Index r = l.cols();
  PinvDiagnostics diag;

  Eigen::HouseholderQR<Matrix> qr(l);
  const Vector rdiag = qr.matrixQR().diagonal().cwiseAbs();
  const double rmax = r > 0 ? rdiag.maxCoeff() : 0.0;
  const double rmin = r > 0 ? rdiag.minCoeff() : 0.0;
  if (r > 0 && rmin > 0.0 && rmax / rmin < kQrConditionLimit) {
    Matrix qtx = (qr.householderQ().transpose() * x).topRows(r);
    Matrix y = qr.matrixQR().topLeftCorner(r, r).triangularView<Eigen::Upper>().solve(qtx);
    diag.effective_rank = r;
    if (diagnostics) *diagnostics = diag;
    return y;
  }

  diag.used_svd = true;
  SvdTriple svd = thin_svd(l);
  const double cutoff = svd.d.size() > 0 ? kRankTolerance * svd.d(0) : 0.0;
  Vector inv = Vector::Zero(svd.d.size());
  for (Index k = 0; k < svd.d.size(); ++k) {
    if (svd.d(k) > cutoff && svd.d(k) > 0.0) {
      inv(k) = 1.0 / svd.d(k);
      ++diag.effective_rank;
    }
  }
  diag.cutoff_engaged = diag.effective_rank < r;
  if (diagnostics) *diagnostics = diag;
  return svd.v * (inv.asDiagonal() * (svd.u.transpose() * x));
}

Matrix psd_sqrt(const Eigen::Ref<const Matrix>& sym, double* clamped_mass) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(symmetrize(sym));
  if (eig.info() != Eigen::Success) throw NumericalError("psd_sqrt: eigensolver failed");
  Vector lambda = eig.eigenvalues();
  double clamped = 0.0;
  for (Index k = 0; k < lambda.size(); ++k) {
    if (lambda(k) < 0.0) {
      clamped += -lambda(k);
      lambda(k) = 0.0;
    }
  }
  if (clamped_mass) *clamped_mass = clamped;
  const Matrix& w = eig.eigenvectors();
  return w * lambda.cwiseSqrt().asDiagonal() * w.transpose();
}

LowRankFactor truncated_eigen_factor(const Eigen::Ref<const Matrix>& sym, Index rank) {
  require(sym.rows() == sym.cols(), "truncated_eigen_factor: matrix must be square");
  require(rank >= 0 && rank <= sym.rows(), "truncated_eigen_factor: rank out of range");
  Eigen::SelfAdjointEigenSolver<Matrix> eig(symmetrize(sym));
  if (eig.info() != Eigen::Success) throw NumericalError("truncated_eigen_factor: eigensolver failed");
  const Index n = sym.rows();
  Matrix factor(n, rank);
  // Eigenvalues come in ascending order.
  for (Index k = 0; k < rank; ++k) {
    const Index src = n - 1 - k;
    factor.col(k) = eig.eigenvectors().col(src) * std::sqrt(std::max(eig.eigenvalues()(src), 0.0));
  }
  return LowRankFactor(std::move(factor));
}

double relative_frobenius(const Eigen::Ref<const Matrix>& a, const Eigen::Ref<const Matrix>& b) {
  const double denom = b.norm();
  if (denom == 0.0) return a.norm() == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return (a - b).norm() / denom;
}

}  // namespace rrkf
