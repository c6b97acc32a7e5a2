#include "rrkf/linear_operator.hpp"

#include <utility>

namespace rrkf {

LinearOperator::LinearOperator(Index out_dim, Index in_dim, BlockMap apply, BlockMap apply_adjoint,
                               CostClass cost)
    : out_dim_(out_dim),
      in_dim_(in_dim),
      apply_(std::move(apply)),
      adjoint_(std::move(apply_adjoint)),
      cost_(cost) {
  require(out_dim_ >= 0 && in_dim_ >= 0, "LinearOperator: negative dimension");
  require(static_cast<bool>(apply_) && static_cast<bool>(adjoint_),
          "LinearOperator: both actions are required");
}

Vector LinearOperator::apply(const Vector& x) const {
  require(x.size() == in_dim_, "LinearOperator::apply: dimension mismatch");
  Matrix y = apply_(x);
  return Eigen::Map<const Vector>(y.data(), y.rows());
}

Vector LinearOperator::apply_adjoint(const Vector& y) const {
  require(y.size() == out_dim_, "LinearOperator::apply_adjoint: dimension mismatch");
  Matrix x = adjoint_(y);
  return Eigen::Map<const Vector>(x.data(), x.rows());
}

Matrix LinearOperator::apply_mat(const Matrix& x) const {
  require(x.rows() == in_dim_, "LinearOperator::apply_mat: dimension mismatch");
  return apply_(x);
}

Matrix LinearOperator::apply_adjoint_mat(const Matrix& y) const {
  require(y.rows() == out_dim_, "LinearOperator::apply_adjoint_mat: dimension mismatch");
  return adjoint_(y);
}

Matrix LinearOperator::to_dense() const { return apply_(Matrix::Identity(in_dim_, in_dim_)); }

LinearOperator LinearOperator::adjoint() const {
  LinearOperator out(in_dim_, out_dim_, adjoint_, apply_, cost_);
  out.zero_ = zero_;
  return out;
}

LinearOperator LinearOperator::dense(Matrix m) {
  auto shared = std::make_shared<const Matrix>(std::move(m));
  return LinearOperator(
      shared->rows(), shared->cols(), [shared](const Matrix& x) -> Matrix { return *shared * x; },
      [shared](const Matrix& y) -> Matrix { return shared->transpose() * y; },
      CostClass::quadratic);
}

LinearOperator LinearOperator::identity(Index n) {
  auto id = [](const Matrix& x) -> Matrix { return x; };
  return LinearOperator(n, n, id, id, CostClass::linear);
}

LinearOperator LinearOperator::zero(Index out_dim, Index in_dim) {
  LinearOperator op(
      out_dim, in_dim, [out_dim](const Matrix& x) -> Matrix { return Matrix::Zero(out_dim, x.cols()); },
      [in_dim](const Matrix& y) -> Matrix { return Matrix::Zero(in_dim, y.cols()); },
      CostClass::linear);
  op.zero_ = true;
  return op;
}

LinearOperator LinearOperator::diagonal(Vector d) {
  auto shared = std::make_shared<const Vector>(std::move(d));
  auto act = [shared](const Matrix& x) -> Matrix { return shared->asDiagonal() * x; };
  return LinearOperator(shared->size(), shared->size(), act, act, CostClass::linear);
}

LinearOperator LinearOperator::scaled(double alpha, const LinearOperator& op) {
  LinearOperator out(
      op.out_dim(), op.in_dim(), [op, alpha](const Matrix& x) -> Matrix { return alpha * op.apply_mat(x); },
      [op, alpha](const Matrix& y) -> Matrix { return alpha * op.apply_adjoint_mat(y); },
      op.cost_class());
  out.zero_ = op.is_zero() || alpha == 0.0;
  return out;
}

LinearOperator LinearOperator::circular_shift(Index n, Index shift) {
  require(n > 0, "circular_shift: n must be positive");
  const Index s = ((shift % n) + n) % n;
  auto roll = [n](const Matrix& x, Index k) -> Matrix {
    if (k == 0) return x;
    Matrix y(n, x.cols());
    y.bottomRows(n - k) = x.topRows(n - k);
    y.topRows(k) = x.bottomRows(k);
    return y;
  };
  return LinearOperator(
      n, n, [roll, s](const Matrix& x) -> Matrix { return roll(x, s); },
      [roll, s, n](const Matrix& y) -> Matrix { return roll(y, (n - s) % n); }, CostClass::linear);
}

LinearOperator LinearOperator::selection(Index n, std::vector<Index> indices) {
  for (Index idx : indices) require(idx >= 0 && idx < n, "selection: index out of range");
  auto shared = std::make_shared<const std::vector<Index>>(std::move(indices));
  const Index m = static_cast<Index>(shared->size());
  return LinearOperator(
      m, n,
      [shared, m](const Matrix& x) -> Matrix {
        Matrix y(m, x.cols());
        for (Index k = 0; k < m; ++k) y.row(k) = x.row((*shared)[k]);
        return y;
      },
      [shared, m, n](const Matrix& y) -> Matrix {
        Matrix x = Matrix::Zero(n, y.cols());
        for (Index k = 0; k < m; ++k) x.row((*shared)[k]) += y.row(k);
        return x;
      },
      CostClass::linear);
}

namespace {

// (S kron I_b) x for a block-stacked x of height d*b.
Matrix kron_identity_apply(const Matrix& small, Index b, const Matrix& x) {
  const Index d = small.rows();
  Matrix y = Matrix::Zero(d * b, x.cols());
  for (Index i = 0; i < d; ++i)
    for (Index j = 0; j < d; ++j)
      if (small(i, j) != 0.0) y.middleRows(i * b, b) += small(i, j) * x.middleRows(j * b, b);
  return y;
}

}  // namespace

LinearOperator LinearOperator::kron_identity(Matrix small, Index block) {
  require(small.rows() == small.cols(), "kron_identity: small factor must be square");
  auto s = std::make_shared<const Matrix>(std::move(small));
  auto st = std::make_shared<const Matrix>(s->transpose());
  const Index n = s->rows() * block;
  return LinearOperator(
      n, n, [s, block](const Matrix& x) -> Matrix { return kron_identity_apply(*s, block, x); },
      [st, block](const Matrix& y) -> Matrix { return kron_identity_apply(*st, block, y); },
      CostClass::linear);
}

LinearOperator LinearOperator::kron(Matrix small, std::shared_ptr<const Matrix> big) {
  require(small.rows() == small.cols() && big->rows() == big->cols(), "kron: square factors required");
  auto s = std::make_shared<const Matrix>(std::move(small));
  auto st = std::make_shared<const Matrix>(s->transpose());
  const Index b = big->rows();
  const Index n = s->rows() * b;
  auto act = [b](const Matrix& sm, const Matrix& bg, bool transposed, const Matrix& x) -> Matrix {
    // (S kron K) x = (S kron I)(I kron K) x
    Matrix kx(x.rows(), x.cols());
    const Index d = sm.rows();
    for (Index j = 0; j < d; ++j) {
      if (transposed) {
        kx.middleRows(j * b, b).noalias() = bg.transpose() * x.middleRows(j * b, b);
      } else {
        kx.middleRows(j * b, b).noalias() = bg * x.middleRows(j * b, b);
      }
    }
    return kron_identity_apply(sm, b, kx);
  };
  return LinearOperator(
      n, n, [s, big, act](const Matrix& x) -> Matrix { return act(*s, *big, false, x); },
      [st, big, act](const Matrix& y) -> Matrix { return act(*st, *big, true, y); },
      CostClass::quadratic);
}

LinearOperator compose(const LinearOperator& outer, const LinearOperator& inner) {
  require(outer.in_dim() == inner.out_dim(), "compose: dimension mismatch");
  const CostClass cost = (outer.cost_class() == CostClass::linear && inner.cost_class() == CostClass::linear)
                             ? CostClass::linear
                             : CostClass::quadratic;
  return LinearOperator(
      outer.out_dim(), inner.in_dim(),
      [outer, inner](const Matrix& x) -> Matrix { return outer.apply_mat(inner.apply_mat(x)); },
      [outer, inner](const Matrix& y) -> Matrix { return inner.apply_adjoint_mat(outer.apply_adjoint_mat(y)); },
      cost);
}

LinearOperator sum(const LinearOperator& a, const LinearOperator& b) {
  require(a.in_dim() == b.in_dim() && a.out_dim() == b.out_dim(), "sum: dimension mismatch");
  const CostClass cost = (a.cost_class() == CostClass::linear && b.cost_class() == CostClass::linear)
                             ? CostClass::linear
                             : CostClass::quadratic;
  return LinearOperator(
      a.out_dim(), a.in_dim(), [a, b](const Matrix& x) -> Matrix { return a.apply_mat(x) + b.apply_mat(x); },
      [a, b](const Matrix& y) -> Matrix { return a.apply_adjoint_mat(y) + b.apply_adjoint_mat(y); }, cost);
}

}  // namespace rrkf
