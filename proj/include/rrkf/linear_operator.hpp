#pragma once

#include "rrkf/common.hpp"

#include <functional>
#include <memory>
#include <vector>

namespace rrkf {

/// Declares whether one application costs O(dim) or O(dim^2).
enum class CostClass { linear, quadratic };

/// Matrix-free linear map between R^in_dim and R^out_dim.
///
/// Applications act on column blocks; the vector overloads are thin
/// wrappers. Callbacks must be pure so that operators can be shared across
/// threads.
class LinearOperator {
 public:
  using BlockMap = std::function<Matrix(const Matrix&)>;

  LinearOperator() = default;
  LinearOperator(Index out_dim, Index in_dim, BlockMap apply, BlockMap apply_adjoint,
                 CostClass cost);

  Index out_dim() const { return out_dim_; }
  Index in_dim() const { return in_dim_; }
  CostClass cost_class() const { return cost_; }
  bool is_zero() const { return zero_; }

  Vector apply(const Vector& x) const;
  Vector apply_adjoint(const Vector& y) const;
  Matrix apply_mat(const Matrix& x) const;
  Matrix apply_adjoint_mat(const Matrix& y) const;

  /// Materializes the operator by applying it to the identity.
  Matrix to_dense() const;

  LinearOperator adjoint() const;

  static LinearOperator dense(Matrix m);
  static LinearOperator identity(Index n);
  static LinearOperator zero(Index out_dim, Index in_dim);
  static LinearOperator diagonal(Vector d);
  static LinearOperator scaled(double alpha, const LinearOperator& op);
  /// Circular shift: (S x)_i = x_{(i - shift) mod n}.
  static LinearOperator circular_shift(Index n, Index shift);
  /// Row selection: (C x)_k = x_{indices[k]}.
  static LinearOperator selection(Index n, std::vector<Index> indices);
  /// small (d x d) kron I_{block}; state index = i_small * block + i_block.
  static LinearOperator kron_identity(Matrix small, Index block);
  /// small (d x d) kron big (b x b), both dense.
  static LinearOperator kron(Matrix small, std::shared_ptr<const Matrix> big);

 private:
  Index out_dim_ = 0;
  Index in_dim_ = 0;
  BlockMap apply_;
  BlockMap adjoint_;
  CostClass cost_ = CostClass::quadratic;
  bool zero_ = false;
};

LinearOperator compose(const LinearOperator& outer, const LinearOperator& inner);
LinearOperator sum(const LinearOperator& a, const LinearOperator& b);

}  // namespace rrkf
