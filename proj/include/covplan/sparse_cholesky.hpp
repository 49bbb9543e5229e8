#pragma once

#include <vector>

#include "covplan/types.hpp"

namespace covplan {

/// Up-looking sparse Cholesky P Λ Pᵀ = Rᵀ R with a fill-reducing ordering.
///
/// R is stored row-wise (equivalently, L = Rᵀ column-wise) with the diagonal
/// entry first in every row. Row i of R lists columns j >= i.
class SparseCholesky {
 public:
  SparseCholesky() = default;

  /// Factorize with a freshly computed approximate-minimum-degree ordering.
  explicit SparseCholesky(const SparseMatrix& lambda);
  /// Factorize with a caller-supplied ordering: perm[k] is the original index
  /// placed at position k.
  SparseCholesky(const SparseMatrix& lambda, std::vector<int> perm);

  Index size() const noexcept { return n_; }
  Index nonzeros() const noexcept { return static_cast<Index>(values_.size()); }
  const std::vector<int>& permutation() const noexcept { return perm_; }
  const std::vector<int>& inverse_permutation() const noexcept { return iperm_; }

  /// Row i of R (permuted ordering): column indices and values.
  const int* row_columns(Index i) const { return cols_.data() + row_ptr_[i]; }
  const double* row_values(Index i) const { return values_.data() + row_ptr_[i]; }
  Index row_size(Index i) const { return row_ptr_[i + 1] - row_ptr_[i]; }
  double diagonal(Index i) const { return values_[row_ptr_[i]]; }

  /// R as an Eigen sparse upper-triangular matrix (permuted ordering).
  SparseMatrix upper() const;

  /// Solve Rᵀ y = b in place (permuted ordering). Works column-wise on a
  /// dense right-hand side block.
  void solve_upper_transpose(Matrix& b) const;
  /// Solve R x = b in place (permuted ordering).
  void solve_upper(Matrix& b) const;
  /// Solve Λ x = b in the original ordering.
  Vector solve(const Vector& b) const;

  /// log det Λ.
  double log_determinant() const;

  static std::vector<int> amd_ordering(const SparseMatrix& lambda);

 private:
  void factorize(const SparseMatrix& lambda);

  Index n_ = 0;
  std::vector<int> perm_;
  std::vector<int> iperm_;
  std::vector<Index> row_ptr_;
  std::vector<int> cols_;
  std::vector<double> values_;
};

/// Dense upper-triangular R (original ordering is not restored).
Matrix dense_upper(const SparseCholesky& chol);

}  // namespace covplan
