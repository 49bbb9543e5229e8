#pragma once

#include <span>
#include <vector>

#include "covplan/layout.hpp"
#include "covplan/sparse_cholesky.hpp"
#include "covplan/types.hpp"

namespace covplan {

/// Σ = (RᵀR)⁻¹ from the entries of upper-triangular R, filled back to front
/// with the recursive entry formulas. Only entries on the nonzero pattern of
/// R are visited in the inner sums.
Matrix recover_recursive(const SparseMatrix& r_upper);
/// Σ = V Vᵀ with V = R \ I.
Matrix recover_backsubstitution(const SparseMatrix& r_upper);

/// Same, on a factorization; the result is in the original (unpermuted)
/// ordering.
Matrix recover_recursive(const SparseCholesky& chol);
Matrix recover_backsubstitution(const SparseCholesky& chol);

/// Diagonal blocks of Σ for every variable of `layout`, via backsubstitution
/// restricted to what the blocks need.
std::vector<Matrix> marginals_backsubstitution(const SparseCholesky& chol,
                                               const StateLayout& layout);
/// Diagonal blocks of Σ for every variable via the recursive formulas.
std::vector<Matrix> marginals_recursive(const SparseCholesky& chol, const StateLayout& layout);

/// Σ^{(:,idx)}: V = Rᵀ \ I_idx, then R \ V (original ordering, n × |idx|).
Matrix prior_columns(const SparseCholesky& chol, std::span<const Index> idx);
Matrix prior_columns(const SparseCholesky& chol, const StateLayout& layout,
                     std::span<const VariableKey> keys);
/// Upper-triangular variant without permutation.
Matrix prior_columns(const SparseMatrix& r_upper, std::span<const Index> idx);

}  // namespace covplan
