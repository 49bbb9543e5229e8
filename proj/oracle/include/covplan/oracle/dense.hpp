#pragma once

#include <random>
#include <span>
#include <vector>

#include "covplan/belief.hpp"
#include "covplan/change.hpp"
#include "covplan/layout.hpp"
#include "covplan/types.hpp"

// Dense reference computations used to check the incremental code paths.
// Everything here is O(n^3) and deliberately naive.
namespace covplan::oracle {

using Rng = std::mt19937_64;

double rel_error(const Matrix& a, const Matrix& b);
double max_abs_diff(const Matrix& a, const Matrix& b);
/// Norm of a - b with pose headings compared modulo 2π.
double local_diff_norm(const Vector& a, const Vector& b, const StateLayout& layout);

Matrix dense_inverse(const Matrix& spd);
double log_det(const Matrix& spd);

/// Rows/columns of `full` belonging to the given keys.
Matrix dense_block(const Matrix& full, const StateLayout& layout,
                   std::span<const VariableKey> rows, std::span<const VariableKey> cols);

/// Posterior information after `change`, assembled densely: the prior is
/// zero-padded for the new variables, which are appended to `layout`.
Matrix posterior_information(const Matrix& prior, const StateLayout& layout,
                             const InferenceChange& change, StateLayout& posterior_layout);

/// Σ^{Y|F}: inverse of the information restricted to the complement of F,
/// read at Y.
Matrix conditional_covariance(const Matrix& information, const StateLayout& layout,
                              std::span<const VariableKey> y, std::span<const VariableKey> f);

/// Plain dense Gauss-Newton on the graph (dense normal equations, LDLT).
Vector dense_gauss_newton(const FactorGraph& graph, const Vector& initial, int iterations = 50);

/// Finite-difference Jacobian of the whitened residual W (z - h(x)) wrt the
/// stacked values: returns -d(residual)/dx, i.e. W dh/dx.
Matrix numeric_whitened_jacobian(const GaussianFactor& factor, std::span<const Vector> values,
                                 double step = 1e-6);

// ---- random instance generators -------------------------------------------

/// Keys of mixed kinds with total dimension close to `target_dim`.
std::vector<VariableKey> random_keys(Rng& rng, Index target_dim, std::int64_t first_index = 0);

/// Sparse well-conditioned SPD information over `layout`, built as a sum of
/// random unit-weight factors plus weak priors.
Matrix random_information(Rng& rng, const StateLayout& layout, double density = 0.05);

/// Random upper-triangular R with a positive diagonal bounded away from 0.
SparseMatrix random_upper(Rng& rng, Index n, double density);

/// Random subset of `count` distinct entries of `keys`.
std::vector<VariableKey> random_subset(Rng& rng, std::span<const VariableKey> keys,
                                       std::size_t count);

Matrix random_matrix(Rng& rng, Index rows, Index cols, double scale = 1.0);

struct RandomChangeSpec {
  ChangeKind kind = ChangeKind::NotAugmented;
  Index rows = 4;
  std::size_t involved = 3;
  std::size_t new_vars = 0;
};

/// Random change on `layout`. For relinearization the returned prior
/// information must contain A_-ᵀA_-: use `random_relinearization` instead.
InferenceChange random_change(Rng& rng, const StateLayout& layout, const RandomChangeSpec& spec,
                              std::int64_t new_index_base);

struct RelinInstance {
  Matrix prior;  // Λ_0 + A_-ᵀA_-
  InferenceChange change;
};
RelinInstance random_relinearization(Rng& rng, const StateLayout& layout, const Matrix& base,
                                     Index rows, std::size_t involved);

SparseMatrix to_sparse(const Matrix& m);

}  // namespace covplan::oracle
