#include "covplan/sparse_cholesky.hpp"

#include <Eigen/OrderingMethods>

#include <cmath>
#include <numeric>
#include <string>

#include "covplan/errors.hpp"

namespace covplan {

namespace {

constexpr double pivot_tolerance = 1e-12;

// Upper triangle of P Λ Pᵀ in compressed columns.
struct UpperPattern {
  std::vector<Index> col_ptr;
  std::vector<int> rows;
  std::vector<double> values;
};

UpperPattern permuted_upper(const SparseMatrix& lambda, const std::vector<int>& iperm) {
  const Index n = lambda.rows();
  std::vector<Index> counts(n + 1, 0);
  for (Index j = 0; j < lambda.outerSize(); ++j)
    for (SparseMatrix::InnerIterator it(lambda, j); it; ++it) {
      const int a = iperm[it.row()];
      const int b = iperm[it.col()];
      if (a <= b) ++counts[b + 1];
    }
  UpperPattern out;
  out.col_ptr.assign(n + 1, 0);
  std::partial_sum(counts.begin(), counts.end(), out.col_ptr.begin());
  out.rows.resize(out.col_ptr[n]);
  out.values.resize(out.col_ptr[n]);
  std::vector<Index> next(out.col_ptr.begin(), out.col_ptr.end() - 1);
  for (Index j = 0; j < lambda.outerSize(); ++j)
    for (SparseMatrix::InnerIterator it(lambda, j); it; ++it) {
      const int a = iperm[it.row()];
      const int b = iperm[it.col()];
      if (a <= b) {
        out.rows[next[b]] = a;
        out.values[next[b]] = it.value();
        ++next[b];
      }
    }
  return out;
}

std::vector<int> elimination_tree(const UpperPattern& c, Index n) {
  std::vector<int> parent(n, -1);
  std::vector<int> ancestor(n, -1);
  for (Index k = 0; k < n; ++k) {
    for (Index p = c.col_ptr[k]; p < c.col_ptr[k + 1]; ++p) {
      int i = c.rows[p];
      while (i != -1 && i < k) {
        const int next = ancestor[i];
        ancestor[i] = static_cast<int>(k);
        if (next == -1) parent[i] = static_cast<int>(k);
        i = next;
      }
    }
  }
  return parent;
}

// Nonzero pattern of row k of L (excluding the diagonal) in topological
// order, written to stack[top..n). Returns top.
Index row_reach(const UpperPattern& c, Index k, const std::vector<int>& parent,
                std::vector<int>& stack, std::vector<char>& mark) {
  const Index n = static_cast<Index>(parent.size());
  Index top = n;
  mark[k] = 1;
  for (Index p = c.col_ptr[k]; p < c.col_ptr[k + 1]; ++p) {
    int i = c.rows[p];
    if (i > k) continue;
    Index len = 0;
    while (!mark[i]) {
      stack[len++] = i;
      mark[i] = 1;
      i = parent[i];
    }
    while (len > 0) stack[--top] = stack[--len];
  }
  for (Index p = top; p < n; ++p) mark[stack[p]] = 0;
  mark[k] = 0;
  return top;
}

}  // namespace

SparseCholesky::SparseCholesky(const SparseMatrix& lambda)
    : SparseCholesky(lambda, amd_ordering(lambda)) {}

SparseCholesky::SparseCholesky(const SparseMatrix& lambda, std::vector<int> perm)
    : n_(lambda.rows()), perm_(std::move(perm)) {
  if (lambda.rows() != lambda.cols()) throw DimensionError("Cholesky input is not square");
  if (static_cast<Index>(perm_.size()) != n_)
    throw DimensionError("ordering size does not match matrix");
  iperm_.assign(n_, -1);
  for (Index k = 0; k < n_; ++k) {
    const int o = perm_[k];
    if (o < 0 || o >= n_ || iperm_[o] != -1) throw DimensionError("ordering is not a permutation");
    iperm_[o] = static_cast<int>(k);
  }
  factorize(lambda);
}

std::vector<int> SparseCholesky::amd_ordering(const SparseMatrix& lambda) {
  Eigen::AMDOrdering<int> amd;
  Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic, int> p;
  amd(lambda, p);
  return {p.indices().data(), p.indices().data() + p.indices().size()};
}

void SparseCholesky::factorize(const SparseMatrix& lambda) {
  const Index n = n_;
  const UpperPattern c = permuted_upper(lambda, iperm_);
  const std::vector<int> parent = elimination_tree(c, n);

  std::vector<int> stack(n);
  std::vector<char> mark(n, 0);

  std::vector<Index> counts(n, 1);
  for (Index k = 0; k < n; ++k) {
    const Index top = row_reach(c, k, parent, stack, mark);
    for (Index p = top; p < n; ++p) ++counts[stack[p]];
  }
  row_ptr_.assign(n + 1, 0);
  for (Index k = 0; k < n; ++k) row_ptr_[k + 1] = row_ptr_[k] + counts[k];
  cols_.assign(row_ptr_[n], 0);
  values_.assign(row_ptr_[n], 0.0);

  std::vector<Index> fill(row_ptr_.begin(), row_ptr_.end() - 1);
  std::vector<double> x(n, 0.0);
  for (Index k = 0; k < n; ++k) {
    const Index top = row_reach(c, k, parent, stack, mark);
    double diag_in = 0.0;
    for (Index p = c.col_ptr[k]; p < c.col_ptr[k + 1]; ++p) {
      if (c.rows[p] < k)
        x[c.rows[p]] += c.values[p];
      else if (c.rows[p] == k)
        diag_in += c.values[p];
    }
    double d = diag_in;
    for (Index t = top; t < n; ++t) {
      const int i = stack[t];
      const double lki = x[i] / values_[row_ptr_[i]];
      x[i] = 0.0;
      for (Index p = row_ptr_[i] + 1; p < fill[i]; ++p) x[cols_[p]] -= values_[p] * lki;
      d -= lki * lki;
      const Index p = fill[i]++;
      cols_[p] = static_cast<int>(k);
      values_[p] = lki;
    }
    if (!(d > pivot_tolerance * std::max(1.0, std::abs(diag_in)))) {
      throw NotPositiveDefinite("matrix is not positive definite at pivot " + std::to_string(k) +
                                    " (original index " + std::to_string(perm_[k]) + ")",
                                k, perm_[k]);
    }
    const Index p = fill[k]++;
    cols_[p] = static_cast<int>(k);
    values_[p] = std::sqrt(d);
  }
}

SparseMatrix SparseCholesky::upper() const {
  std::vector<Eigen::Triplet<double, int>> t;
  t.reserve(values_.size());
  for (Index i = 0; i < n_; ++i)
    for (Index p = row_ptr_[i]; p < row_ptr_[i + 1]; ++p)
      t.emplace_back(static_cast<int>(i), cols_[p], values_[p]);
  SparseMatrix r(n_, n_);
  r.setFromTriplets(t.begin(), t.end());
  return r;
}

void SparseCholesky::solve_upper_transpose(Matrix& b) const {
  if (b.rows() != n_) throw DimensionError("right-hand side has wrong row count");
  for (Index col = 0; col < b.cols(); ++col) {
    double* y = b.col(col).data();
    for (Index i = 0; i < n_; ++i) {
      if (y[i] == 0.0) continue;
      const Index begin = row_ptr_[i];
      y[i] /= values_[begin];
      const double yi = y[i];
      for (Index p = begin + 1; p < row_ptr_[i + 1]; ++p) y[cols_[p]] -= values_[p] * yi;
    }
  }
}

void SparseCholesky::solve_upper(Matrix& b) const {
  if (b.rows() != n_) throw DimensionError("right-hand side has wrong row count");
  for (Index col = 0; col < b.cols(); ++col) {
    double* x = b.col(col).data();
    for (Index i = n_ - 1; i >= 0; --i) {
      const Index begin = row_ptr_[i];
      double s = x[i];
      for (Index p = begin + 1; p < row_ptr_[i + 1]; ++p) s -= values_[p] * x[cols_[p]];
      x[i] = s / values_[begin];
    }
  }
}

Vector SparseCholesky::solve(const Vector& b) const {
  if (b.size() != n_) throw DimensionError("right-hand side has wrong size");
  Matrix y(n_, 1);
  for (Index k = 0; k < n_; ++k) y(k, 0) = b[perm_[k]];
  solve_upper_transpose(y);
  solve_upper(y);
  Vector out(n_);
  for (Index k = 0; k < n_; ++k) out[perm_[k]] = y(k, 0);
  return out;
}

double SparseCholesky::log_determinant() const {
  double s = 0.0;
  for (Index i = 0; i < n_; ++i) s += std::log(diagonal(i));
  return 2.0 * s;
}

Matrix dense_upper(const SparseCholesky& chol) { return Matrix(chol.upper()); }

}  // namespace covplan
