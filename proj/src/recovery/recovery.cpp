#include "covplan/recovery.hpp"

#include <Eigen/SparseCore>

#include <string>

#include "covplan/errors.hpp"

namespace covplan {

namespace {

// Upper-triangular matrix stored row-wise with the diagonal first.
struct UpperRows {
  Index n = 0;
  std::vector<Index> ptr;
  std::vector<int> cols;
  std::vector<double> vals;

  double diag(Index i) const { return vals[ptr[i]]; }
};

UpperRows rows_of(const SparseMatrix& r) {
  if (r.rows() != r.cols()) throw DimensionError("R is not square");
  const Index n = r.rows();
  Eigen::SparseMatrix<double, Eigen::RowMajor, int> rr = r;
  rr.makeCompressed();
  UpperRows out;
  out.n = n;
  out.ptr.assign(n + 1, 0);
  for (Index i = 0; i < n; ++i) {
    bool has_diag = false;
    std::vector<std::pair<int, double>> entries;
    for (decltype(rr)::InnerIterator it(rr, i); it; ++it) {
      if (it.col() < i) {
        if (it.value() != 0.0) throw DimensionError("R is not upper triangular");
        continue;
      }
      if (it.col() == i) {
        has_diag = it.value() != 0.0;
        out.cols.push_back(static_cast<int>(i));
        out.vals.push_back(it.value());
      } else if (it.value() != 0.0) {
        entries.emplace_back(static_cast<int>(it.col()), it.value());
      }
    }
    if (!has_diag) throw RankDeficient("R has a zero diagonal entry at row " + std::to_string(i));
    for (const auto& [c, v] : entries) {
      out.cols.push_back(c);
      out.vals.push_back(v);
    }
    out.ptr[i + 1] = static_cast<Index>(out.vals.size());
  }
  return out;
}

UpperRows rows_of(const SparseCholesky& chol) {
  UpperRows out;
  out.n = chol.size();
  out.ptr.assign(out.n + 1, 0);
  out.cols.reserve(chol.nonzeros());
  out.vals.reserve(chol.nonzeros());
  for (Index i = 0; i < out.n; ++i) {
    out.cols.insert(out.cols.end(), chol.row_columns(i), chol.row_columns(i) + chol.row_size(i));
    out.vals.insert(out.vals.end(), chol.row_values(i), chol.row_values(i) + chol.row_size(i));
    out.ptr[i + 1] = static_cast<Index>(out.vals.size());
  }
  return out;
}

Matrix recursive(const UpperRows& r) {
  const Index n = r.n;
  Matrix s = Matrix::Zero(n, n);
  for (Index i = n - 1; i >= 0; --i) {
    const double rii = r.diag(i);
    const Index begin = r.ptr[i] + 1;
    const Index end = r.ptr[i + 1];
    for (Index j = n - 1; j >= i; --j) {
      const double* sj = s.col(j).data();
      double acc = (i == j) ? 1.0 / rii : 0.0;
      for (Index p = begin; p < end; ++p) acc -= r.vals[p] * sj[r.cols[p]];
      const double v = acc / rii;
      s(i, j) = v;
      s(j, i) = v;
    }
  }
  return s;
}

// V = R⁻¹, built column by column; column j is supported on rows 0..j.
Matrix upper_inverse(const UpperRows& r) {
  const Index n = r.n;
  Matrix v = Matrix::Zero(n, n);
  for (Index j = 0; j < n; ++j) {
    double* x = v.col(j).data();
    for (Index i = j; i >= 0; --i) {
      double acc = (i == j) ? 1.0 : 0.0;
      for (Index p = r.ptr[i] + 1; p < r.ptr[i + 1]; ++p) {
        const int c = r.cols[p];
        if (c > j) break;
        acc -= r.vals[p] * x[c];
      }
      x[i] = acc / r.diag(i);
    }
  }
  return v;
}

Matrix unpermute(const Matrix& s, const std::vector<int>& perm) {
  const Index n = s.rows();
  Matrix out(n, n);
  for (Index b = 0; b < n; ++b)
    for (Index a = 0; a < n; ++a) out(perm[a], perm[b]) = s(a, b);
  return out;
}

Matrix columns_upper(const UpperRows& r, std::span<const Index> idx) {
  const Index n = r.n;
  Matrix x = Matrix::Zero(n, static_cast<Index>(idx.size()));
  for (Index c = 0; c < x.cols(); ++c) {
    const Index e = idx[static_cast<std::size_t>(c)];
    if (e < 0 || e >= n) throw DimensionError("column index outside matrix");
    double* y = x.col(c).data();
    y[e] = 1.0;
    // Rᵀ y = e_e (forward, starting at e)
    for (Index i = e; i < n; ++i) {
      if (y[i] == 0.0) continue;
      y[i] /= r.diag(i);
      const double yi = y[i];
      for (Index p = r.ptr[i] + 1; p < r.ptr[i + 1]; ++p) y[r.cols[p]] -= r.vals[p] * yi;
    }
    // R x = y (backward)
    for (Index i = n - 1; i >= 0; --i) {
      double acc = y[i];
      for (Index p = r.ptr[i] + 1; p < r.ptr[i + 1]; ++p) acc -= r.vals[p] * y[r.cols[p]];
      y[i] = acc / r.diag(i);
    }
  }
  return x;
}

}  // namespace

Matrix recover_recursive(const SparseMatrix& r_upper) { return recursive(rows_of(r_upper)); }

Matrix recover_backsubstitution(const SparseMatrix& r_upper) {
  const Matrix v = upper_inverse(rows_of(r_upper));
  return v * v.transpose();
}

Matrix recover_recursive(const SparseCholesky& chol) {
  return unpermute(recursive(rows_of(chol)), chol.permutation());
}

Matrix recover_backsubstitution(const SparseCholesky& chol) {
  const Matrix v = upper_inverse(rows_of(chol));
  return unpermute(v * v.transpose(), chol.permutation());
}

std::vector<Matrix> marginals_backsubstitution(const SparseCholesky& chol,
                                               const StateLayout& layout) {
  if (chol.size() != layout.dim()) throw DimensionError("layout does not match factor size");
  const Matrix v = upper_inverse(rows_of(chol));
  const auto& iperm = chol.inverse_permutation();
  std::vector<Matrix> out;
  out.reserve(layout.size());
  for (std::size_t k = 0; k < layout.size(); ++k) {
    const int d = layout.keys()[k].dim();
    const Index off = layout.offset_at(k);
    Matrix rows(d, v.cols());
    for (int a = 0; a < d; ++a) rows.row(a) = v.row(iperm[off + a]);
    out.emplace_back(rows * rows.transpose());
  }
  return out;
}

std::vector<Matrix> marginals_recursive(const SparseCholesky& chol, const StateLayout& layout) {
  if (chol.size() != layout.dim()) throw DimensionError("layout does not match factor size");
  const Matrix s = recursive(rows_of(chol));
  const auto& iperm = chol.inverse_permutation();
  std::vector<Matrix> out;
  out.reserve(layout.size());
  for (std::size_t k = 0; k < layout.size(); ++k) {
    const int d = layout.keys()[k].dim();
    const Index off = layout.offset_at(k);
    Matrix m(d, d);
    for (int a = 0; a < d; ++a)
      for (int b = 0; b < d; ++b) m(a, b) = s(iperm[off + a], iperm[off + b]);
    out.push_back(std::move(m));
  }
  return out;
}

Matrix prior_columns(const SparseCholesky& chol, std::span<const Index> idx) {
  const auto& iperm = chol.inverse_permutation();
  const auto& perm = chol.permutation();
  Matrix x = Matrix::Zero(chol.size(), static_cast<Index>(idx.size()));
  for (Index c = 0; c < x.cols(); ++c) {
    const Index e = idx[static_cast<std::size_t>(c)];
    if (e < 0 || e >= chol.size()) throw DimensionError("column index outside matrix");
    x(iperm[e], c) = 1.0;
  }
  chol.solve_upper_transpose(x);
  chol.solve_upper(x);
  Matrix out(x.rows(), x.cols());
  for (Index a = 0; a < x.rows(); ++a) out.row(perm[a]) = x.row(a);
  return out;
}

Matrix prior_columns(const SparseCholesky& chol, const StateLayout& layout,
                     std::span<const VariableKey> keys) {
  const std::vector<Index> idx = layout.scalar_indices(keys);
  return prior_columns(chol, idx);
}

Matrix prior_columns(const SparseMatrix& r_upper, std::span<const Index> idx) {
  return columns_upper(rows_of(r_upper), idx);
}

}  // namespace covplan
