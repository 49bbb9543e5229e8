#include "covplan/oracle/dense.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "covplan/errors.hpp"

namespace covplan::oracle {

double rel_error(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return INFINITY;
  const double denom = std::max(b.norm(), 1e-300);
  if (b.size() == 0) return 0.0;
  return (a - b).norm() / denom;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return INFINITY;
  if (a.size() == 0) return 0.0;
  return (a - b).cwiseAbs().maxCoeff();
}

double local_diff_norm(const Vector& a, const Vector& b, const StateLayout& layout) {
  return local_difference(a, b, layout).norm();
}

Matrix dense_inverse(const Matrix& spd) {
  return spd.fullPivLu().inverse();
}

double log_det(const Matrix& spd) {
  Eigen::LDLT<Matrix> ldlt(spd);
  return ldlt.vectorD().array().log().sum();
}

Matrix dense_block(const Matrix& full, const StateLayout& layout,
                   std::span<const VariableKey> rows, std::span<const VariableKey> cols) {
  return full(layout.scalar_indices(rows), layout.scalar_indices(cols));
}

Matrix posterior_information(const Matrix& prior, const StateLayout& layout,
                             const InferenceChange& change, StateLayout& posterior_layout) {
  posterior_layout = layout;
  posterior_layout.append(change.new_keys);
  const Index n = posterior_layout.dim();
  Matrix lambda = Matrix::Zero(n, n);
  lambda.topLeftCorner(prior.rows(), prior.cols()) = prior;

  Matrix a_full = Matrix::Zero(change.rows(), n);
  {
    Index c = 0;
    for (const auto& k : change.involved) {
      a_full.middleCols(posterior_layout.offset(k), k.dim()) += change.a_involved.middleCols(c, k.dim());
      c += k.dim();
    }
    c = 0;
    for (const auto& k : change.new_keys) {
      a_full.middleCols(posterior_layout.offset(k), k.dim()) += change.a_new.middleCols(c, k.dim());
      c += k.dim();
    }
  }
  lambda += a_full.transpose() * a_full;
  if (change.kind == ChangeKind::Relinearization) {
    Matrix m_full = Matrix::Zero(change.a_minus.rows(), n);
    Index c = 0;
    for (const auto& k : change.involved) {
      m_full.middleCols(posterior_layout.offset(k), k.dim()) = change.a_minus.middleCols(c, k.dim());
      c += k.dim();
    }
    lambda -= m_full.transpose() * m_full;
  }
  return lambda;
}

Matrix conditional_covariance(const Matrix& information, const StateLayout& layout,
                              std::span<const VariableKey> y, std::span<const VariableKey> f) {
  const auto rest = key_difference(layout.keys(), f);
  const StateLayout rest_layout(rest);
  const Matrix sub = dense_block(information, layout, rest, rest);
  const Matrix inv = dense_inverse(sub);
  return dense_block(inv, rest_layout, y, y);
}

Vector dense_gauss_newton(const FactorGraph& graph, const Vector& initial, int iterations) {
  const StateLayout& layout = graph.layout();
  Vector x = initial;
  for (int it = 0; it < iterations; ++it) {
    const auto batch = linearize_factors(graph.factors(), x, layout);
    const Matrix a = batch.jacobian.dense(layout);
    const Matrix h = a.transpose() * a;
    const Vector g = a.transpose() * batch.residual;
    const Vector dx = h.ldlt().solve(g);
    x = retract(x, dx, layout);
    if (dx.norm() < 1e-13) break;
  }
  return x;
}

Matrix numeric_whitened_jacobian(const GaussianFactor& factor, std::span<const Vector> values,
                                 double step) {
  std::vector<Vector> v(values.begin(), values.end());
  const Index cols = factor.variable_dim();
  Matrix j(factor.dim(), cols);
  Index col = 0;
  for (std::size_t k = 0; k < v.size(); ++k) {
    for (Index d = 0; d < v[k].size(); ++d) {
      const double keep = v[k][d];
      v[k][d] = keep + step;
      const Vector plus = factor.whitener() * factor.error(v);
      v[k][d] = keep - step;
      const Vector minus = factor.whitener() * factor.error(v);
      v[k][d] = keep;
      j.col(col++) = -(plus - minus) / (2.0 * step);
    }
  }
  return j;
}

std::vector<VariableKey> random_keys(Rng& rng, Index target_dim, std::int64_t first_index) {
  std::vector<VariableKey> keys;
  std::uniform_int_distribution<int> kind(0, 2);
  Index dim = 0;
  std::int64_t idx = first_index;
  while (dim < target_dim) {
    VariableKey k{static_cast<VarKind>(kind(rng)), idx++};
    if (dim + k.dim() > target_dim) k.kind = target_dim - dim >= 2 ? VarKind::Landmark : VarKind::Scalar;
    keys.push_back(k);
    dim += k.dim();
  }
  return keys;
}

Matrix random_matrix(Rng& rng, Index rows, Index cols, double scale) {
  std::normal_distribution<double> nd(0.0, scale);
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = nd(rng);
  return m;
}

Matrix random_information(Rng& rng, const StateLayout& layout, double density) {
  const Index n = layout.dim();
  Matrix lambda = Matrix::Zero(n, n);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto& keys = layout.keys();
  auto add_factor = [&](std::span<const VariableKey> ks, Index rows) {
    const Index d = StateLayout::total_dim(ks);
    const Matrix j = random_matrix(rng, rows, d);
    const Matrix jtj = j.transpose() * j;
    const auto idx = layout.scalar_indices(ks);
    lambda(idx, idx) += jtj;
  };
  for (std::size_t i = 0; i < keys.size(); ++i) {
    // weak prior keeps every variable constrained
    const auto idx = layout.scalar_indices(std::span(&keys[i], 1));
    for (Index a : idx) lambda(a, a) += 0.5 + u(rng);
    if (i + 1 < keys.size()) {
      const VariableKey pair[] = {keys[i], keys[i + 1]};
      add_factor(pair, keys[i].dim());
    }
  }
  const std::size_t extra = static_cast<std::size_t>(density * keys.size() * keys.size() / 2);
  std::uniform_int_distribution<std::size_t> pick(0, keys.size() - 1);
  for (std::size_t e = 0; e < extra && keys.size() > 1; ++e) {
    const std::size_t a = pick(rng);
    std::size_t b = pick(rng);
    if (a == b) b = (b + 1) % keys.size();
    const VariableKey pair[] = {keys[a], keys[b]};
    add_factor(pair, 2);
  }
  return 0.5 * (lambda + lambda.transpose());
}

SparseMatrix random_upper(Rng& rng, Index n, double density) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> nd(0.0, 0.3);
  std::vector<Eigen::Triplet<double, int>> t;
  for (Index i = 0; i < n; ++i) {
    t.emplace_back(static_cast<int>(i), static_cast<int>(i), 1.0 + u(rng));
    for (Index j = i + 1; j < n; ++j)
      if (u(rng) < density) t.emplace_back(static_cast<int>(i), static_cast<int>(j), nd(rng));
  }
  SparseMatrix r(n, n);
  r.setFromTriplets(t.begin(), t.end());
  return r;
}

std::vector<VariableKey> random_subset(Rng& rng, std::span<const VariableKey> keys,
                                       std::size_t count) {
  std::vector<VariableKey> pool(keys.begin(), keys.end());
  std::shuffle(pool.begin(), pool.end(), rng);
  pool.resize(std::min(count, pool.size()));
  return pool;
}

InferenceChange random_change(Rng& rng, const StateLayout& layout, const RandomChangeSpec& spec,
                              std::int64_t new_index_base) {
  auto involved = random_subset(rng, layout.keys(), spec.involved);
  const Index idim = StateLayout::total_dim(involved);
  if (spec.kind == ChangeKind::NotAugmented)
    return InferenceChange::not_augmented(involved, random_matrix(rng, spec.rows, idim));
  if (spec.kind == ChangeKind::Relinearization)
    throw DimensionError("use random_relinearization for relinearization instances");

  std::vector<VariableKey> new_keys;
  std::uniform_int_distribution<int> kind(0, 2);
  for (std::size_t i = 0; i < spec.new_vars; ++i)
    new_keys.push_back({static_cast<VarKind>(kind(rng)), new_index_base + static_cast<std::int64_t>(i)});
  const Index ndim = StateLayout::total_dim(new_keys);
  const Index rows = spec.kind == ChangeKind::Squared ? ndim : std::max(spec.rows, ndim + 1);
  Matrix a_new = random_matrix(rng, rows, ndim);
  if (spec.kind == ChangeKind::Squared) a_new += 2.0 * Matrix::Identity(ndim, ndim);
  return InferenceChange::augmented(involved, random_matrix(rng, rows, idim), new_keys, a_new);
}

RelinInstance random_relinearization(Rng& rng, const StateLayout& layout, const Matrix& base,
                                     Index rows, std::size_t involved) {
  auto keys = random_subset(rng, layout.keys(), involved);
  const Index idim = StateLayout::total_dim(keys);
  const Matrix a_minus = random_matrix(rng, rows, idim);
  const Matrix a_plus = a_minus + random_matrix(rng, rows, idim, 0.3);
  RelinInstance out;
  out.prior = base;
  const auto idx = layout.scalar_indices(keys);
  out.prior(idx, idx) += a_minus.transpose() * a_minus;
  out.change = InferenceChange::relinearization(keys, a_minus, a_plus);
  return out;
}

SparseMatrix to_sparse(const Matrix& m) {
  SparseMatrix s = m.sparseView(1.0, 0.0);
  s.makeCompressed();
  return s;
}

}  // namespace covplan::oracle
