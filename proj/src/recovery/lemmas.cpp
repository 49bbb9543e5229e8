#include "covplan/lemmas.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include <algorithm>
#include <atomic>
#include <type_traits>

#include "covplan/errors.hpp"

namespace covplan {

namespace {

std::atomic<Fault> g_fault{Fault::None};

template <typename Scalar>
using MatT = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

// Symmetric solver: Cholesky for real SPD systems, LU for complex-symmetric
// ones (a Cholesky with plain transposes is not available for those).
template <typename Scalar>
using SymSolver =
    std::conditional_t<std::is_same_v<Scalar, double>, Eigen::LLT<MatT<Scalar>>,
                       Eigen::PartialPivLU<MatT<Scalar>>>;

template <typename Scalar>
SymSolver<Scalar> sym_solver(const MatT<Scalar>& m, const char* what) {
  SymSolver<Scalar> s(m);
  if constexpr (std::is_same_v<Scalar, double>) {
    if (s.info() != Eigen::Success) throw RankDeficient(std::string(what) + " is not positive definite");
  } else {
    const double piv = s.matrixLU().diagonal().cwiseAbs().minCoeff();
    if (!(piv > 1e-14)) throw RankDeficient(std::string(what) + " is singular");
  }
  return s;
}

Matrix upper_chol(const Matrix& m, bool& ok) {
  Eigen::LLT<Matrix> llt(m);
  ok = llt.info() == Eigen::Success;
  return llt.matrixU();
}

// X R⁻¹ for upper-triangular R, by triangular substitution.
Matrix right_solve_upper(const Matrix& x, const Matrix& r) {
  return r.triangularView<Eigen::Upper>().transpose().solve(x.transpose()).transpose();
}

void note_shape(Index& m, const Matrix& x) { m = std::max({m, x.rows(), x.cols()}); }

struct Split {
  std::vector<VariableKey> y_old;
  std::vector<VariableKey> y_new;
};

Split split_request(const CovarianceCache& cache, const InferenceChange& change,
                    std::span<const VariableKey> y) {
  Split s;
  StateLayout new_layout(change.new_keys);
  StateLayout seen;
  for (const auto& k : y) {
    seen.append(k);
    if (new_layout.contains(k))
      s.y_new.push_back(k);
    else if (cache.contains(k))
      s.y_old.push_back(k);
    else
      throw CacheMiss("requested variable " + to_string(k) + " is neither cached nor new", k);
  }
  for (const auto& k : change.involved)
    if (!cache.contains(k))
      throw CacheMiss("involved variable " + to_string(k) + " not cached", k);
  return s;
}

// Assemble the output joint over `y` from old/new blocks.
CovarianceCache assemble(const CovarianceCache& cache, std::span<const VariableKey> y,
                         const Split& s, const Matrix& old_block, const Matrix& new_block,
                         const Matrix& cross) {
  StateLayout out_layout(y);
  const auto io = out_layout.scalar_indices(s.y_old);
  const auto in = out_layout.scalar_indices(s.y_new);
  Matrix joint(out_layout.dim(), out_layout.dim());
  joint(io, io) = old_block;
  joint(in, in) = new_block;
  joint(io, in) = cross;
  joint(in, io) = cross.transpose();
  return CovarianceCache(std::move(out_layout), std::move(joint), cache.mode(),
                         cache.conditioning());
}

Matrix symmetrized(const Matrix& m) { return 0.5 * (m + m.transpose()); }

}  // namespace

void set_fault(Fault fault) { g_fault.store(fault); }
Fault active_fault() { return g_fault.load(); }

Index UpdateWorkspace::max_dimension() const {
  Index m = 0;
  for (const Matrix* x : {&c, &b, &f, &k, &k1, &g, &p, &a_iv, &m1, &m2, &g_relin}) note_shape(m, *x);
  return m;
}

Matrix LowRankFactors::apply(const Matrix& sigma_y, const Matrix& sigma_c) const {
  Matrix out = sigma_y;
  if (subtract.cols() > 0) {
    const Matrix u = sigma_c * subtract;
    out.noalias() -= u * u.transpose();
  }
  if (add.cols() > 0) {
    const Matrix u = sigma_c * add;
    out.noalias() += u * u.transpose();
  }
  return out;
}

LowRankFactors not_augmented_factors(const Matrix& sigma_i, const Matrix& a, UpdateWorkspace* ws) {
  if (a.cols() != sigma_i.rows()) throw DimensionError("A^I does not match involved covariance");
  const Index m = a.rows();
  Matrix c = Matrix::Identity(m, m) + a * sigma_i * a.transpose();
  c = symmetrized(c);
  bool ok = false;
  const Matrix r = upper_chol(c, ok);
  if (!ok) throw RankDeficient("capacitance matrix is not positive definite");
  LowRankFactors out;
  // C = RᵀR, so B C⁻¹ Bᵀ = (Σ^C Aᵀ R⁻¹)(Σ^C Aᵀ R⁻¹)ᵀ
  out.subtract = right_solve_upper(a.transpose(), r);
  if (ws) {
    *ws = UpdateWorkspace{};
    ws->kind = ChangeKind::NotAugmented;
    ws->c = std::move(c);
  }
  return out;
}

LowRankFactors relinearized_factors(const Matrix& sigma_i, const Matrix& a_minus,
                                    const Matrix& a_plus, UpdateWorkspace* ws) {
  if (a_minus.cols() != sigma_i.rows() || a_plus.cols() != sigma_i.rows())
    throw DimensionError("relinearization blocks do not match involved covariance");
  const Index mp = a_plus.rows();
  const Index mm = a_minus.rows();
  bool ok = false;

  Matrix inner_plus = Matrix::Identity(mp, mp) + a_plus * sigma_i * a_plus.transpose();
  const Matrix r2 = upper_chol(symmetrized(inner_plus), ok);
  if (!ok) throw RankDeficient("relinearization capacitance is not positive definite");
  const Matrix m2 = right_solve_upper(a_plus.transpose(), r2);
  const Matrix g = m2.transpose() * sigma_i * a_minus.transpose();

  Matrix inner_minus =
      Matrix::Identity(mm, mm) - a_minus * sigma_i * a_minus.transpose() + g.transpose() * g;
  const Matrix r1 = upper_chol(symmetrized(inner_minus), ok);
  if (!ok)
    throw InconsistentDowndate(
        "relinearization downdate is not positive definite; posterior information would be "
        "indefinite");
  const Matrix m1 = right_solve_upper(a_minus.transpose() - m2 * g, r1);

  LowRankFactors out;
  out.subtract = m2;
  out.add = m1;
  if (ws) {
    *ws = UpdateWorkspace{};
    ws->kind = ChangeKind::Relinearization;
    ws->m1 = m1;
    ws->m2 = m2;
    ws->g_relin = g;
    // U = Σ^I [i M1 | M2]: real part [0 | U2], imaginary part [U1 | 0].
    const Matrix u1 = sigma_i * m1;
    const Matrix u2 = sigma_i * m2;
    Matrix re(u1.rows(), u1.cols() + u2.cols());
    Matrix im(u1.rows(), u1.cols() + u2.cols());
    re << Matrix::Zero(u1.rows(), u1.cols()), u2;
    im << u1, Matrix::Zero(u2.rows(), u2.cols());
    const Matrix residue = re * im.transpose() + im * re.transpose();
    ws->imaginary_residue = residue.size() ? residue.cwiseAbs().maxCoeff() : 0.0;
  }
  return out;
}

template <typename Scalar>
AugmentedBlocks<Scalar> rectangular_blocks(const Matrix& sigma_c, const Matrix& sigma_i,
                                           const MatT<Scalar>& a_i, const MatT<Scalar>& a_new,
                                           std::span<const Index> y_new, RectangularMethod method,
                                           UpdateWorkspace* ws) {
  using Mat = MatT<Scalar>;
  const Index m = a_new.rows();
  const Index k_dim = sigma_i.rows();
  if (a_i.cols() != k_dim || a_i.rows() != m || sigma_c.cols() != k_dim)
    throw DimensionError("rectangular change blocks have inconsistent shapes");
  if (a_new.cols() > m) throw RankDeficient("new variables are not constrained by the change");

  const Mat s_i = sigma_i.cast<Scalar>();
  const Mat s_c = sigma_c.cast<Scalar>();
  const Mat eye_m = Mat::Identity(m, m);

  const Mat ata = a_new.transpose() * a_new;
  const auto f_solver = sym_solver<Scalar>(ata, "A_newᵀ A_new");
  const Mat f = f_solver.solve(Mat::Identity(ata.rows(), ata.cols()));
  const Mat k = eye_m - a_new * f * a_new.transpose();
  const Mat k1 = k * a_i;
  const Mat g = eye_m + k1 * s_i * k1.transpose();
  const Mat b = s_c * k1.transpose();
  const auto g_solver = sym_solver<Scalar>(g, "G");

  const Mat aig = a_i * s_i;
  const Mat c = eye_m + aig * a_i.transpose();
  const auto c_solver = sym_solver<Scalar>(c, "capacitance matrix");
  const Mat cinv_an = c_solver.solve(a_new);
  const Mat info_new = a_new.transpose() * cinv_an;
  const auto n_solver = sym_solver<Scalar>(info_new, "A_newᵀ C⁻¹ A_new");
  Mat sel = Mat::Zero(a_new.cols(), static_cast<Index>(y_new.size()));
  for (std::size_t j = 0; j < y_new.size(); ++j) sel(y_new[j], static_cast<Index>(j)) = Scalar(1);
  const Mat p = n_solver.solve(sel);

  AugmentedBlocks<Scalar> out;
  out.old_left = b;
  out.old_right = g_solver.solve(Mat(b.transpose()));
  if (active_fault() == Fault::RectangularSign) out.old_right = -out.old_right;
  std::vector<Index> ynv(y_new.begin(), y_new.end());
  out.new_block = p(ynv, Eigen::all);

  if (method == RectangularMethod::Method1) {
    const Mat inner = c_solver.solve(Mat(aig * a_i.transpose())) - eye_m;
    out.cross = s_c * (a_i.transpose() * (inner * (a_new * p)));
  } else {
    const Mat lhs = k1.transpose() * g_solver.solve(Mat(k1 * s_i)) - Mat::Identity(k_dim, k_dim);
    const Mat f_cols = f * sel;
    out.cross = s_c * (lhs * (a_i.transpose() * (a_new * f_cols)));
  }

  if (ws) {
    *ws = UpdateWorkspace{};
    ws->kind = ChangeKind::Rectangular;
    if constexpr (std::is_same_v<Scalar, double>) {
      ws->c = c;
      ws->b = b;
      ws->f = f;
      ws->k = k;
      ws->k1 = k1;
      ws->g = g;
      ws->p = p;
    } else {
      // Shapes only for the complex path.
      ws->c.resize(c.rows(), c.cols());
      ws->b.resize(b.rows(), b.cols());
      ws->f.resize(f.rows(), f.cols());
      ws->k.resize(k.rows(), k.cols());
      ws->k1.resize(k1.rows(), k1.cols());
      ws->g.resize(g.rows(), g.cols());
      ws->p.resize(p.rows(), p.cols());
    }
  }
  return out;
}

template AugmentedBlocks<double> rectangular_blocks<double>(
    const Matrix&, const Matrix&, const MatT<double>&, const MatT<double>&,
    std::span<const Index>, RectangularMethod, UpdateWorkspace*);
template AugmentedBlocks<std::complex<double>> rectangular_blocks<std::complex<double>>(
    const Matrix&, const Matrix&, const MatT<std::complex<double>>&,
    const MatT<std::complex<double>>&, std::span<const Index>, RectangularMethod,
    UpdateWorkspace*);

AugmentedBlocks<double> squared_blocks(const Matrix& sigma_c, const Matrix& sigma_i,
                                       const Matrix& a_i, const Matrix& a_new,
                                       std::span<const Index> y_new, UpdateWorkspace* ws) {
  const Index m = a_new.rows();
  if (a_new.cols() != m) throw DimensionError("squared change requires a square A_new");
  if (a_i.rows() != m || a_i.cols() != sigma_i.rows() || sigma_c.cols() != sigma_i.rows())
    throw DimensionError("squared change blocks have inconsistent shapes");
  Eigen::PartialPivLU<Matrix> lu(a_new);
  const double piv = m ? lu.matrixLU().diagonal().cwiseAbs().minCoeff() : 1.0;
  const double scale = m ? a_new.cwiseAbs().maxCoeff() : 1.0;
  if (!(piv > 1e-13 * scale)) throw RankDeficient("A_new is singular");
  const Matrix inv = lu.inverse();
  std::vector<Index> ynv(y_new.begin(), y_new.end());
  const Matrix a_iv = inv(ynv, Eigen::all);
  const Matrix c = Matrix::Identity(m, m) + a_i * sigma_i * a_i.transpose();

  AugmentedBlocks<double> out;
  out.new_block = symmetrized(a_iv * c * a_iv.transpose());
  out.cross = -(sigma_c * (a_i.transpose() * a_iv.transpose()));
  if (ws) {
    *ws = UpdateWorkspace{};
    ws->kind = ChangeKind::Squared;
    ws->c = c;
    ws->a_iv = a_iv;
  }
  return out;
}

CovarianceCache update_not_augmented(const CovarianceCache& cache, const InferenceChange& change,
                                     std::span<const VariableKey> y, UpdateWorkspace* ws) {
  if (change.kind != ChangeKind::NotAugmented)
    throw DimensionError("update_not_augmented called with a different change kind");
  const Split s = split_request(cache, change, y);
  const Matrix sigma_i = cache.block(change.involved);
  const Matrix sigma_y = cache.block(s.y_old);
  const Matrix sigma_c = cache.block(s.y_old, change.involved);
  const LowRankFactors lr = not_augmented_factors(sigma_i, change.a_involved, ws);
  if (ws) ws->b = sigma_c * change.a_involved.transpose();
  Matrix old_block = symmetrized(lr.apply(sigma_y, sigma_c));
  return assemble(cache, y, s, old_block, Matrix(0, 0), Matrix(old_block.rows(), 0));
}

CovarianceCache update_rectangular(const CovarianceCache& cache, const InferenceChange& change,
                                   std::span<const VariableKey> y, RectangularMethod method,
                                   UpdateWorkspace* ws) {
  if (!change.augmenting())
    throw DimensionError("update_rectangular called with a non-augmenting change");
  const Split s = split_request(cache, change, y);
  const StateLayout new_layout(change.new_keys);
  const auto y_new_idx = new_layout.scalar_indices(s.y_new);
  const Matrix sigma_i = cache.block(change.involved);
  const Matrix sigma_y = cache.block(s.y_old);
  const Matrix sigma_c = cache.block(s.y_old, change.involved);
  const auto blocks = rectangular_blocks<double>(sigma_c, sigma_i, change.a_involved, change.a_new,
                                                 y_new_idx, method, ws);
  Matrix old_block = sigma_y - blocks.old_left * blocks.old_right;
  return assemble(cache, y, s, symmetrized(old_block), symmetrized(blocks.new_block), blocks.cross);
}

CovarianceCache update_squared(const CovarianceCache& cache, const InferenceChange& change,
                               std::span<const VariableKey> y, UpdateWorkspace* ws) {
  if (change.kind != ChangeKind::Squared)
    throw DimensionError("update_squared called with a different change kind");
  const Split s = split_request(cache, change, y);
  const StateLayout new_layout(change.new_keys);
  const auto y_new_idx = new_layout.scalar_indices(s.y_new);
  const Matrix sigma_i = cache.block(change.involved);
  const Matrix sigma_c = cache.block(s.y_old, change.involved);
  const auto blocks =
      squared_blocks(sigma_c, sigma_i, change.a_involved, change.a_new, y_new_idx, ws);
  return assemble(cache, y, s, cache.block(s.y_old), blocks.new_block, blocks.cross);
}

CovarianceCache update_relinearized(const CovarianceCache& cache, const InferenceChange& change,
                                    std::span<const VariableKey> y, UpdateWorkspace* ws) {
  if (change.kind != ChangeKind::Relinearization)
    throw DimensionError("update_relinearized called with a different change kind");
  const Split s = split_request(cache, change, y);
  const Matrix sigma_i = cache.block(change.involved);
  const Matrix sigma_y = cache.block(s.y_old);
  const Matrix sigma_c = cache.block(s.y_old, change.involved);
  const LowRankFactors lr =
      relinearized_factors(sigma_i, change.a_minus, change.a_involved, ws);
  Matrix old_block = symmetrized(lr.apply(sigma_y, sigma_c));
  return assemble(cache, y, s, old_block, Matrix(0, 0), Matrix(old_block.rows(), 0));
}

InferenceChange drop_involved(const InferenceChange& change, std::span<const VariableKey> drop) {
  const auto keep = key_difference(change.involved, drop);
  if (keep.size() == change.involved.size()) return change;
  const StateLayout layout(change.involved);
  const auto cols = layout.scalar_indices(keep);
  InferenceChange out = change;
  out.involved = keep;
  out.a_involved = change.a_involved(Eigen::all, cols);
  if (change.kind == ChangeKind::Relinearization)
    out.a_minus = change.a_minus(Eigen::all, cols);
  out.measurement.reset();
  return out;
}

CovarianceCache update_conditional(const CovarianceCache& cache, const InferenceChange& change,
                                   std::span<const VariableKey> y, RectangularMethod method,
                                   UpdateWorkspace* ws) {
  if (cache.mode() != CacheMode::Conditional)
    throw DimensionError("update_conditional requires a conditional cache");
  const auto& f = cache.conditioning();
  if (!key_intersection(y, f).empty())
    throw DimensionError("requested variables overlap the conditioning set");
  if (!key_intersection(change.new_keys, f).empty())
    throw DimensionError("new variables cannot be conditioned on");
  const InferenceChange restricted = drop_involved(change, f);
  switch (restricted.kind) {
    case ChangeKind::NotAugmented:
      return update_not_augmented(cache, restricted, y, ws);
    case ChangeKind::Rectangular:
      return update_rectangular(cache, restricted, y, method, ws);
    case ChangeKind::Squared:
      return update_squared(cache, restricted, y, ws);
    case ChangeKind::Relinearization:
      return update_relinearized(cache, restricted, y, ws);
  }
  throw DimensionError("unknown change kind");
}

CovarianceCache update(const CovarianceCache& cache, const InferenceChange& change,
                       std::span<const VariableKey> y, RectangularMethod method,
                       UpdateWorkspace* ws) {
  if (cache.mode() == CacheMode::Conditional) return update_conditional(cache, change, y, method, ws);
  switch (change.kind) {
    case ChangeKind::NotAugmented:
      return update_not_augmented(cache, change, y, ws);
    case ChangeKind::Rectangular:
      return update_rectangular(cache, change, y, method, ws);
    case ChangeKind::Squared:
      return update_squared(cache, change, y, ws);
    case ChangeKind::Relinearization:
      return update_relinearized(cache, change, y, ws);
  }
  throw DimensionError("unknown change kind");
}

}  // namespace covplan
