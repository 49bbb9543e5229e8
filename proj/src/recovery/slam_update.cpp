#include "covplan/slam_update.hpp"

#include <Eigen/LU>

#include <complex>

#include "covplan/errors.hpp"
#include "covplan/lemmas.hpp"
#include "covplan/recovery.hpp"

namespace covplan {

namespace {

using Complex = std::complex<double>;
using CMatrix = Eigen::Matrix<Complex, Eigen::Dynamic, Eigen::Dynamic>;

Matrix symmetrized(const Matrix& m) { return 0.5 * (m + m.transpose()); }

// Rows of `full` (laid out by `layout`) for variable `key`.
auto key_rows(const Matrix& full, const StateLayout& layout, VariableKey key) {
  return full.middleRows(layout.offset(key), key.dim());
}

MarginalBlocks fallback_blocks(const BeliefState& current, const StateLayout& layout) {
  if (current.layout.keys() != layout.keys())
    throw DimensionError("fallback belief layout does not match the step layout");
  return marginal_blocks(layout, marginals_backsubstitution(current.factor(), layout));
}

}  // namespace

MarginalBlocks marginal_blocks(const StateLayout& layout, std::vector<Matrix> blocks) {
  if (blocks.size() != layout.size()) throw DimensionError("one marginal block per variable");
  for (std::size_t i = 0; i < blocks.size(); ++i)
    if (blocks[i].rows() != layout.keys()[i].dim() || blocks[i].cols() != layout.keys()[i].dim())
      throw DimensionError("marginal block has wrong size for " + to_string(layout.keys()[i]));
  return MarginalBlocks{layout, std::move(blocks)};
}

MarginalBlocks slam_step_update(const MarginalBlocks& previous, const BeliefState& previous_belief,
                                const SlamStep& step, SlamStrategy strategy,
                                const SlamUpdateOptions& options, const BeliefState* current,
                                SlamUpdateReport* report) {
  const StateLayout& old_layout = previous.layout;
  if (previous_belief.layout.keys() != old_layout.keys())
    throw DimensionError("previous belief layout does not match cached marginals");
  if (!old_layout.contains(step.previous_pose))
    throw DimensionError("previous pose is not part of the prior state");

  StateLayout layout = old_layout;
  layout.append(step.new_keys);
  const StateLayout new_layout(step.new_keys);
  const Index n_old = old_layout.dim();
  const Index d_new = new_layout.dim();

  const Index inv_dim = StateLayout::total_dim(step.involved);
  for (const Matrix* a : {&step.a_observe, &step.a_minus, &step.a_plus})
    if (a->rows() > 0 && a->cols() != inv_dim)
      throw DimensionError("stage-2 Jacobian does not match involved variables");
  if (step.a_s_new.rows() != d_new || step.a_s_new.cols() != d_new ||
      step.a_s_previous.rows() != d_new || step.a_s_previous.cols() != step.previous_pose.dim())
    throw DimensionError("squared part of the step has inconsistent shape");
  if (step.a_minus.rows() > 0 && step.a_plus.rows() == 0)
    throw DimensionError("relinearized factors need both linearization points");

  std::vector<VariableKey> inv_old;
  for (const auto& k : step.involved) {
    if (old_layout.contains(k))
      inv_old.push_back(k);
    else if (!new_layout.contains(k))
      throw DimensionError("stage-2 variable " + to_string(k) + " is neither old nor new");
  }
  const VariableKey prev_key[] = {step.previous_pose};
  const std::vector<VariableKey> s_keys = key_union(prev_key, inv_old);
  const StateLayout s_layout(s_keys);

  SlamUpdateReport local;
  SlamUpdateReport& rep = report ? *report : local;
  rep = SlamUpdateReport{};
  rep.m = step.rows();
  rep.involved_dim = s_layout.dim();
  rep.prior_dim = n_old;
  if (options.allow_fallback && (static_cast<double>(rep.m) > options.fallback_ratio * n_old ||
                                 static_cast<double>(rep.involved_dim) >
                                     options.fallback_ratio * n_old)) {
    if (current == nullptr) throw DimensionError("fallback requires the current belief");
    rep.fallback = true;
    return fallback_blocks(*current, layout);
  }

  // Σ_{k-1}^{(:, S)} for S = {x_{k-1}} ∪ old stage-2 variables.
  const Matrix cols = prior_columns(previous_belief.factor(), old_layout, s_keys);
  const Matrix sigma_s = cols(old_layout.scalar_indices(s_keys), Eigen::all);

  std::vector<Matrix> blocks;
  blocks.reserve(layout.size());

  if (strategy == SlamStrategy::OneStage) {
    // B = (A_S; iA_-; A_+; A_O) over X^I = S and X_new.
    const Index rows = step.rows();
    CMatrix a_i = CMatrix::Zero(rows, s_layout.dim());
    CMatrix a_new = CMatrix::Zero(rows, d_new);
    a_i.block(0, s_layout.offset(step.previous_pose), d_new, step.previous_pose.dim()) =
        step.a_s_previous.cast<Complex>();
    a_new.topRows(d_new) = step.a_s_new.cast<Complex>();
    Index row = d_new;
    auto place = [&](const Matrix& a, Complex scale) {
      if (a.rows() == 0) return;
      Index col = 0;
      for (const auto& k : step.involved) {
        const auto block = a.middleCols(col, k.dim()).cast<Complex>() * scale;
        if (s_layout.contains(k))
          a_i.block(row, s_layout.offset(k), a.rows(), k.dim()) = block;
        else
          a_new.block(row, new_layout.offset(k), a.rows(), k.dim()) = block;
        col += k.dim();
      }
      row += a.rows();
    };
    place(step.a_minus, Complex(0.0, 1.0));
    place(step.a_plus, Complex(1.0, 0.0));
    place(step.a_observe, Complex(1.0, 0.0));

    std::vector<Index> all_new(static_cast<std::size_t>(d_new));
    for (Index i = 0; i < d_new; ++i) all_new[static_cast<std::size_t>(i)] = i;
    const auto res = rectangular_blocks<Complex>(cols, sigma_s, a_i, a_new, all_new,
                                                 RectangularMethod::Method2);
    double residue = 0.0;
    for (std::size_t i = 0; i < old_layout.size(); ++i) {
      const Index off = old_layout.offset_at(i);
      const int d = old_layout.keys()[i].dim();
      const CMatrix corr = res.old_left.middleRows(off, d) * res.old_right.middleCols(off, d);
      residue = std::max(residue, corr.imag().cwiseAbs().maxCoeff());
      blocks.push_back(symmetrized(previous.blocks[i] - corr.real()));
    }
    for (const auto& k : step.new_keys) {
      const Index off = new_layout.offset(k);
      const CMatrix b = res.new_block.block(off, off, k.dim(), k.dim());
      residue = std::max(residue, b.imag().cwiseAbs().maxCoeff());
      blocks.push_back(symmetrized(b.real()));
    }
    rep.imaginary_residue = residue;
    return marginal_blocks(layout, std::move(blocks));
  }

  // Stage 1: squared update with X^I = {x_{k-1}}.
  const Matrix& a1 = step.a_s_previous;
  const Matrix sigma_prev_cols = cols.leftCols(step.previous_pose.dim());
  const Matrix sigma_i1 = sigma_s.topLeftCorner(step.previous_pose.dim(), step.previous_pose.dim());
  Eigen::PartialPivLU<Matrix> lu(step.a_s_new);
  if (d_new > 0 && !(lu.matrixLU().diagonal().cwiseAbs().minCoeff() > 1e-13))
    throw RankDeficient("squared part of the step is singular");
  const Matrix a_iv = d_new > 0 ? Matrix(lu.inverse()) : Matrix(0, 0);
  const Matrix c1 = Matrix::Identity(d_new, d_new) + a1 * sigma_i1 * a1.transpose();
  const Matrix new_new = symmetrized(a_iv * c1 * a_iv.transpose());
  const Matrix old_new = -(sigma_prev_cols * (a1.transpose() * a_iv.transpose()));

  // Σ_M^{(:, X^I_2)} at the midpoint.
  const Index n_mid = n_old + d_new;
  Matrix mid_cols(n_mid, inv_dim);
  {
    Index col = 0;
    for (const auto& k : step.involved) {
      if (old_layout.contains(k)) {
        mid_cols.block(0, col, n_old, k.dim()) = cols.middleCols(s_layout.offset(k), k.dim());
        mid_cols.block(n_old, col, d_new, k.dim()) =
            key_rows(old_new, old_layout, k).transpose();
      } else {
        const Index off = new_layout.offset(k);
        mid_cols.block(0, col, n_old, k.dim()) = old_new.middleCols(off, k.dim());
        mid_cols.block(n_old, col, d_new, k.dim()) = new_new.middleCols(off, k.dim());
      }
      col += k.dim();
    }
  }

  // Stage 2: not-augmented or relinearized update on the midpoint.
  LowRankFactors lr;
  if (step.relinearizes() || step.a_observe.rows() > 0) {
    const Matrix sigma_i2 = mid_cols(layout.scalar_indices(step.involved), Eigen::all);
    if (step.relinearizes()) {
      Matrix plus(step.a_plus.rows() + step.a_observe.rows(), inv_dim);
      plus << step.a_plus, step.a_observe;
      UpdateWorkspace ws;
      lr = relinearized_factors(sigma_i2, step.a_minus, plus, &ws);
      rep.imaginary_residue = ws.imaginary_residue;
    } else {
      lr = not_augmented_factors(sigma_i2, step.a_observe);
    }
  }
  const Matrix u_sub = lr.subtract.cols() ? Matrix(mid_cols * lr.subtract) : Matrix(n_mid, 0);
  const Matrix u_add = lr.add.cols() ? Matrix(mid_cols * lr.add) : Matrix(n_mid, 0);

  for (std::size_t i = 0; i < layout.size(); ++i) {
    const VariableKey k = layout.keys()[i];
    const Index off = layout.offset_at(i);
    Matrix m = i < old_layout.size()
                   ? previous.blocks[i]
                   : Matrix(new_new.block(new_layout.offset(k), new_layout.offset(k), k.dim(),
                                          k.dim()));
    if (u_sub.cols()) m.noalias() -= u_sub.middleRows(off, k.dim()) * u_sub.middleRows(off, k.dim()).transpose();
    if (u_add.cols()) m.noalias() += u_add.middleRows(off, k.dim()) * u_add.middleRows(off, k.dim()).transpose();
    blocks.push_back(symmetrized(m));
  }
  return marginal_blocks(layout, std::move(blocks));
}

}  // namespace covplan
