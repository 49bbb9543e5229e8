#include "covplan/ramdl.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "covplan/errors.hpp"
#include "covplan/layout.hpp"
#include "covplan/lemmas.hpp"

namespace covplan {

namespace {

Matrix capacitance(const Matrix& a_i, const Matrix& sigma_i) {
  if (a_i.cols() != sigma_i.rows() || sigma_i.rows() != sigma_i.cols())
    throw DimensionError("Jacobian columns do not match the covariance block");
  const Index m = a_i.rows();
  Matrix c = Matrix::Identity(m, m);
  if (a_i.cols() > 0) c.noalias() += a_i * sigma_i * a_i.transpose();
  return 0.5 * (c + c.transpose());
}

// ½ ln|C| + ½ ln|A_newᵀ C⁻¹ A_new|.
double half_log_det_posterior_ratio(const Matrix& a_i, const Matrix& sigma_i, const Matrix& a_new) {
  const Matrix c = capacitance(a_i, sigma_i);
  Eigen::LLT<Matrix> llt(c);
  if (llt.info() != Eigen::Success)
    throw NotPositiveDefinite("capacitance matrix is not positive definite", 0, 0);
  const Matrix& l = llt.matrixLLT();
  double value = l.diagonal().array().log().sum();
  if (a_new.cols() > 0) {
    if (a_new.rows() != a_i.rows()) throw DimensionError("A^I and A_new row counts differ");
    const Matrix w = llt.matrixL().solve(a_new);
    const Matrix info = w.transpose() * w;
    Eigen::LLT<Matrix> llt_n(0.5 * (info + info.transpose()));
    if (llt_n.info() != Eigen::Success) throw RankDeficient("A_new is rank deficient");
    value += llt_n.matrixLLT().diagonal().array().log().sum();
  }
  return value;
}

}  // namespace

bool ActionIncrement::same_as(const ActionIncrement& other) const {
  const auto& a = change;
  const auto& b = other.change;
  auto same = [](const Matrix& x, const Matrix& y) {
    return x.rows() == y.rows() && x.cols() == y.cols() && (x.array() == y.array()).all();
  };
  return id == other.id && a.kind == b.kind && a.involved == b.involved &&
         a.new_keys == b.new_keys && same(a.a_involved, b.a_involved) && same(a.a_new, b.a_new) &&
         same(a.a_minus, b.a_minus);
}

std::string_view to_string(QueryMode mode) {
  switch (mode) {
    case QueryMode::Unfocused:
      return "unfocused";
    case QueryMode::FocusedOld:
      return "focused-landmarks";
    case QueryMode::FocusedNew:
      return "focused-lastpose";
  }
  return "?";
}

double half_log_det(const Matrix& spd, const char* what) {
  Eigen::LLT<Matrix> llt(0.5 * (spd + spd.transpose()));
  if (llt.info() != Eigen::Success)
    throw NotPositiveDefinite(std::string(what) + " is not positive definite", 0, 0);
  return llt.matrixLLT().diagonal().array().log().sum();
}

InfoScore ig_unfocused(const Matrix& a_i, const Matrix& sigma_i, const Matrix& a_new) {
  return {half_log_det_posterior_ratio(a_i, sigma_i, a_new), ScoreKind::UnfocusedIG};
}

InfoScore ig_focused_old(const Matrix& a_i, const Matrix& sigma_i, const Matrix& a_u,
                         const Matrix& sigma_u_given_f, const Matrix& a_new) {
  if (a_u.rows() != a_i.rows()) throw DimensionError("A^I_U and A^I row counts differ");
  const double marginal = half_log_det_posterior_ratio(a_i, sigma_i, a_new);
  const double conditional = half_log_det_posterior_ratio(a_u, sigma_u_given_f, a_new);
  return {marginal - conditional, ScoreKind::FocusedIG};
}

InfoScore entropy_focused_new(const Matrix& a_i, const Matrix& sigma_i, const Matrix& a_new,
                              std::span<const Index> y_new) {
  if (y_new.empty()) throw DimensionError("focused entropy needs at least one new variable");
  const Matrix none(0, sigma_i.rows());
  const auto blocks = a_new.rows() == a_new.cols()
                          ? squared_blocks(none, sigma_i, a_i, a_new, y_new)
                          : rectangular_blocks<double>(none, sigma_i, a_i, a_new, y_new,
                                                       RectangularMethod::Method2);
  return {half_log_det(blocks.new_block, "posterior marginal of X^F"), ScoreKind::FocusedEntropy};
}

InfoScore score_change(const InferenceChange& change, const CovarianceCache& marginal,
                       const CovarianceCache* conditional, const FocusedQuery& query,
                       std::span<const VariableKey> terminal) {
  if (change.kind == ChangeKind::Relinearization)
    throw DimensionError("planning scores are defined for additive changes only");
  switch (query.mode) {
    case QueryMode::Unfocused:
      return ig_unfocused(change.a_involved, marginal.block(change.involved), change.a_new);
    case QueryMode::FocusedOld: {
      if (conditional == nullptr || conditional->mode() != CacheMode::Conditional)
        throw DimensionError("focused IG needs a conditional cache");
      const InferenceChange u = drop_involved(change, query.focus);
      return ig_focused_old(change.a_involved, marginal.block(change.involved), u.a_involved,
                            conditional->block(u.involved), change.a_new);
    }
    case QueryMode::FocusedNew: {
      if (!key_difference(terminal, change.new_keys).empty())
        throw DimensionError("focused entropy variables must be new variables of the change");
      const StateLayout new_layout(change.new_keys);
      const auto idx = new_layout.scalar_indices(terminal);
      return entropy_focused_new(change.a_involved, marginal.block(change.involved), change.a_new,
                                 idx);
    }
  }
  throw DimensionError("unknown query mode");
}

InferenceChange concatenate(std::span<const ActionIncrement> segments) {
  std::vector<VariableKey> new_keys;
  std::vector<VariableKey> involved;
  Index rows = 0;
  for (const auto& s : segments) {
    for (const auto& k : s.change.involved)
      if (std::find(new_keys.begin(), new_keys.end(), k) == new_keys.end())
        involved = key_union(involved, std::span(&k, 1));
    new_keys = key_union(new_keys, s.change.new_keys);
    rows += s.change.rows();
  }
  const StateLayout inv_layout(involved);
  const StateLayout new_layout(new_keys);
  Matrix a_i = Matrix::Zero(rows, inv_layout.dim());
  Matrix a_new = Matrix::Zero(rows, new_layout.dim());
  Index row = 0;
  for (const auto& s : segments) {
    const auto& c = s.change;
    Index col = 0;
    auto place = [&](const std::vector<VariableKey>& keys, const Matrix& a) {
      col = 0;
      for (const auto& k : keys) {
        const auto block = a.block(0, col, a.rows(), k.dim());
        if (inv_layout.contains(k))
          a_i.block(row, inv_layout.offset(k), a.rows(), k.dim()) = block;
        else
          a_new.block(row, new_layout.offset(k), a.rows(), k.dim()) = block;
        col += k.dim();
      }
    };
    place(c.involved, c.a_involved);
    place(c.new_keys, c.a_new);
    row += c.rows();
  }
  if (new_keys.empty()) return InferenceChange::not_augmented(std::move(involved), std::move(a_i));
  return InferenceChange::augmented(std::move(involved), std::move(a_i), std::move(new_keys),
                                    std::move(a_new));
}

std::size_t select_best(std::span<const double> utilities, std::span<const int> ids) {
  if (utilities.empty() || utilities.size() != ids.size())
    throw DimensionError("select_best needs one id per utility");
  std::vector<std::size_t> order(utilities.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return ids[a] < ids[b]; });
  std::size_t best = order.front();
  for (std::size_t i : order) {
    const double tol = kTieTolerance * std::max(1.0, std::abs(utilities[best]));
    if (utilities[i] > utilities[best] + tol) best = i;
  }
  return best;
}

FlatResult evaluate_candidates_flat(std::span<const PlanCandidate> candidates,
                                    const BeliefState& belief, const FocusedQuery& query) {
  if (candidates.empty()) throw DimensionError("no candidates to evaluate");
  std::vector<InferenceChange> changes;
  changes.reserve(candidates.size());
  std::vector<VariableKey> x_all;
  for (const auto& c : candidates) {
    changes.push_back(concatenate(c.segments));
    x_all = key_union(x_all, changes.back().involved);
  }
  const CovarianceCache marginal = cache_from_belief(belief, x_all);
  CovarianceCache conditional;
  if (query.mode == QueryMode::FocusedOld) {
    const auto unfocused = key_difference(x_all, query.focus);
    conditional = conditional_cache_from_belief(belief, unfocused, query.focus);
  }

  FlatResult out;
  out.prior_dim = static_cast<std::size_t>(StateLayout::total_dim(x_all));
  std::vector<double> utilities;
  std::vector<int> ids;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    out.scores.push_back(score_change(changes[i], marginal, &conditional, query,
                                      candidates[i].terminal));
    utilities.push_back(out.scores.back().utility());
    ids.push_back(candidates[i].id);
  }
  out.best_index = select_best(utilities, ids);
  out.best_id = candidates[out.best_index].id;
  return out;
}

}  // namespace covplan
