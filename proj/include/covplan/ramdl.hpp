#pragma once

#include <span>
#include <string>
#include <vector>

#include "covplan/belief.hpp"
#include "covplan/change.hpp"
#include "covplan/cov_cache.hpp"
#include "covplan/types.hpp"

namespace covplan {

enum class ScoreKind { UnfocusedIG, FocusedIG, FocusedEntropy };

/// Information-theoretic score in nats, dimension constants dropped.
struct InfoScore {
  double value = 0.0;
  ScoreKind kind = ScoreKind::UnfocusedIG;

  /// Larger is better: IG as is, entropy negated.
  double utility() const noexcept { return kind == ScoreKind::FocusedEntropy ? -value : value; }
};

/// One action increment {F_new, X_new}, stored as its realized Jacobian
/// blocks. `id` names the segment (e.g. waypoint pair) for prefix matching.
struct ActionIncrement {
  std::string id;
  InferenceChange change;

  /// Same id and bit-identical Jacobian blocks and key sets.
  bool same_as(const ActionIncrement& other) const;
};

/// A candidate action as an ordered list of increments. `terminal` holds the
/// new variables whose posterior entropy a focused-new query scores.
struct PlanCandidate {
  int id = 0;
  std::vector<ActionIncrement> segments;
  std::vector<VariableKey> terminal;
};

enum class QueryMode { Unfocused, FocusedOld, FocusedNew };

std::string_view to_string(QueryMode mode);

/// Objective selection. `focus` lists the old focused variables X^F for
/// FocusedOld; FocusedNew uses each candidate's `terminal` set.
struct FocusedQuery {
  QueryMode mode = QueryMode::Unfocused;
  std::vector<VariableKey> focus;
};

/// Half log-determinant of an SPD matrix via Cholesky.
double half_log_det(const Matrix& spd, const char* what);

/// ½ ln|I + A^I Σ A^Iᵀ|, plus ½ ln|A_newᵀ C⁻¹ A_new| when new variables are
/// added. Equals ½ ln(|Λ_+| / |Λ_-|).
InfoScore ig_unfocused(const Matrix& a_i, const Matrix& sigma_i, const Matrix& a_new = Matrix());

/// Marginal IG minus the IG of the same change on the belief conditioned on
/// X^F; `a_u` are the columns of `a_i` for unfocused involved variables.
InfoScore ig_focused_old(const Matrix& a_i, const Matrix& sigma_i, const Matrix& a_u,
                         const Matrix& sigma_u_given_f, const Matrix& a_new = Matrix());

/// ½ ln|Σ_+^{M,F}| for F ⊆ X_new selected by scalar columns `y_new` of A_new.
InfoScore entropy_focused_new(const Matrix& a_i, const Matrix& sigma_i, const Matrix& a_new,
                              std::span<const Index> y_new);

/// Score of a change from cached prior blocks. `conditional` is required for
/// FocusedOld and must hold Σ^{X^I_U | X^F}; `terminal` is used for
/// FocusedNew.
InfoScore score_change(const InferenceChange& change, const CovarianceCache& marginal,
                       const CovarianceCache* conditional, const FocusedQuery& query,
                       std::span<const VariableKey> terminal = {});

/// All segments of a candidate merged into one change: involved = old
/// variables touched by any segment, new = union of new variables.
InferenceChange concatenate(std::span<const ActionIncrement> segments);

/// Relative tolerance under which two utilities count as tied.
inline constexpr double kTieTolerance = 1e-9;

/// Index of the best utility; ties within kTieTolerance go to the lowest id.
std::size_t select_best(std::span<const double> utilities, std::span<const int> ids);

struct FlatResult {
  std::vector<InfoScore> scores;  // aligned with the candidate list
  std::size_t best_index = 0;
  int best_id = 0;
  std::size_t prior_dim = 0;  // dimension of X_All
};

/// One-time prior block computation for X_All, then per-candidate scoring.
FlatResult evaluate_candidates_flat(std::span<const PlanCandidate> candidates,
                                    const BeliefState& belief, const FocusedQuery& query);

}  // namespace covplan
