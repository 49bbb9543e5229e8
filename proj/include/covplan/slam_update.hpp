#pragma once

#include <vector>

#include "covplan/belief.hpp"
#include "covplan/change.hpp"
#include "covplan/layout.hpp"

namespace covplan {

/// Per-variable marginal covariance blocks, aligned with `layout`.
struct MarginalBlocks {
  StateLayout layout;
  std::vector<Matrix> blocks;

  const Matrix& operator[](VariableKey key) const { return blocks[layout.position(key)]; }
};

MarginalBlocks marginal_blocks(const StateLayout& layout, std::vector<Matrix> blocks);

/// One SLAM time step split into its structural parts:
///  - squared part: new pose and first observations of new landmarks,
///    involving only the previous pose;
///  - re-observations of mapped landmarks from the new pose;
///  - relinearized old factors F_R, at the old and new linearization points.
/// Every Jacobian block is expressed over `involved` (old variables plus the
/// new pose when it is observed from).
struct SlamStep {
  VariableKey previous_pose;
  std::vector<VariableKey> new_keys;
  Matrix a_s_previous;  // squared part, columns of previous_pose
  Matrix a_s_new;       // squared part, columns of new_keys (square)

  std::vector<VariableKey> involved;  // stage-2 involved variables
  Matrix a_observe;                   // re-observations over `involved`
  Matrix a_minus;                     // F_R at the old point over `involved`
  Matrix a_plus;                      // F_R at the new point over `involved`

  Index rows() const noexcept {
    return a_s_new.rows() + a_observe.rows() + a_minus.rows() + a_plus.rows();
  }
  bool relinearizes() const noexcept { return a_minus.rows() > 0; }
};

enum class SlamStrategy { TwoStage, OneStage };

struct SlamUpdateOptions {
  /// Fall back to full backsubstitution if m > ratio*n or dim(X^I) > ratio*n.
  double fallback_ratio = 1.0;
  /// Never fall back (for method comparisons).
  bool allow_fallback = true;
};

struct SlamUpdateReport {
  bool fallback = false;
  Index m = 0;
  Index involved_dim = 0;
  Index prior_dim = 0;
  double imaginary_residue = 0.0;
};

/// Per-variable marginals of X_k from those of X_{k-1}, the previous
/// factorization (for the covariance columns of the involved variables) and
/// the step Jacobians. `current` is only used by the fallback path.
MarginalBlocks slam_step_update(const MarginalBlocks& previous, const BeliefState& previous_belief,
                                const SlamStep& step, SlamStrategy strategy,
                                const SlamUpdateOptions& options = {},
                                const BeliefState* current = nullptr,
                                SlamUpdateReport* report = nullptr);

}  // namespace covplan
