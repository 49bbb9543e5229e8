#pragma once

#include <span>
#include <vector>

#include "covplan/belief.hpp"
#include "covplan/layout.hpp"

namespace covplan {

enum class CacheMode { Marginal, Conditional };

/// Variables whose joint covariance is wanted, optionally conditioned on a
/// disjoint set.
struct CovarianceRequest {
  std::vector<VariableKey> y;
  std::vector<VariableKey> conditioning;
};

/// Joint covariance over the tracked set W, either marginal or conditioned
/// on `conditioning` (disjoint from W).
class CovarianceCache {
 public:
  CovarianceCache() = default;
  CovarianceCache(StateLayout layout, Matrix joint, CacheMode mode = CacheMode::Marginal,
                  std::vector<VariableKey> conditioning = {});

  const StateLayout& layout() const noexcept { return layout_; }
  const Matrix& joint() const noexcept { return joint_; }
  CacheMode mode() const noexcept { return mode_; }
  const std::vector<VariableKey>& conditioning() const noexcept { return conditioning_; }
  bool contains(VariableKey key) const { return layout_.contains(key); }
  bool contains_all(std::span<const VariableKey> keys) const;

  /// Rectangular slice Σ^{(rows, cols)}; throws CacheMiss for untracked keys.
  Matrix block(std::span<const VariableKey> rows, std::span<const VariableKey> cols) const;
  Matrix block(std::span<const VariableKey> keys) const { return block(keys, keys); }
  Matrix marginal(VariableKey key) const;
  /// Restriction of the cache to `keys` (in that order).
  CovarianceCache restrict_to(std::span<const VariableKey> keys) const;

 private:
  std::vector<Index> indices(std::span<const VariableKey> keys) const;

  StateLayout layout_;
  Matrix joint_;
  CacheMode mode_ = CacheMode::Marginal;
  std::vector<VariableKey> conditioning_;
};

/// Marginal covariance over `keys` computed from the square-root factor by
/// column backsubstitution.
CovarianceCache cache_from_belief(const BeliefState& belief, std::span<const VariableKey> keys);

/// Conditional covariance Σ^{keys|conditioning} of the belief: the inverse of
/// the information matrix restricted to the complement of `conditioning`,
/// read at `keys`. Computed as a Schur complement of the marginal over
/// keys ∪ conditioning.
CovarianceCache conditional_cache_from_belief(const BeliefState& belief,
                                              std::span<const VariableKey> keys,
                                              std::span<const VariableKey> conditioning);

/// Conditional covariance of `keys` given `conditioning` from a marginal
/// cache that tracks both sets.
CovarianceCache condition_cache(const CovarianceCache& marginal, std::span<const VariableKey> keys,
                                std::span<const VariableKey> conditioning);

}  // namespace covplan
