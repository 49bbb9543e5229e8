#include "covplan/cov_cache.hpp"

#include <Eigen/Cholesky>

#include "covplan/errors.hpp"
#include "covplan/recovery.hpp"

namespace covplan {

CovarianceCache::CovarianceCache(StateLayout layout, Matrix joint, CacheMode mode,
                                 std::vector<VariableKey> conditioning)
    : layout_(std::move(layout)),
      joint_(std::move(joint)),
      mode_(mode),
      conditioning_(std::move(conditioning)) {
  if (joint_.rows() != layout_.dim() || joint_.cols() != layout_.dim())
    throw DimensionError("cache joint covariance does not match its layout");
  if (!key_intersection(layout_.keys(), conditioning_).empty())
    throw DimensionError("tracked and conditioning sets overlap");
  if (mode_ == CacheMode::Marginal && !conditioning_.empty())
    throw DimensionError("marginal cache cannot carry a conditioning set");
}

bool CovarianceCache::contains_all(std::span<const VariableKey> keys) const {
  for (const auto& k : keys)
    if (!layout_.contains(k)) return false;
  return true;
}

std::vector<Index> CovarianceCache::indices(std::span<const VariableKey> keys) const {
  for (const auto& k : keys)
    if (!layout_.contains(k)) throw CacheMiss("covariance of " + to_string(k) + " not cached", k);
  return layout_.scalar_indices(keys);
}

Matrix CovarianceCache::block(std::span<const VariableKey> rows,
                              std::span<const VariableKey> cols) const {
  const auto ri = indices(rows);
  const auto ci = indices(cols);
  return joint_(ri, ci);
}

Matrix CovarianceCache::marginal(VariableKey key) const {
  const VariableKey k[] = {key};
  return block(k, k);
}

CovarianceCache CovarianceCache::restrict_to(std::span<const VariableKey> keys) const {
  return CovarianceCache(StateLayout(keys), block(keys), mode_, conditioning_);
}

CovarianceCache cache_from_belief(const BeliefState& belief, std::span<const VariableKey> keys) {
  for (const auto& k : keys)
    if (!belief.layout.contains(k))
      throw DimensionError("requested variable " + to_string(k) + " not in belief");
  const auto idx = belief.layout.scalar_indices(keys);
  const Matrix cols = prior_columns(belief.factor(), idx);
  Matrix joint = cols(idx, Eigen::all);
  joint = 0.5 * (joint + joint.transpose()).eval();
  return CovarianceCache(StateLayout(keys), std::move(joint));
}

CovarianceCache condition_cache(const CovarianceCache& marginal, std::span<const VariableKey> keys,
                                std::span<const VariableKey> conditioning) {
  if (marginal.mode() != CacheMode::Marginal)
    throw DimensionError("conditioning requires a marginal cache");
  if (!key_intersection(keys, conditioning).empty())
    throw DimensionError("tracked and conditioning sets overlap");
  Matrix syy = marginal.block(keys);
  if (!conditioning.empty()) {
    const Matrix syf = marginal.block(keys, conditioning);
    const Matrix sff = marginal.block(conditioning);
    Eigen::LLT<Matrix> llt(sff);
    if (llt.info() != Eigen::Success)
      throw NotPositiveDefinite("conditioning covariance is not positive definite", 0, 0);
    syy -= syf * llt.solve(syf.transpose());
    syy = 0.5 * (syy + syy.transpose()).eval();
  }
  return CovarianceCache(StateLayout(keys), std::move(syy), CacheMode::Conditional,
                         {conditioning.begin(), conditioning.end()});
}

CovarianceCache conditional_cache_from_belief(const BeliefState& belief,
                                              std::span<const VariableKey> keys,
                                              std::span<const VariableKey> conditioning) {
  const auto all = key_union(keys, conditioning);
  return condition_cache(cache_from_belief(belief, all), keys, conditioning);
}

}  // namespace covplan
