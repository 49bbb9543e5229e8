#include "covplan/layout.hpp"

#include <algorithm>
#include <unordered_set>

#include "covplan/errors.hpp"

namespace covplan {

std::string to_string(const VariableKey& key) {
  switch (key.kind) {
    case VarKind::Pose:
      return "x" + std::to_string(key.index);
    case VarKind::Landmark:
      return "l" + std::to_string(key.index);
    case VarKind::Scalar:
      return "s" + std::to_string(key.index);
  }
  return "?";
}

StateLayout::StateLayout(std::span<const VariableKey> keys) { append(keys); }

StateLayout::StateLayout(std::initializer_list<VariableKey> keys) {
  for (const auto& k : keys) append(k);
}

void StateLayout::append(VariableKey key) {
  if (contains(key)) throw DimensionError("duplicate variable " + to_string(key) + " in layout");
  position_.emplace(key, keys_.size());
  keys_.push_back(key);
  offsets_.push_back(dim_);
  dim_ += key.dim();
}

void StateLayout::append(std::span<const VariableKey> keys) {
  for (const auto& k : keys) append(k);
}

std::size_t StateLayout::position(VariableKey key) const {
  auto it = position_.find(key);
  if (it == position_.end()) throw DimensionError("variable " + to_string(key) + " not in layout");
  return it->second;
}

VariableKey StateLayout::key_at_scalar(Index i) const {
  if (i < 0 || i >= dim_) throw DimensionError("scalar index outside layout");
  auto it = std::upper_bound(offsets_.begin(), offsets_.end(), i);
  return keys_[static_cast<std::size_t>(it - offsets_.begin()) - 1];
}

Index StateLayout::offset(VariableKey key) const { return offsets_[position(key)]; }

std::vector<Index> StateLayout::scalar_indices(std::span<const VariableKey> keys) const {
  std::vector<Index> out;
  out.reserve(static_cast<std::size_t>(total_dim(keys)));
  for (const auto& k : keys) {
    const Index off = offset(k);
    for (int d = 0; d < k.dim(); ++d) out.push_back(off + d);
  }
  return out;
}

Index StateLayout::total_dim(std::span<const VariableKey> keys) {
  Index d = 0;
  for (const auto& k : keys) d += k.dim();
  return d;
}

std::vector<VariableKey> key_union(std::span<const VariableKey> a, std::span<const VariableKey> b) {
  std::vector<VariableKey> out;
  std::unordered_set<VariableKey, VariableKeyHash> seen;
  for (const auto& k : a)
    if (seen.insert(k).second) out.push_back(k);
  for (const auto& k : b)
    if (seen.insert(k).second) out.push_back(k);
  return out;
}

std::vector<VariableKey> key_difference(std::span<const VariableKey> a,
                                        std::span<const VariableKey> b) {
  std::unordered_set<VariableKey, VariableKeyHash> drop(b.begin(), b.end());
  std::vector<VariableKey> out;
  for (const auto& k : a)
    if (!drop.count(k)) out.push_back(k);
  return out;
}

std::vector<VariableKey> key_intersection(std::span<const VariableKey> a,
                                          std::span<const VariableKey> b) {
  std::unordered_set<VariableKey, VariableKeyHash> keep(b.begin(), b.end());
  std::vector<VariableKey> out;
  for (const auto& k : a)
    if (keep.count(k)) out.push_back(k);
  return out;
}

}  // namespace covplan
