#pragma once

#include <span>
#include <unordered_map>
#include <vector>

#include "covplan/types.hpp"

namespace covplan {

/// Ordered set of variables, each owning a contiguous range of scalar
/// indices. Ranges follow insertion order and cover [0, dim()).
class StateLayout {
 public:
  StateLayout() = default;
  explicit StateLayout(std::span<const VariableKey> keys);
  StateLayout(std::initializer_list<VariableKey> keys);

  void append(VariableKey key);
  void append(std::span<const VariableKey> keys);

  bool contains(VariableKey key) const { return position_.count(key) != 0; }
  Index offset(VariableKey key) const;
  std::size_t position(VariableKey key) const;
  Index dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return keys_.size(); }
  bool empty() const noexcept { return keys_.empty(); }
  const std::vector<VariableKey>& keys() const noexcept { return keys_; }
  Index offset_at(std::size_t i) const { return offsets_[i]; }
  /// Variable owning scalar index `i`.
  VariableKey key_at_scalar(Index i) const;

  /// Scalar indices of `keys`, concatenated in the given order.
  std::vector<Index> scalar_indices(std::span<const VariableKey> keys) const;

  static Index total_dim(std::span<const VariableKey> keys);

 private:
  std::vector<VariableKey> keys_;
  std::vector<Index> offsets_;
  std::unordered_map<VariableKey, std::size_t, VariableKeyHash> position_;
  Index dim_ = 0;
};

/// Order-preserving union and difference of key lists.
std::vector<VariableKey> key_union(std::span<const VariableKey> a, std::span<const VariableKey> b);
std::vector<VariableKey> key_difference(std::span<const VariableKey> a,
                                        std::span<const VariableKey> b);
std::vector<VariableKey> key_intersection(std::span<const VariableKey> a,
                                          std::span<const VariableKey> b);

}  // namespace covplan
