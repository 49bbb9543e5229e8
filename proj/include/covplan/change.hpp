#pragma once

#include <optional>
#include <string_view>
#include <vector>

#include "covplan/types.hpp"

namespace covplan {

enum class ChangeKind { NotAugmented, Rectangular, Squared, Relinearization };

std::string_view to_string(ChangeKind kind);

/// One change to an inference problem, described by the noise-weighted
/// Jacobian columns of the involved old variables X^I and, for augmented
/// changes, of the new variables X_new.
///
/// For relinearization `a_involved` holds A^I_+ (new linearization point)
/// and `a_minus` holds A^I_- (old point). The two blocks share columns but
/// may differ in row count, which lets an A^I_+ block be stacked with extra
/// purely additive rows.
struct InferenceChange {
  ChangeKind kind = ChangeKind::NotAugmented;
  std::vector<VariableKey> involved;
  Matrix a_involved;
  std::vector<VariableKey> new_keys;
  Matrix a_new;
  Matrix a_minus;
  /// Whitened measurement of the added rows under the linear model
  /// z = [A^I | A_new] x + v. Only used by apply_information_update.
  std::optional<Vector> measurement;

  static InferenceChange not_augmented(std::vector<VariableKey> involved, Matrix a);
  /// Rectangular or Squared depending on whether rows equal dim(X_new).
  static InferenceChange augmented(std::vector<VariableKey> involved, Matrix a_involved,
                                   std::vector<VariableKey> new_keys, Matrix a_new);
  static InferenceChange relinearization(std::vector<VariableKey> involved, Matrix a_minus,
                                         Matrix a_plus);

  Index rows() const noexcept { return a_involved.rows(); }
  Index involved_dim() const noexcept { return a_involved.cols(); }
  Index new_dim() const noexcept { return a_new.cols(); }
  bool augmenting() const noexcept {
    return kind == ChangeKind::Rectangular || kind == ChangeKind::Squared;
  }
  bool empty() const noexcept;

  /// Throws DimensionError if blocks and key sets are inconsistent.
  void validate() const;
};

}  // namespace covplan
