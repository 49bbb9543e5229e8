#include "covplan/change.hpp"

#include "covplan/errors.hpp"
#include "covplan/layout.hpp"

namespace covplan {

std::string_view to_string(ChangeKind kind) {
  switch (kind) {
    case ChangeKind::NotAugmented:
      return "not-augmented";
    case ChangeKind::Rectangular:
      return "rectangular";
    case ChangeKind::Squared:
      return "squared";
    case ChangeKind::Relinearization:
      return "relinearization";
  }
  return "?";
}

InferenceChange InferenceChange::not_augmented(std::vector<VariableKey> involved, Matrix a) {
  InferenceChange c;
  c.kind = ChangeKind::NotAugmented;
  c.involved = std::move(involved);
  c.a_involved = std::move(a);
  c.a_new.resize(c.a_involved.rows(), 0);
  c.validate();
  return c;
}

InferenceChange InferenceChange::augmented(std::vector<VariableKey> involved, Matrix a_involved,
                                           std::vector<VariableKey> new_keys, Matrix a_new) {
  InferenceChange c;
  c.involved = std::move(involved);
  c.a_involved = std::move(a_involved);
  c.new_keys = std::move(new_keys);
  c.a_new = std::move(a_new);
  if (c.a_involved.size() == 0) c.a_involved.resize(c.a_new.rows(), 0);
  c.kind = c.a_new.rows() == c.a_new.cols() ? ChangeKind::Squared : ChangeKind::Rectangular;
  c.validate();
  return c;
}

InferenceChange InferenceChange::relinearization(std::vector<VariableKey> involved,
                                                 Matrix a_minus, Matrix a_plus) {
  InferenceChange c;
  c.kind = ChangeKind::Relinearization;
  c.involved = std::move(involved);
  c.a_minus = std::move(a_minus);
  c.a_involved = std::move(a_plus);
  c.a_new.resize(c.a_involved.rows(), 0);
  c.validate();
  return c;
}

bool InferenceChange::empty() const noexcept {
  if (kind == ChangeKind::Relinearization) return a_involved.rows() == 0 && a_minus.rows() == 0;
  return a_involved.rows() == 0 && new_keys.empty();
}

void InferenceChange::validate() const {
  if (a_involved.cols() != StateLayout::total_dim(involved))
    throw DimensionError("A^I column count does not match involved variables");
  if (key_intersection(involved, new_keys).size() != 0)
    throw DimensionError("involved and new variable sets overlap");
  StateLayout check(involved);
  StateLayout check_new(new_keys);
  switch (kind) {
    case ChangeKind::NotAugmented:
      if (!new_keys.empty()) throw DimensionError("not-augmented change carries new variables");
      break;
    case ChangeKind::Rectangular:
    case ChangeKind::Squared:
      if (a_new.cols() != check_new.dim())
        throw DimensionError("A_new column count does not match new variables");
      if (a_new.rows() != a_involved.rows())
        throw DimensionError("A^I and A_new have different row counts");
      if (kind == ChangeKind::Squared && a_new.rows() != a_new.cols())
        throw DimensionError("squared change requires m = dim(X_new)");
      if (kind == ChangeKind::Rectangular && a_new.rows() < a_new.cols())
        throw RankDeficient("rectangular change has fewer rows than new variables");
      break;
    case ChangeKind::Relinearization:
      if (!new_keys.empty()) throw DimensionError("relinearization carries new variables");
      if (a_minus.cols() != a_involved.cols())
        throw DimensionError("A^I_- and A^I_+ have different column counts");
      break;
  }
  if (measurement && measurement->size() != a_involved.rows())
    throw DimensionError("measurement size does not match change rows");
}

}  // namespace covplan
