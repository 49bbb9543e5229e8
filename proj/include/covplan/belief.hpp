#pragma once

#include <memory>
#include <vector>

#include "covplan/change.hpp"
#include "covplan/factors.hpp"
#include "covplan/layout.hpp"
#include "covplan/sparse_cholesky.hpp"

namespace covplan {

class FactorGraph {
 public:
  FactorGraph() = default;
  explicit FactorGraph(StateLayout layout) : layout_(std::move(layout)) {}

  void add_variable(VariableKey key) { layout_.append(key); }
  /// Throws if any involved key is missing from the layout.
  void add_factor(GaussianFactor factor);

  const StateLayout& layout() const noexcept { return layout_; }
  const std::vector<GaussianFactor>& factors() const noexcept { return factors_; }
  std::size_t size() const noexcept { return factors_.size(); }

 private:
  StateLayout layout_;
  std::vector<GaussianFactor> factors_;
};

struct SolveConfig {
  int max_iters = 20;
  double step_tol = 1e-9;
  double relin_threshold = 0.05;
};

/// Gaussian belief in information form. The information matrix is assembled
/// at `linearization_point`, which can lag behind the MAP `mean` for
/// variables whose estimate moved less than the relinearization threshold.
struct BeliefState {
  StateLayout layout;
  Vector mean;
  Vector linearization_point;
  SparseMatrix information;
  Vector information_vector;
  std::shared_ptr<const SparseCholesky> sqrt_information;
  /// Number of graph factors folded into `information`, in graph order.
  std::size_t factor_count = 0;

  Index dim() const noexcept { return layout.dim(); }
  const SparseCholesky& factor() const { return *sqrt_information; }
};

struct RelinearizationReport {
  /// Previously existing variables whose linearization point was moved.
  std::vector<VariableKey> relinearized;
  /// Indices of previously existing factors that touch a relinearized variable.
  std::vector<std::size_t> relinearized_factors;
  int iterations = 0;
  bool converged = false;
  double last_step_norm = 0.0;
};

struct MapSolution {
  BeliefState belief;
  RelinearizationReport report;
};

/// Information matrix AᵀA and vector Aᵀb of `factors` linearized at `point`.
void assemble_information(std::span<const GaussianFactor> factors, const Vector& point,
                          const StateLayout& layout, SparseMatrix& lambda, Vector& gradient);

/// Gauss-Newton MAP inference. When `previous` is given, its variables and
/// factors are treated as old: only old factors touching variables whose
/// estimate moved by more than the threshold (relative to the previous
/// linearization point) are relinearized. Without it, `initial` serves as
/// the old linearization point for every variable.
MapSolution solve_map(const FactorGraph& graph, const Vector& initial, const SolveConfig& config,
                      const BeliefState* previous = nullptr);

/// Sparse Cholesky with an approximate-minimum-degree ordering. Pivot
/// failures are reported as NotPositiveDefinite.
std::shared_ptr<const SparseCholesky> factorize(const SparseMatrix& lambda);
std::shared_ptr<const SparseCholesky> factorize(const SparseMatrix& lambda,
                                                std::vector<int> ordering);

/// Belief from an information matrix and mean (no graph).
BeliefState make_belief(StateLayout layout, SparseMatrix lambda, Vector mean);

/// Applies the quadratic information update of `change` and refactorizes.
/// New variables are appended to the layout in the order of the change.
/// Without a measurement on the change the old mean is kept and new
/// variables start at zero; with one, the mean is re-solved from
/// η_+ = η_- + Aᵀ z.
BeliefState apply_information_update(const BeliefState& belief, const InferenceChange& change);

}  // namespace covplan
