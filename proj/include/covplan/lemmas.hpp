#pragma once

#include <complex>
#include <span>
#include <vector>

#include "covplan/change.hpp"
#include "covplan/cov_cache.hpp"
#include "covplan/types.hpp"

namespace covplan {

enum class RectangularMethod { Method1 = 1, Method2 = 2 };

/// Intermediate matrices of the last update. None of them has a dimension
/// that depends on the full state size: they are bounded by m, dim(X_new),
/// dim(X^I) and the requested set.
struct UpdateWorkspace {
  ChangeKind kind = ChangeKind::NotAugmented;
  Matrix c;      // I_m + A^I Σ^I A^Iᵀ
  Matrix b;      // Σ^C A^Iᵀ, or Σ^C K1ᵀ for rectangular changes
  Matrix f;      // (A_newᵀ A_new)⁻¹
  Matrix k;      // I_m - A_new F A_newᵀ
  Matrix k1;     // K A^I
  Matrix g;      // I_m + K1 Σ^I K1ᵀ
  Matrix p;      // columns Y_new of (A_newᵀ C⁻¹ A_new)⁻¹
  Matrix a_iv;   // rows Y_new of A_new⁻¹
  Matrix m1;     // relinearization: M1 (the factor multiplying i)
  Matrix m2;     // relinearization: M2
  Matrix g_relin;
  double imaginary_residue = 0.0;

  /// Largest row or column count across the stored intermediates.
  Index max_dimension() const;
};

/// Fault injection used to check that the verification suites detect a
/// broken update. Process-wide.
enum class Fault { None, RectangularSign };
void set_fault(Fault fault);
Fault active_fault();

/// Low-rank correction Σ_+^Y = Σ_-^Y - (Σ^C S)(Σ^C S)ᵀ + (Σ^C D)(Σ^C D)ᵀ,
/// where Σ^C = Σ_-^{(Y, X^I)}. `add` is empty for purely additive changes.
struct LowRankFactors {
  Matrix subtract;
  Matrix add;

  /// Σ^Y update for an arbitrary row slice Σ^C (rows of Y, columns X^I).
  Matrix apply(const Matrix& sigma_y, const Matrix& sigma_c) const;
};

LowRankFactors not_augmented_factors(const Matrix& sigma_i, const Matrix& a,
                                     UpdateWorkspace* ws = nullptr);
/// Relinearization with A^I_- (a_minus) and A^I_+ (a_plus) over the same
/// columns. The imaginary unit on M1 is carried symbolically: the residue
/// Re·Imᵀ + Im·Reᵀ of U Uᵀ vanishes because U1 and U2 are purely imaginary
/// and purely real respectively.
LowRankFactors relinearized_factors(const Matrix& sigma_i, const Matrix& a_minus,
                                    const Matrix& a_plus, UpdateWorkspace* ws = nullptr);

/// Posterior blocks of an augmenting change: (Y_old, Y_old), (Y_new, Y_new)
/// and (Y_old, Y_new).
template <typename Scalar>
struct AugmentedBlocks {
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  /// Σ_+^{Y_old} = Σ_-^{Y_old} - old_left * old_right.
  Mat old_left;
  Mat old_right;
  Mat new_block;
  Mat cross;
};

/// Rectangular update in factored form for a real or complex-symmetric
/// Jacobian (plain transposes throughout). `sigma_c` holds rows Y_old and
/// columns X^I of the prior; `y_new` selects scalar columns of A_new.
template <typename Scalar>
AugmentedBlocks<Scalar> rectangular_blocks(
    const Matrix& sigma_c, const Matrix& sigma_i,
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& a_i,
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& a_new,
    std::span<const Index> y_new, RectangularMethod method, UpdateWorkspace* ws = nullptr);

/// Squared update: old blocks unchanged, so only new and cross blocks.
AugmentedBlocks<double> squared_blocks(const Matrix& sigma_c, const Matrix& sigma_i,
                                       const Matrix& a_i, const Matrix& a_new,
                                       std::span<const Index> y_new,
                                       UpdateWorkspace* ws = nullptr);

/// Cache-level updates. `y` is the requested output set; entries that are
/// new variables of the change go to Y_new, the rest must be cached along
/// with the involved variables.
CovarianceCache update_not_augmented(const CovarianceCache& cache, const InferenceChange& change,
                                     std::span<const VariableKey> y,
                                     UpdateWorkspace* ws = nullptr);
CovarianceCache update_rectangular(const CovarianceCache& cache, const InferenceChange& change,
                                   std::span<const VariableKey> y,
                                   RectangularMethod method = RectangularMethod::Method2,
                                   UpdateWorkspace* ws = nullptr);
CovarianceCache update_squared(const CovarianceCache& cache, const InferenceChange& change,
                               std::span<const VariableKey> y, UpdateWorkspace* ws = nullptr);
CovarianceCache update_relinearized(const CovarianceCache& cache, const InferenceChange& change,
                                    std::span<const VariableKey> y,
                                    UpdateWorkspace* ws = nullptr);
/// Conditional-mode update: the change's columns of conditioning variables
/// are dropped and the lemma matching the change kind is applied to the
/// conditional blocks.
CovarianceCache update_conditional(const CovarianceCache& cache, const InferenceChange& change,
                                   std::span<const VariableKey> y,
                                   RectangularMethod method = RectangularMethod::Method2,
                                   UpdateWorkspace* ws = nullptr);

/// Dispatch on change kind and cache mode.
CovarianceCache update(const CovarianceCache& cache, const InferenceChange& change,
                       std::span<const VariableKey> y,
                       RectangularMethod method = RectangularMethod::Method2,
                       UpdateWorkspace* ws = nullptr);

/// The change with the involved variables in `drop` and their columns
/// removed.
InferenceChange drop_involved(const InferenceChange& change, std::span<const VariableKey> drop);

}  // namespace covplan
