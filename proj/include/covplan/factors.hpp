#pragma once

#include <span>
#include <variant>
#include <vector>

#include "covplan/layout.hpp"
#include "covplan/types.hpp"

namespace covplan {

/// Wrap an angle to (-pi, pi].
double wrap_angle(double a);

namespace pose2 {
/// Relative pose of `to` expressed in the frame of `from`.
Eigen::Vector3d between(const Eigen::Vector3d& from, const Eigen::Vector3d& to);
/// Pose reached by applying the body-frame motion `delta` at `pose`.
Eigen::Vector3d compose(const Eigen::Vector3d& pose, const Eigen::Vector3d& delta);
/// Range and bearing (relative to heading) from `pose` to `landmark`.
Eigen::Vector2d range_bearing(const Eigen::Vector3d& pose, const Eigen::Vector2d& landmark);
/// Landmark position seen at `measurement` (range, bearing) from `pose`.
Eigen::Vector2d landmark_from(const Eigen::Vector3d& pose, const Eigen::Vector2d& measurement);
}  // namespace pose2

enum class FactorModelKind { Prior, Between, RangeBearing, Linear };

/// Gaussian factor z = h(X^j) + v, v ~ N(0, Sigma^j). The noise is stored as
/// its whitening matrix W (lower triangular, W Sigma W^T = I).
class GaussianFactor {
 public:
  static GaussianFactor prior(VariableKey key, Vector z, const Matrix& covariance);
  static GaussianFactor between(VariableKey from, VariableKey to, Vector z, const Matrix& covariance);
  static GaussianFactor range_bearing(VariableKey pose, VariableKey landmark, Vector z,
                                      const Matrix& covariance);
  /// Affine model h(x) = H x over the stacked keys.
  static GaussianFactor linear(std::vector<VariableKey> keys, Matrix h, Vector z,
                               const Matrix& covariance);

  FactorModelKind model() const noexcept { return model_; }
  const std::vector<VariableKey>& keys() const noexcept { return keys_; }
  Index dim() const noexcept { return z_.size(); }
  Index variable_dim() const;
  const Vector& measurement() const noexcept { return z_; }
  const Matrix& whitener() const noexcept { return whitener_; }
  const Matrix& covariance() const noexcept { return covariance_; }
  bool touches(VariableKey key) const;

  /// Predicted measurement and its Jacobian wrt the stacked keys, evaluated
  /// at `values` (one vector per key).
  void evaluate(std::span<const Vector> values, Vector& h, Matrix& jacobian) const;
  Vector predict(std::span<const Vector> values) const;
  /// z - h(values), with angular components wrapped.
  Vector error(std::span<const Vector> values) const;

  struct Linearized {
    Matrix jacobian;  // W * dh/dX, dim() x variable_dim()
    Vector residual;  // W * (z - h)
  };
  Linearized linearize(std::span<const Vector> values) const;

  friend bool operator==(const GaussianFactor& a, const GaussianFactor& b);

 private:
  GaussianFactor(FactorModelKind model, std::vector<VariableKey> keys, Vector z,
                 const Matrix& covariance);
  bool angular(Index row) const;

  FactorModelKind model_ = FactorModelKind::Linear;
  std::vector<VariableKey> keys_;
  Vector z_;
  Matrix covariance_;
  Matrix whitener_;
  Matrix linear_h_;
};

/// Noise-weighted Jacobian of a factor batch, stored compactly as the
/// nonzero column block A^I over `involved` keys.
struct NoiseWeightedJacobian {
  std::vector<VariableKey> involved;
  Matrix block;

  Index rows() const noexcept { return block.rows(); }
  /// Columns of `block` belonging to `keys` (in that order).
  Matrix columns(std::span<const VariableKey> keys) const;
  /// Full m x layout.dim() matrix, zero outside the involved columns.
  Matrix dense(const StateLayout& layout) const;
};

struct LinearizedBatch {
  NoiseWeightedJacobian jacobian;
  Vector residual;
};

/// Values of `keys` read out of `point` laid out by `layout`.
std::vector<Vector> gather_values(std::span<const VariableKey> keys, const Vector& point,
                                  const StateLayout& layout);

LinearizedBatch linearize_factors(std::span<const GaussianFactor> factors, const Vector& point,
                                  const StateLayout& layout);

/// Keys touched by `factors`, in order of first appearance.
std::vector<VariableKey> involved_keys(std::span<const GaussianFactor> factors);

/// x + delta, with pose headings wrapped.
Vector retract(const Vector& x, const Vector& delta, const StateLayout& layout);
/// Per-variable difference a - b with wrapped headings.
Vector local_difference(const Vector& a, const Vector& b, const StateLayout& layout);

}  // namespace covplan
