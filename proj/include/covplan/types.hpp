#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>

namespace covplan {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;
using Index = Eigen::Index;

// Scalar variables exist for one-dimensional toy problems and tests; SLAM
// problems only use poses and landmarks.
enum class VarKind : std::uint8_t { Pose = 0, Landmark = 1, Scalar = 2 };

struct VariableKey {
  VarKind kind = VarKind::Pose;
  std::int64_t index = 0;

  constexpr int dim() const noexcept {
    switch (kind) {
      case VarKind::Pose:
        return 3;  // x, y, theta
      case VarKind::Landmark:
        return 2;  // x, y
      case VarKind::Scalar:
        return 1;
    }
    return 0;
  }

  friend constexpr auto operator<=>(const VariableKey&, const VariableKey&) = default;
};

constexpr VariableKey pose_key(std::int64_t i) { return {VarKind::Pose, i}; }
constexpr VariableKey landmark_key(std::int64_t i) { return {VarKind::Landmark, i}; }
constexpr VariableKey scalar_key(std::int64_t i) { return {VarKind::Scalar, i}; }

std::string to_string(const VariableKey& key);

struct VariableKeyHash {
  std::size_t operator()(const VariableKey& key) const noexcept {
    return std::hash<std::int64_t>{}(key.index * 4 + static_cast<std::int64_t>(key.kind));
  }
};

}  // namespace covplan
