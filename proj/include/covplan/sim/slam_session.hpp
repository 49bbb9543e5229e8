#pragma once

#include <map>
#include <vector>

#include "covplan/belief.hpp"
#include "covplan/sim/config.hpp"
#include "covplan/sim/world.hpp"
#include "covplan/slam_update.hpp"

namespace covplan::sim {

/// Split of one time step's factors into the parts of the two-stage update.
struct StepBundle {
  SlamStep step;
  std::vector<std::size_t> squared_factors;  // odometry and first observations
  std::vector<std::size_t> observe_factors;  // re-observations of mapped landmarks
  std::vector<std::size_t> relinearized_factors;
  int relinearized_poses = 0;
  int relinearized_landmarks = 0;
  bool loop_closure = false;
};

/// Jacobian blocks of a step from the factor partition: new factors and F_R
/// at the current linearization point, F_R also at the previous one.
SlamStep build_step_change(const FactorGraph& graph, const BeliefState& previous,
                           const BeliefState& current, VariableKey previous_pose,
                           std::span<const VariableKey> new_keys,
                           std::span<const std::size_t> squared_factors,
                           std::span<const std::size_t> observe_factors,
                           std::span<const std::size_t> relinearized_factors);

/// Incremental estimator: grows the factor graph by one pose per step and
/// re-solves the MAP problem starting from the previous estimate.
class SlamSession {
 public:
  SlamSession(const ScenarioConfig& config, const Eigen::Vector3d& start);

  const FactorGraph& graph() const noexcept { return graph_; }
  const BeliefState& belief() const noexcept { return belief_; }
  int pose_index() const noexcept { return pose_index_; }
  VariableKey current_pose() const { return pose_key(pose_index_); }
  Eigen::Vector3d pose_estimate(int index) const;
  Eigen::Vector2d landmark_estimate(int id) const;
  /// Relinearization report of the latest solve.
  const RelinearizationReport& last_report() const noexcept { return last_report_; }
  bool knows(int landmark) const { return last_seen_.count(landmark) != 0; }
  /// Mapped landmark ids, ascending.
  std::vector<int> mapped_landmarks() const;

  /// Adds x_k, its odometry and observations, solves, and returns the split
  /// of the change relative to the previous belief (which is moved out into
  /// `previous` when given).
  StepBundle advance(const StepMeasurements& m, BeliefState* previous = nullptr);

 private:
  ScenarioConfig config_;
  FactorGraph graph_;
  BeliefState belief_;
  int pose_index_ = 0;
  RelinearizationReport last_report_;
  std::map<int, int> last_seen_;  // landmark id -> last step observed
  Matrix odometry_cov_;
  Matrix range_bearing_cov_;
};

/// Prior on the first pose.
Matrix start_prior_covariance();

}  // namespace covplan::sim
