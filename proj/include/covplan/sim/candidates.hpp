#pragma once

#include <vector>

#include "covplan/ramdl.hpp"
#include "covplan/sim/config.hpp"
#include "covplan/sim/slam_session.hpp"

namespace covplan::sim {

/// A sampled trajectory: straight segments through `waypoints`, each segment
/// realized as predicted poses and maximum-likelihood observation Jacobians.
struct CandidateAction {
  int id = 0;
  std::vector<Eigen::Vector2d> waypoints;
  std::vector<std::vector<Eigen::Vector3d>> segment_poses;
  PlanCandidate plan;
  Eigen::Vector3d terminal_pose = Eigen::Vector3d::Zero();
  double path_length = 0.0;
  bool toward_cluster = false;
};

/// Source of planning-only variable ids, disjoint from the estimator's.
class PlanningKeys {
 public:
  explicit PlanningKeys(std::int64_t first = 1'000'000'000) : next_(first) {}
  VariableKey next_pose() { return pose_key(next_++); }

 private:
  std::int64_t next_;
};

/// Deterministic k-means with farthest-point seeding; at most `k` centers.
std::vector<Eigen::Vector2d> cluster_landmarks(const std::vector<Eigen::Vector2d>& points, int k);

/// Three-level trajectory tree from the current estimate: headings around
/// the goal direction, refinements, then a final segment toward the goal or
/// toward a landmark cluster. Children of one waypoint share the parent's
/// segment increments exactly.
std::vector<CandidateAction> generate_candidates(const SlamSession& session,
                                                 const Eigen::Vector2d& goal,
                                                 const ScenarioConfig& config,
                                                 PlanningKeys& keys);

std::vector<PlanCandidate> plan_candidates(const std::vector<CandidateAction>& actions);

struct RankedObjective {
  std::vector<double> cost;  // J(a), lower is better
  std::size_t best_index = 0;
  int best_id = 0;
};

/// J(a) = α₁ d(x_terminal, goal) + α₂ length − α₃ utility, with the
/// utility of each score taken so that larger is better. Ties within the
/// planner tolerance go to the lowest id.
RankedObjective assemble_objective(const std::vector<CandidateAction>& actions,
                                   std::span<const InfoScore> scores, const ObjectiveWeights& weights,
                                   const Eigen::Vector2d& goal);

}  // namespace covplan::sim
