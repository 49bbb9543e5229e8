#pragma once

#include <random>
#include <vector>

#include "covplan/sim/config.hpp"
#include "covplan/types.hpp"

namespace covplan::sim {

/// Ground truth of the simulated field.
struct WorldModel {
  double width = 0.0;
  double height = 0.0;
  std::vector<Eigen::Vector2d> landmarks;  // landmark j has key landmark_key(j)
  std::vector<Eigen::Vector2d> goals;
  Eigen::Vector3d start = Eigen::Vector3d::Zero();
};

/// Deterministic world for `config` and its seed: uniform landmarks and the
/// goal loop.
WorldModel generate_world(const ScenarioConfig& config);

struct Observation {
  int landmark = 0;
  Eigen::Vector2d z;  // range, bearing
};

struct StepMeasurements {
  Eigen::Vector3d truth;     // pose after the step
  Eigen::Vector3d odometry;  // noisy body-frame motion
  std::vector<Observation> observations;  // ascending landmark id
};

Matrix odometry_covariance(const SensorConfig& sensor);
Matrix range_bearing_covariance(const SensorConfig& sensor);

/// Landmarks within the sensing radius of `pose`, ascending id.
std::vector<int> visible_landmarks(const WorldModel& world, const SensorConfig& sensor,
                                   const Eigen::Vector3d& pose);

/// Applies the body-frame `control` to the true pose and samples noisy
/// odometry and observations.
class WorldSimulator {
 public:
  WorldSimulator(WorldModel world, SensorConfig sensor, std::uint64_t seed);

  const WorldModel& world() const noexcept { return world_; }
  const Eigen::Vector3d& pose() const noexcept { return pose_; }
  /// Noisy observations from the current pose without moving.
  std::vector<Observation> observe();
  StepMeasurements step(const Eigen::Vector3d& control);

 private:
  WorldModel world_;
  SensorConfig sensor_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  Eigen::Vector3d pose_;
};

/// Body-frame control that heads from `pose` toward `target` with the
/// configured step length and turn limit.
Eigen::Vector3d control_toward(const Eigen::Vector3d& pose, const Eigen::Vector2d& target,
                               const MotionConfig& motion);

}  // namespace covplan::sim
