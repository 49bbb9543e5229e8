#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "covplan/belief.hpp"
#include "covplan/ramdl.hpp"

namespace covplan::sim {

struct WorldConfig {
  double width = 500.0;
  double height = 500.0;
  int landmarks = 300;
  /// Goal waypoints visited in order; empty means a loop of `goal_count`
  /// goals around the field that ends back at the start.
  std::vector<Eigen::Vector2d> goals;
  int goal_count = 8;
  /// Times the goal loop is driven.
  int laps = 1;
  double margin = 50.0;
};

struct SensorConfig {
  double radius = 75.0;
  /// Landmarks closer than this are not observed.
  double min_range = 1.0;
  double range_std = 0.5;
  double bearing_std = 0.5 * 3.14159265358979323846 / 180.0;
  Eigen::Vector3d odometry_std{0.1, 0.1, 0.0087};
  /// Multiplies the sampled noise; 0 gives exact measurements while the
  /// factor models keep the configured covariances.
  double noise_scale = 1.0;
};

struct MotionConfig {
  double step_length = 8.0;
  double max_turn = 0.6;
  double goal_tolerance = 12.0;
  int steps = 300;
};

struct MethodsConfig {
  bool recursive = false;
  bool backsub = true;
  bool twostage = true;
  bool onestage = false;
  double tolerance = 1e-6;
  double fallback_ratio = 1.0;
  /// Re-observations of landmarks unseen for this many steps mark a loop
  /// closure step in the log.
  int loop_gap = 30;
};

struct ObjectiveWeights {
  double alpha_distance = 1.0;
  double alpha_length = 0.2;
  double alpha_information = 30.0;
};

struct PlannerConfig {
  int first_directions = 6;
  int second_directions = 4;
  int clusters = 8;
  int segment_poses = 5;
  int max_observations = 5;
  int planning_steps = 40;
  QueryMode objective = QueryMode::Unfocused;
  ObjectiveWeights weights;
  bool dump_tree = false;
};

struct ScenarioConfig {
  std::uint64_t seed = 1;
  WorldConfig world;
  SensorConfig sensor;
  MotionConfig motion;
  SolveConfig solver{.max_iters = 20, .step_tol = 1e-9, .relin_threshold = 0.25};
  MethodsConfig methods;
  PlannerConfig planner;
};

/// Parse a JSON scenario; missing keys keep their defaults, unknown keys
/// are rejected. Throws ConfigError.
ScenarioConfig parse_config(const std::string& json_text);
ScenarioConfig load_config(const std::string& path);
/// Canonical JSON dump of every field.
std::string dump_config(const ScenarioConfig& config);
/// FNV-1a 64-bit hash of the canonical dump, as 16 hex digits.
std::string config_hash(const ScenarioConfig& config);

QueryMode parse_objective(const std::string& name);

}  // namespace covplan::sim
