#include "covplan/sim/world.hpp"

#include <algorithm>
#include <cmath>

#include "covplan/factors.hpp"

namespace covplan::sim {

WorldModel generate_world(const ScenarioConfig& config) {
  const auto& wc = config.world;
  WorldModel w;
  w.width = wc.width;
  w.height = wc.height;
  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> ux(0.0, wc.width);
  std::uniform_real_distribution<double> uy(0.0, wc.height);
  for (int j = 0; j < wc.landmarks; ++j) {
    const double x = ux(rng);
    const double y = uy(rng);
    w.landmarks.emplace_back(x, y);
  }
  const double m = wc.margin;
  w.start = {m, m, 0.0};
  if (!wc.goals.empty()) {
    w.goals = wc.goals;
  } else {
    // Evenly spaced points on the inset rectangle, counter-clockwise from the
    // start, with the last goal back at the start.
    const double ww = wc.width - 2 * m;
    const double hh = wc.height - 2 * m;
    const double perimeter = 2 * (ww + hh);
    for (int g = 1; g <= wc.goal_count; ++g) {
      double s = perimeter * g / wc.goal_count;
      Eigen::Vector2d p;
      if (s <= ww)
        p = {m + s, m};
      else if ((s -= ww) <= hh)
        p = {m + ww, m + s};
      else if ((s -= hh) <= ww)
        p = {m + ww - s, m + hh};
      else
        p = {m, m + hh - (s - ww)};
      w.goals.push_back(p);
    }
  }
  const std::vector<Eigen::Vector2d> loop = w.goals;
  for (int lap = 1; lap < wc.laps; ++lap) w.goals.insert(w.goals.end(), loop.begin(), loop.end());
  return w;
}

Matrix odometry_covariance(const SensorConfig& sensor) {
  return sensor.odometry_std.array().square().matrix().asDiagonal();
}

Matrix range_bearing_covariance(const SensorConfig& sensor) {
  Matrix c = Matrix::Zero(2, 2);
  c(0, 0) = sensor.range_std * sensor.range_std;
  c(1, 1) = sensor.bearing_std * sensor.bearing_std;
  return c;
}

std::vector<int> visible_landmarks(const WorldModel& world, const SensorConfig& sensor,
                                   const Eigen::Vector3d& pose) {
  std::vector<int> out;
  for (std::size_t j = 0; j < world.landmarks.size(); ++j) {
    const double d = (world.landmarks[j] - pose.head<2>()).norm();
    if (d <= sensor.radius && d >= sensor.min_range) out.push_back(static_cast<int>(j));
  }
  return out;
}

WorldSimulator::WorldSimulator(WorldModel world, SensorConfig sensor, std::uint64_t seed)
    : world_(std::move(world)), sensor_(sensor), rng_(seed ^ 0x9e3779b97f4a7c15ull), pose_(world_.start) {}

std::vector<Observation> WorldSimulator::observe() {
  std::vector<Observation> out;
  for (int j : visible_landmarks(world_, sensor_, pose_)) {
    Eigen::Vector2d z = pose2::range_bearing(pose_, world_.landmarks[static_cast<std::size_t>(j)]);
    z[0] += sensor_.noise_scale * sensor_.range_std * normal_(rng_);
    z[1] = wrap_angle(z[1] + sensor_.noise_scale * sensor_.bearing_std * normal_(rng_));
    out.push_back({j, z});
  }
  return out;
}

StepMeasurements WorldSimulator::step(const Eigen::Vector3d& control) {
  StepMeasurements s;
  pose_ = pose2::compose(pose_, control);
  s.truth = pose_;
  s.odometry = control;
  for (int d = 0; d < 3; ++d) s.odometry[d] += sensor_.noise_scale * sensor_.odometry_std[d] * normal_(rng_);
  s.observations = observe();
  return s;
}

Eigen::Vector3d control_toward(const Eigen::Vector3d& pose, const Eigen::Vector2d& target,
                               const MotionConfig& motion) {
  const Eigen::Vector2d d = target - pose.head<2>();
  const double turn = std::clamp(wrap_angle(std::atan2(d.y(), d.x()) - pose.z()), -motion.max_turn,
                                 motion.max_turn);
  const double length = std::min(motion.step_length, d.norm());
  return {length, 0.0, turn};
}

}  // namespace covplan::sim
