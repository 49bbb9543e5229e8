#include "covplan/sim/slam_session.hpp"

#include <algorithm>

#include "covplan/errors.hpp"
#include "covplan/factors.hpp"

namespace covplan::sim {

namespace {

// Stacked noise-weighted Jacobians of `indices` at `point`, over `keys`.
Matrix stacked_columns(const FactorGraph& graph, std::span<const std::size_t> indices,
                       const Vector& point, const StateLayout& layout,
                       std::span<const VariableKey> keys) {
  std::vector<GaussianFactor> fs;
  fs.reserve(indices.size());
  for (std::size_t j : indices) fs.push_back(graph.factors()[j]);
  if (fs.empty()) return Matrix(0, StateLayout::total_dim(keys));
  return linearize_factors(fs, point, layout).jacobian.columns(keys);
}

}  // namespace

SlamStep build_step_change(const FactorGraph& graph, const BeliefState& previous,
                           const BeliefState& current, VariableKey previous_pose,
                           std::span<const VariableKey> new_keys,
                           std::span<const std::size_t> squared_factors,
                           std::span<const std::size_t> observe_factors,
                           std::span<const std::size_t> relinearized_factors) {
  SlamStep s;
  s.previous_pose = previous_pose;
  s.new_keys.assign(new_keys.begin(), new_keys.end());
  const Vector& theta = current.linearization_point;
  const StateLayout& layout = current.layout;

  const VariableKey prev[] = {previous_pose};
  s.a_s_previous = stacked_columns(graph, squared_factors, theta, layout, prev);
  s.a_s_new = stacked_columns(graph, squared_factors, theta, layout, new_keys);

  std::vector<GaussianFactor> stage2;
  for (std::size_t j : observe_factors) stage2.push_back(graph.factors()[j]);
  for (std::size_t j : relinearized_factors) stage2.push_back(graph.factors()[j]);
  s.involved = involved_keys(stage2);
  s.a_observe = stacked_columns(graph, observe_factors, theta, layout, s.involved);
  s.a_plus = stacked_columns(graph, relinearized_factors, theta, layout, s.involved);
  // Old factors only touch old variables, so the previous point covers them.
  std::vector<VariableKey> old_involved;
  for (const auto& k : s.involved)
    if (previous.layout.contains(k)) old_involved.push_back(k);
  const Matrix minus_old = stacked_columns(graph, relinearized_factors, previous.linearization_point,
                                           previous.layout, old_involved);
  s.a_minus = Matrix::Zero(minus_old.rows(), StateLayout::total_dim(s.involved));
  {
    const StateLayout inv(s.involved);
    Index col = 0;
    for (const auto& k : old_involved) {
      s.a_minus.middleCols(inv.offset(k), k.dim()) = minus_old.middleCols(col, k.dim());
      col += k.dim();
    }
  }
  return s;
}

Matrix start_prior_covariance() {
  Matrix c = Matrix::Zero(3, 3);
  c(0, 0) = c(1, 1) = 0.01;
  c(2, 2) = 1e-4;
  return c;
}

SlamSession::SlamSession(const ScenarioConfig& config, const Eigen::Vector3d& start)
    : config_(config),
      odometry_cov_(odometry_covariance(config.sensor)),
      range_bearing_cov_(range_bearing_covariance(config.sensor)) {
  StateLayout layout;
  layout.append(pose_key(0));
  graph_ = FactorGraph(layout);
  graph_.add_factor(GaussianFactor::prior(pose_key(0), start, start_prior_covariance()));
  belief_ = solve_map(graph_, start, config_.solver).belief;
}

Eigen::Vector3d SlamSession::pose_estimate(int index) const {
  return belief_.mean.segment<3>(belief_.layout.offset(pose_key(index)));
}

Eigen::Vector2d SlamSession::landmark_estimate(int id) const {
  return belief_.mean.segment<2>(belief_.layout.offset(landmark_key(id)));
}

std::vector<int> SlamSession::mapped_landmarks() const {
  std::vector<int> out;
  for (const auto& [id, step] : last_seen_) out.push_back(id);
  return out;
}

StepBundle SlamSession::advance(const StepMeasurements& m, BeliefState* previous) {
  BeliefState prev = belief_;
  StepBundle out;
  const int k = ++pose_index_;
  const VariableKey x_prev = pose_key(k - 1);
  const VariableKey x_k = pose_key(k);

  const Eigen::Vector3d predicted = pose2::compose(pose_estimate(k - 1), m.odometry);
  graph_.add_variable(x_k);
  std::vector<Vector> init_parts{prev.mean, predicted};
  std::vector<VariableKey> new_keys{x_k};

  const std::size_t first = graph_.size();
  graph_.add_factor(GaussianFactor::between(x_prev, x_k, m.odometry, odometry_cov_));
  out.squared_factors.push_back(first);
  std::vector<std::pair<int, Eigen::Vector2d>> reobserved;
  for (const auto& obs : m.observations) {
    if (knows(obs.landmark)) {
      reobserved.emplace_back(obs.landmark, obs.z);
      if (k - last_seen_[obs.landmark] > config_.methods.loop_gap) out.loop_closure = true;
    } else {
      const VariableKey l = landmark_key(obs.landmark);
      graph_.add_variable(l);
      new_keys.push_back(l);
      init_parts.push_back(pose2::landmark_from(predicted, obs.z));
      out.squared_factors.push_back(graph_.size());
      graph_.add_factor(GaussianFactor::range_bearing(x_k, l, obs.z, range_bearing_cov_));
    }
    last_seen_[obs.landmark] = k;
  }
  for (const auto& [id, z] : reobserved) {
    out.observe_factors.push_back(graph_.size());
    graph_.add_factor(GaussianFactor::range_bearing(x_k, landmark_key(id), z, range_bearing_cov_));
  }

  Vector initial(graph_.layout().dim());
  Index off = 0;
  for (const auto& part : init_parts) {
    initial.segment(off, part.size()) = part;
    off += part.size();
  }
  auto sol = solve_map(graph_, initial, config_.solver, &prev);
  belief_ = std::move(sol.belief);
  last_report_ = sol.report;
  out.relinearized_factors = sol.report.relinearized_factors;
  for (const auto& key : sol.report.relinearized) {
    if (key.kind == VarKind::Pose) ++out.relinearized_poses;
    if (key.kind == VarKind::Landmark) ++out.relinearized_landmarks;
  }
  out.step = build_step_change(graph_, prev, belief_, x_prev, new_keys, out.squared_factors,
                               out.observe_factors, out.relinearized_factors);
  if (previous) *previous = std::move(prev);
  return out;
}

}  // namespace covplan::sim
