#include "covplan/sim/candidates.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "covplan/errors.hpp"
#include "covplan/factors.hpp"

namespace covplan::sim {

namespace {

struct MappedLandmark {
  int id;
  Eigen::Vector2d position;
};

struct SegmentContext {
  const std::vector<MappedLandmark>& landmarks;
  const ScenarioConfig& config;
  Matrix odometry_cov;
  Matrix range_bearing_cov;
  PlanningKeys& keys;
};

struct Segment {
  ActionIncrement increment;
  std::vector<Eigen::Vector3d> poses;
  VariableKey last_key;
  double length = 0.0;
};

// Up to `max_obs` mapped landmarks nearest to `pose` within the radius,
// returned in ascending id order.
std::vector<const MappedLandmark*> predicted_visible(const SegmentContext& ctx,
                                                     const Eigen::Vector3d& pose) {
  std::vector<std::pair<double, const MappedLandmark*>> near;
  for (const auto& l : ctx.landmarks) {
    const double d = (l.position - pose.head<2>()).norm();
    if (d <= ctx.config.sensor.radius && d >= ctx.config.sensor.min_range) near.emplace_back(d, &l);
  }
  std::sort(near.begin(), near.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first < b.first : a.second->id < b.second->id;
  });
  const auto cap = static_cast<std::size_t>(std::max(0, ctx.config.planner.max_observations));
  if (near.size() > cap) near.resize(cap);
  std::vector<const MappedLandmark*> out;
  for (const auto& [d, l] : near) out.push_back(l);
  std::sort(out.begin(), out.end(), [](auto* a, auto* b) { return a->id < b->id; });
  return out;
}

Segment build_segment(SegmentContext& ctx, std::string id, VariableKey start_key,
                      const Eigen::Vector3d& start, const Eigen::Vector2d& target) {
  const Eigen::Vector2d d = target - start.head<2>();
  const double reach = ctx.config.planner.segment_poses * ctx.config.motion.step_length;
  Segment seg;
  seg.length = std::min(reach, d.norm());
  const double heading = d.norm() > 1e-9 ? std::atan2(d.y(), d.x()) : start.z();
  const Eigen::Vector2d dir(std::cos(heading), std::sin(heading));

  std::vector<GaussianFactor> factors;
  std::vector<VariableKey> new_keys;
  std::vector<VariableKey> landmark_keys;
  std::vector<std::pair<VariableKey, Vector>> values{{start_key, start}};
  VariableKey prev_key = start_key;
  Eigen::Vector3d prev = start;
  const int count = ctx.config.planner.segment_poses;
  for (int i = 1; i <= count; ++i) {
    const Eigen::Vector2d xy = start.head<2>() + (seg.length * i / count) * dir;
    const Eigen::Vector3d pose(xy.x(), xy.y(), heading);
    const VariableKey key = ctx.keys.next_pose();
    factors.push_back(GaussianFactor::between(prev_key, key, pose2::between(prev, pose), ctx.odometry_cov));
    for (const auto* l : predicted_visible(ctx, pose)) {
      const VariableKey lk = landmark_key(l->id);
      factors.push_back(GaussianFactor::range_bearing(key, lk, pose2::range_bearing(pose, l->position),
                                                      ctx.range_bearing_cov));
      if (std::find(landmark_keys.begin(), landmark_keys.end(), lk) == landmark_keys.end()) {
        landmark_keys.push_back(lk);
        values.emplace_back(lk, l->position);
      }
    }
    values.emplace_back(key, pose);
    new_keys.push_back(key);
    seg.poses.push_back(pose);
    prev_key = key;
    prev = pose;
  }
  seg.last_key = prev_key;

  std::sort(landmark_keys.begin(), landmark_keys.end());
  std::vector<VariableKey> involved{start_key};
  involved.insert(involved.end(), landmark_keys.begin(), landmark_keys.end());
  StateLayout layout;
  Vector point(static_cast<Index>(values.size()) * 3);
  Index off = 0;
  for (const auto& [key, v] : values) {
    layout.append(key);
    point.segment(off, v.size()) = v;
    off += v.size();
  }
  point.conservativeResize(off);
  const auto batch = linearize_factors(factors, point, layout);
  seg.increment.id = std::move(id);
  seg.increment.change = InferenceChange::augmented(involved, batch.jacobian.columns(involved),
                                                    new_keys, batch.jacobian.columns(new_keys));
  return seg;
}

Eigen::Vector2d ahead(const Eigen::Vector2d& from, double angle, double length) {
  return from + length * Eigen::Vector2d(std::cos(angle), std::sin(angle));
}

double bearing_to(const Eigen::Vector2d& from, const Eigen::Vector2d& to) {
  const Eigen::Vector2d d = to - from;
  return std::atan2(d.y(), d.x());
}

}  // namespace

std::vector<Eigen::Vector2d> cluster_landmarks(const std::vector<Eigen::Vector2d>& points, int k) {
  const auto n = points.size();
  const auto count = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(0, k)));
  std::vector<Eigen::Vector2d> centers;
  if (count == 0) return centers;
  centers.push_back(points.front());
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  while (centers.size() < count) {
    std::size_t far = 0;
    for (std::size_t i = 0; i < n; ++i) {
      nearest[i] = std::min(nearest[i], (points[i] - centers.back()).squaredNorm());
      if (nearest[i] > nearest[far]) far = i;
    }
    centers.push_back(points[far]);
  }
  std::vector<std::size_t> assign(n, count);
  for (int iter = 0; iter < 100; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < count; ++c)
        if ((points[i] - centers[c]).squaredNorm() < (points[i] - centers[best]).squaredNorm()) best = c;
      changed |= best != assign[i];
      assign[i] = best;
    }
    if (!changed) break;
    std::vector<Eigen::Vector2d> sum(count, Eigen::Vector2d::Zero());
    std::vector<int> members(count, 0);
    for (std::size_t i = 0; i < n; ++i) {
      sum[assign[i]] += points[i];
      ++members[assign[i]];
    }
    for (std::size_t c = 0; c < count; ++c)
      if (members[c] > 0) centers[c] = sum[c] / members[c];
  }
  return centers;
}

std::vector<CandidateAction> generate_candidates(const SlamSession& session,
                                                 const Eigen::Vector2d& goal,
                                                 const ScenarioConfig& config,
                                                 PlanningKeys& keys) {
  std::vector<MappedLandmark> mapped;
  std::vector<Eigen::Vector2d> positions;
  for (int id : session.mapped_landmarks()) {
    mapped.push_back({id, session.landmark_estimate(id)});
    positions.push_back(mapped.back().position);
  }
  const auto centers = cluster_landmarks(positions, config.planner.clusters);
  SegmentContext ctx{mapped, config, odometry_covariance(config.sensor),
                     range_bearing_covariance(config.sensor), keys};

  const auto& pc = config.planner;
  const double reach = pc.segment_poses * config.motion.step_length;
  const double step2 = std::numbers::pi / 6;
  const VariableKey x_k = session.current_pose();
  const Eigen::Vector3d p0 = session.pose_estimate(session.pose_index());
  const double psi0 = bearing_to(p0.head<2>(), goal);

  std::vector<CandidateAction> out;
  for (int i = 0; i < pc.first_directions; ++i) {
    const double a1 = psi0 + 2 * std::numbers::pi * i / pc.first_directions;
    const Eigen::Vector2d w1 = ahead(p0.head<2>(), a1, reach);
    const Segment s1 = build_segment(ctx, "a" + std::to_string(i), x_k, p0, w1);
    const Eigen::Vector3d& e1 = s1.poses.back();
    const double psi1 = bearing_to(e1.head<2>(), goal);
    for (int j = 0; j < pc.second_directions; ++j) {
      const double a2 = psi1 + (j - (pc.second_directions - 1) / 2.0) * step2;
      const Eigen::Vector2d w2 = ahead(e1.head<2>(), a2, reach);
      const Segment s2 = build_segment(ctx, s1.increment.id + "." + std::to_string(j), s1.last_key, e1, w2);
      const Eigen::Vector3d& e2 = s2.poses.back();

      std::vector<std::pair<std::string, Eigen::Vector2d>> finals{{"g", goal}};
      for (std::size_t c = 0; c < centers.size(); ++c) finals.emplace_back("c" + std::to_string(c), centers[c]);
      for (const auto& [tag, target] : finals) {
        const Segment s3 = build_segment(ctx, s2.increment.id + "." + tag, s2.last_key, e2, target);
        CandidateAction a;
        a.id = static_cast<int>(out.size());
        a.waypoints = {s1.poses.back().head<2>(), s2.poses.back().head<2>(), s3.poses.back().head<2>()};
        a.segment_poses = {s1.poses, s2.poses, s3.poses};
        a.plan.id = a.id;
        a.plan.segments = {s1.increment, s2.increment, s3.increment};
        a.plan.terminal = {s3.last_key};
        a.terminal_pose = s3.poses.back();
        a.path_length = s1.length + s2.length + s3.length;
        a.toward_cluster = tag != "g";
        out.push_back(std::move(a));
      }
    }
  }
  return out;
}

std::vector<PlanCandidate> plan_candidates(const std::vector<CandidateAction>& actions) {
  std::vector<PlanCandidate> out;
  out.reserve(actions.size());
  for (const auto& a : actions) out.push_back(a.plan);
  return out;
}

RankedObjective assemble_objective(const std::vector<CandidateAction>& actions,
                                   std::span<const InfoScore> scores, const ObjectiveWeights& weights,
                                   const Eigen::Vector2d& goal) {
  if (scores.size() != actions.size())
    throw DimensionError("assemble_objective: scores not aligned with candidates");
  if (actions.empty()) throw std::invalid_argument("assemble_objective: no candidates");
  RankedObjective r;
  std::vector<double> negated;
  std::vector<int> ids;
  for (std::size_t i = 0; i < actions.size(); ++i) {
    const double distance = (actions[i].terminal_pose.head<2>() - goal).norm();
    const double j = weights.alpha_distance * distance + weights.alpha_length * actions[i].path_length -
                     weights.alpha_information * scores[i].utility();
    r.cost.push_back(j);
    negated.push_back(-j);
    ids.push_back(actions[i].id);
  }
  r.best_index = select_best(negated, ids);
  r.best_id = actions[r.best_index].id;
  return r;
}

}  // namespace covplan::sim
