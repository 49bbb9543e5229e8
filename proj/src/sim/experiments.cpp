#include "covplan/sim/experiments.hpp"

#include <chrono>
#include <cmath>
#include <optional>
#include <ostream>
#include <sstream>

#include "covplan/errors.hpp"
#include "covplan/fgp_tree.hpp"
#include "covplan/recovery.hpp"
#include "covplan/sim/candidates.hpp"
#include "covplan/sim/slam_session.hpp"
#include "covplan/sim/world.hpp"
#include "covplan/slam_update.hpp"

namespace covplan::sim {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

class GoalTracker {
 public:
  GoalTracker(const WorldModel& world, double tolerance) : goals_(world.goals), tolerance_(tolerance) {}

  bool done() const { return index_ >= goals_.size(); }
  int index() const { return static_cast<int>(index_); }
  const Eigen::Vector2d& goal() const { return goals_[index_]; }
  /// Advances past the current goal when `position` is within tolerance.
  bool update(const Eigen::Vector2d& position) {
    if (done() || (position - goals_[index_]).norm() > tolerance_) return false;
    ++index_;
    return true;
  }

 private:
  std::vector<Eigen::Vector2d> goals_;
  double tolerance_;
  std::size_t index_ = 0;
};

StepRecord base_record(const SlamSession& session, const StepBundle& b, int goal) {
  StepRecord r;
  r.step = session.pose_index();
  r.n = session.belief().dim();
  r.m = b.step.rows();
  r.involved_dim = StateLayout::total_dim(b.step.involved);
  r.relinearized_poses = b.relinearized_poses;
  r.relinearized_landmarks = b.relinearized_landmarks;
  r.new_landmarks = static_cast<int>(b.step.new_keys.size()) - 1;
  r.reobserved = static_cast<int>(b.observe_factors.size());
  r.loop_closure = b.loop_closure;
  r.goal = goal;
  return r;
}

MarginalBlocks full_marginals(const BeliefState& belief, bool recursive) {
  return marginal_blocks(belief.layout, recursive ? marginals_recursive(belief.factor(), belief.layout)
                                                  : marginals_backsubstitution(belief.factor(), belief.layout));
}

struct Difference {
  double abs = 0.0;
  double rel = 0.0;
  VariableKey worst;
};

Difference compare(const MarginalBlocks& ref, const MarginalBlocks& other) {
  Difference d;
  for (const auto& key : ref.layout.keys()) {
    const Matrix& a = ref[key];
    const Matrix diff = other[key] - a;
    const double abs = diff.cwiseAbs().maxCoeff();
    if (abs > d.abs) {
      d.abs = abs;
      d.worst = key;
    }
    d.rel = std::max(d.rel, diff.norm() / std::max(a.norm(), 1e-300));
  }
  return d;
}

}  // namespace

std::vector<std::string> enabled_methods(const MethodsConfig& m) {
  std::vector<std::string> out;
  if (m.recursive) out.emplace_back("recursive");
  if (m.backsub) out.emplace_back("backsub");
  if (m.twostage) out.emplace_back("twostage");
  if (m.onestage) out.emplace_back("onestage");
  return out;
}

RunLog run_passive(const ScenarioConfig& config) {
  RunLog log;
  log.mode = "passive";
  log.methods = enabled_methods(config.methods);
  if (log.methods.empty()) throw ConfigError("passive run needs at least one recovery method");

  const WorldModel world = generate_world(config);
  WorldSimulator sim(world, config.sensor, config.seed);
  SlamSession session(config, world.start);
  GoalTracker goals(world, config.motion.goal_tolerance);

  std::vector<std::optional<MarginalBlocks>> chained(log.methods.size());
  for (std::size_t i = 0; i < log.methods.size(); ++i)
    if (log.methods[i] == "twostage" || log.methods[i] == "onestage")
      chained[i] = full_marginals(session.belief(), false);

  SlamUpdateOptions options;
  options.fallback_ratio = config.methods.fallback_ratio;

  for (int k = 0; k < config.motion.steps && !goals.done(); ++k) {
    const Eigen::Vector3d estimate = session.pose_estimate(session.pose_index());
    const StepMeasurements m = sim.step(control_toward(estimate, goals.goal(), config.motion));
    BeliefState previous;
    const StepBundle bundle = session.advance(m, &previous);
    const BeliefState& current = session.belief();

    StepRecord rec = base_record(session, bundle, goals.index());
    TimingRecord timing;
    timing.step = rec.step;
    timing.n = rec.n;
    timing.loop_closure = rec.loop_closure;

    std::vector<MarginalBlocks> results;
    for (std::size_t i = 0; i < log.methods.size(); ++i) {
      const std::string& name = log.methods[i];
      const auto t0 = Clock::now();
      if (name == "recursive" || name == "backsub") {
        results.push_back(full_marginals(current, name == "recursive"));
      } else {
        SlamUpdateReport report;
        const auto strategy = name == "twostage" ? SlamStrategy::TwoStage : SlamStrategy::OneStage;
        results.push_back(
            slam_step_update(*chained[i], previous, bundle.step, strategy, options, &current, &report));
        rec.fallback = rec.fallback || report.fallback;
      }
      timing.seconds.push_back(seconds_since(t0));
      if (chained[i]) chained[i] = results.back();
    }
    timing.fallback = rec.fallback;

    for (std::size_t i = 1; i < results.size(); ++i) {
      const Difference d = compare(results.front(), results[i]);
      rec.max_abs_diff.push_back(d.abs);
      rec.max_rel_diff.push_back(d.rel);
      if (!(d.abs <= config.methods.tolerance)) {
        std::ostringstream msg;
        msg << "step " << rec.step << ": method " << log.methods[i] << " differs from " << log.methods[0]
            << " by " << d.abs << " (relative " << d.rel << ") at " << to_string(d.worst) << "; n=" << rec.n
            << " m=" << rec.m << " |X^I|=" << rec.involved_dim << " fallback=" << rec.fallback
            << " loop_closure=" << rec.loop_closure;
        throw MethodDisagreement(msg.str());
      }
    }
    log.steps.push_back(std::move(rec));
    log.timing.push_back(std::move(timing));
    goals.update(session.pose_estimate(session.pose_index()).head<2>());
  }
  return log;
}

RunLog run_active(const ScenarioConfig& config, std::ostream* tree_dump) {
  RunLog log;
  log.mode = "active";
  log.objective = std::string(to_string(config.planner.objective));

  const WorldModel world = generate_world(config);
  WorldSimulator sim(world, config.sensor, config.seed);
  SlamSession session(config, world.start);
  GoalTracker goals(world, config.motion.goal_tolerance);
  PlanningKeys keys;

  int step = 0;
  for (int p = 0; p < config.planner.planning_steps && step < config.motion.steps && !goals.done(); ++p) {
    const Eigen::Vector2d goal = goals.goal();
    const auto actions = generate_candidates(session, goal, config, keys);
    const auto plans = plan_candidates(actions);
    FocusedQuery query;
    query.mode = config.planner.objective;
    if (query.mode == QueryMode::FocusedOld)
      for (int id : session.mapped_landmarks()) query.focus.push_back(landmark_key(id));

    auto t0 = Clock::now();
    const FlatResult flat = evaluate_candidates_flat(plans, session.belief(), query);
    const double flat_s = seconds_since(t0);
    t0 = Clock::now();
    FgpTree tree = build_trajectory_tree(plans);
    const TreeResult tres = evaluate_tree(tree, plans, session.belief(), query);
    const double tree_s = seconds_since(t0);

    const auto by_flat = assemble_objective(actions, flat.scores, config.planner.weights, goal);
    const auto by_tree = assemble_objective(actions, tres.scores, config.planner.weights, goal);
    if (flat.best_id != tres.best_id || by_flat.best_id != by_tree.best_id || tres.max_score_evaluations > 1) {
      std::ostringstream table;
      table << "candidate,flat_utility,tree_utility,flat_cost,tree_cost\n";
      table.precision(17);
      for (std::size_t i = 0; i < actions.size(); ++i)
        table << actions[i].id << ',' << flat.scores[i].utility() << ',' << tres.scores[i].utility() << ','
              << by_flat.cost[i] << ',' << by_tree.cost[i] << '\n';
      std::ostringstream msg;
      msg << "planning step " << p << ": flat argmax " << flat.best_id << " vs tree argmax " << tres.best_id
          << ", objective argmin " << by_flat.best_id << " vs " << by_tree.best_id
          << ", max edge evaluations " << tres.max_score_evaluations;
      throw DecisionMismatch(msg.str(), table.str());
    }
    if (tree_dump)
      *tree_dump << "planning step " << p << " at pose " << session.pose_index() << '\n' << dump_tree(tree);

    PlanningRecord pr;
    pr.planning_step = p;
    pr.step = session.pose_index();
    pr.n = session.belief().dim();
    pr.candidates = static_cast<int>(actions.size());
    pr.tree_nodes = static_cast<int>(tree.nodes.size());
    pr.flat_best = flat.best_id;
    pr.tree_best = tres.best_id;
    pr.chosen = by_flat.best_id;
    pr.flat_prior_dim = flat.prior_dim;
    pr.tree_root_dim = tres.root_dim;
    pr.flat_seconds = flat_s;
    pr.tree_seconds = tree_s;
    log.planning.push_back(pr);
    for (std::size_t i = 0; i < actions.size(); ++i)
      log.scores.push_back({p, actions[i].id, flat.scores[i].utility(), tres.scores[i].utility(), by_flat.cost[i]});

    const CandidateAction& chosen = actions[by_flat.best_index];
    for (const auto& target : chosen.segment_poses.front()) {
      if (step >= config.motion.steps) break;
      const Eigen::Vector3d estimate = session.pose_estimate(session.pose_index());
      const StepMeasurements m = sim.step(control_toward(estimate, target.head<2>(), config.motion));
      const StepBundle bundle = session.advance(m);
      ++step;
      StepRecord rec = base_record(session, bundle, goals.index());
      rec.planning_step = p;
      rec.action = chosen.id;
      log.steps.push_back(rec);
      if (goals.update(session.pose_estimate(session.pose_index()).head<2>())) break;
    }
  }
  return log;
}

}  // namespace covplan::sim
