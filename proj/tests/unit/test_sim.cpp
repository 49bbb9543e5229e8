#include <catch_amalgamated.hpp>

#include <cmath>
#include <set>
#include <sstream>

#include "covplan/errors.hpp"
#include "covplan/factors.hpp"
#include "covplan/oracle/dense.hpp"
#include "covplan/recovery.hpp"
#include "covplan/sim/candidates.hpp"
#include "covplan/sim/experiments.hpp"
#include "covplan/sim/runlog.hpp"
#include "covplan/sim/slam_session.hpp"
#include "covplan/sim/world.hpp"

using namespace covplan;
using namespace covplan::sim;

namespace {

ScenarioConfig small_config() {
  return parse_config(R"({
    "seed": 11,
    "world": {"width": 200, "height": 200, "landmarks": 40, "goal_count": 4, "margin": 30},
    "motion": {"steps": 30},
    "planner": {"planning_steps": 2}
  })");
}

WorldModel hand_world(std::vector<Eigen::Vector2d> landmarks) {
  WorldModel w;
  w.width = w.height = 100;
  w.landmarks = std::move(landmarks);
  w.goals = {{90, 0}};
  w.start = {0, 0, 0};
  return w;
}

std::string runlog_text(const RunLog& log) {
  std::ostringstream s;
  write_runlog_csv(log, s);
  if (log.mode == "active") write_scores_csv(log, s);
  return s.str();
}

MarginalBlocks backsub_blocks(const BeliefState& b) {
  return marginal_blocks(b.layout, marginals_backsubstitution(b.factor(), b.layout));
}

}  // namespace

TEST_CASE("config parsing", "[sim]") {
  const auto c = parse_config("{}");
  CHECK(c.world.landmarks == 300);
  CHECK(c.world.goal_count == 8);
  CHECK(c.sensor.radius == 75.0);
  CHECK(c.planner.segment_poses == 5);
  CHECK(parse_config(dump_config(c)).seed == c.seed);
  CHECK(config_hash(parse_config(dump_config(c))) == config_hash(c));
  CHECK(config_hash(c).size() == 16);
  CHECK(config_hash(parse_config(R"({"seed": 2})")) != config_hash(c));
  CHECK_THROWS_AS(parse_config(R"({"world": {"colour": 1}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"sensor": {"radius": -1}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"seed": "x"})"), ConfigError);
  CHECK_THROWS_AS(parse_config("{"), ConfigError);
  CHECK_THROWS_AS(parse_objective("greedy"), ConfigError);
  CHECK(parse_objective("focused-lastpose") == QueryMode::FocusedNew);
  CHECK(parse_objective("focused-landmarks") == QueryMode::FocusedOld);
}

TEST_CASE("world generation", "[sim]") {
  const auto c = parse_config("{}");
  const auto a = generate_world(c);
  const auto b = generate_world(c);
  REQUIRE(a.landmarks.size() == 300);
  CHECK(a.landmarks == b.landmarks);
  REQUIRE(a.goals.size() == 8);
  CHECK((a.goals.back() - a.start.head<2>()).norm() < 1e-12);
  for (const auto& l : a.landmarks) CHECK((l.array() >= 0).all());
  const auto two = generate_world(parse_config(R"({"world": {"laps": 2}})"));
  CHECK(two.goals.size() == 16);
}

TEST_CASE("world stepping", "[sim]") {
  SensorConfig exact;
  exact.noise_scale = 0.0;
  SECTION("zero noise observations match geometry") {
    WorldSimulator sim(hand_world({{20, 5}, {30, -10}}), exact, 1);
    const auto m = sim.step({10, 0, 0.2});
    CHECK(m.odometry == Eigen::Vector3d(10, 0, 0.2));
    CHECK(m.truth.isApprox(Eigen::Vector3d(10, 0, 0.2)));
    REQUIRE(m.observations.size() == 2);
    for (const auto& o : m.observations) {
      const Eigen::Vector2d l = sim.world().landmarks[static_cast<std::size_t>(o.landmark)];
      CHECK((o.z - pose2::range_bearing(m.truth, l)).norm() == 0.0);
    }
  }
  SECTION("landmarks outside the radius are not observed") {
    exact.radius = 15;
    WorldSimulator sim(hand_world({{20, 0}, {80, 0}}), exact, 1);
    const auto m = sim.step({10, 0, 0});
    REQUIRE(m.observations.size() == 1);
    CHECK(m.observations[0].landmark == 0);
  }
  SECTION("noise is reproducible from the seed") {
    SensorConfig noisy;
    WorldSimulator a(hand_world({{20, 5}}), noisy, 4);
    WorldSimulator b(hand_world({{20, 5}}), noisy, 4);
    for (int k = 0; k < 10; ++k) {
      const auto ma = a.step({5, 0, 0.1});
      const auto mb = b.step({5, 0, 0.1});
      CHECK(ma.odometry == mb.odometry);
      REQUIRE(ma.observations.size() == mb.observations.size());
      for (std::size_t i = 0; i < ma.observations.size(); ++i) CHECK(ma.observations[i].z == mb.observations[i].z);
    }
  }
  SECTION("controls respect the motion limits") {
    MotionConfig motion;
    const auto u = control_toward({0, 0, 0}, {0, 100}, motion);
    CHECK(u.x() == motion.step_length);
    CHECK(u.z() == motion.max_turn);
    CHECK(control_toward({0, 0, 0}, {3, 0}, motion).x() == Catch::Approx(3.0));
  }
}

TEST_CASE("step bundles", "[sim]") {
  ScenarioConfig c = small_config();
  SECTION("first step without landmarks is the squared part only") {
    SlamSession session(c, {0, 0, 0});
    StepMeasurements m{{8, 0, 0}, {8, 0, 0}, {}};
    const auto b = session.advance(m);
    CHECK(b.step.new_keys == std::vector{pose_key(1)});
    CHECK(b.squared_factors.size() == 1);
    CHECK(b.observe_factors.empty());
    CHECK(b.relinearized_factors.empty());
    CHECK(b.step.involved.empty());
    CHECK(b.step.a_s_new.rows() == 3);
    CHECK(b.step.rows() == 3);
  }
  SECTION("re-observation step adds only the pose in the squared part") {
    c.sensor.noise_scale = 0.0;
    SlamSession session(c, {0, 0, 0});
    WorldSimulator sim(hand_world({{20, 5}}), c.sensor, 1);
    const auto b1 = session.advance(sim.step({8, 0, 0}));
    CHECK(b1.step.new_keys == std::vector{pose_key(1), landmark_key(0)});
    CHECK(b1.squared_factors.size() == 2);
    const auto b2 = session.advance(sim.step({8, 0, 0}));
    CHECK(b2.step.new_keys == std::vector{pose_key(2)});
    CHECK(b2.observe_factors.size() == 1);
    CHECK(b2.step.a_observe.rows() == 2);
    CHECK(std::find(b2.step.involved.begin(), b2.step.involved.end(), pose_key(2)) != b2.step.involved.end());
    CHECK(std::find(b2.step.involved.begin(), b2.step.involved.end(), landmark_key(0)) != b2.step.involved.end());
  }
  SECTION("zero-noise MAP equals ground truth") {
    c.sensor.noise_scale = 0.0;
    const auto world = generate_world(c);
    WorldSimulator sim2(world, c.sensor, c.seed);
    SlamSession s2(c, world.start);
    double worst = 0.0;
    for (int k = 0; k < 30; ++k) {
      const auto est = s2.pose_estimate(s2.pose_index());
      const auto m = sim2.step(control_toward(est, world.goals.front(), c.motion));
      s2.advance(m);
      worst = std::max(worst, (s2.pose_estimate(s2.pose_index()) - m.truth).cwiseAbs().maxCoeff());
    }
    for (int id : s2.mapped_landmarks())
      worst = std::max(worst, (s2.landmark_estimate(id) - world.landmarks[static_cast<std::size_t>(id)]).cwiseAbs().maxCoeff());
    CHECK(!s2.mapped_landmarks().empty());
    CHECK(worst < 1e-8);
  }
}

TEST_CASE("loop closure step: F_R follows the optimizer report", "[sim]") {
  // Landmarks only near the start; the robot leaves them behind on a loop
  // and re-observes them on return.
  ScenarioConfig c = parse_config(R"({
    "seed": 5,
    "world": {"width": 300, "height": 300, "landmarks": 0, "margin": 40,
              "goals": [[260, 40], [260, 260], [40, 260], [40, 40]]},
    "sensor": {"radius": 40, "odometry_std": [0.3, 0.3, 0.02]},
    "solver": {"relin_threshold": 0.05}
  })");
  WorldModel world = generate_world(c);
  for (int i = 0; i < 6; ++i) world.landmarks.emplace_back(30 + 8 * i, 55 - 6 * i);
  for (int i = 0; i < 6; ++i) world.landmarks.emplace_back(260 - 5 * i, 150 + 9 * i);
  WorldSimulator sim(world, c.sensor, c.seed);
  SlamSession session(c, world.start);
  std::size_t goal = 0;
  int closures_checked = 0;
  double worst = 0.0;
  for (int k = 0; k < 200 && goal < world.goals.size(); ++k) {
    const auto est = session.pose_estimate(session.pose_index());
    BeliefState prev;
    const auto m = sim.step(control_toward(est, world.goals[goal], c.motion));
    const auto b = session.advance(m, &prev);
    const auto& report = session.last_report();

    // Old factors touching a relinearized variable, recomputed from the graph.
    std::vector<std::size_t> expected;
    const std::set<VariableKey> moved(report.relinearized.begin(), report.relinearized.end());
    for (std::size_t j = 0; j < prev.factor_count; ++j)
      for (const auto& key : session.graph().factors()[j].keys())
        if (moved.count(key)) {
          expected.push_back(j);
          break;
        }
    CHECK(b.relinearized_factors == expected);
    CHECK(b.step.a_minus.rows() == b.step.a_plus.rows());

    // A_- rows at the previous linearization point by finite differences.
    Index row = 0;
    for (std::size_t j : b.relinearized_factors) {
      const auto& f = session.graph().factors()[j];
      const auto values = gather_values(f.keys(), prev.linearization_point, prev.layout);
      const Matrix num = oracle::numeric_whitened_jacobian(f, values);
      Index col = 0;
      for (const auto& key : f.keys()) {
        const auto it = std::find(b.step.involved.begin(), b.step.involved.end(), key);
        REQUIRE(it != b.step.involved.end());
        const Index off = StateLayout(b.step.involved).offset(key);
        worst = std::max(worst, (b.step.a_minus.block(row, off, f.dim(), key.dim()) -
                                 num.block(0, col, f.dim(), key.dim())).cwiseAbs().maxCoeff());
        col += key.dim();
      }
      row += f.dim();
    }

    if (b.loop_closure && !b.relinearized_factors.empty()) {
      ++closures_checked;
      const auto prev_blocks = backsub_blocks(prev);
      SlamUpdateOptions opt;
      opt.allow_fallback = false;
      const auto got = slam_step_update(prev_blocks, prev, b.step, SlamStrategy::TwoStage, opt);
      const auto ref = backsub_blocks(session.belief());
      for (const auto& key : ref.layout.keys()) CHECK(oracle::rel_error(got[key], ref[key]) < 1e-8);
    }
    if ((session.pose_estimate(session.pose_index()).head<2>() - world.goals[goal]).norm() < c.motion.goal_tolerance)
      ++goal;
  }
  CHECK(worst < 1e-5);
  CHECK(closures_checked > 0);
}

TEST_CASE("candidate generation", "[sim]") {
  ScenarioConfig c = parse_config("{}");
  SECTION("no mapped landmarks gives goal-directed candidates only") {
    SlamSession session(c, {50, 50, 0});
    PlanningKeys keys;
    const auto cands = generate_candidates(session, {450, 50}, c, keys);
    CHECK(cands.size() == 24);
    for (const auto& a : cands) {
      CHECK(!a.toward_cluster);
      CHECK(a.plan.segments.size() == 3);
      CHECK(a.plan.segments.front().change.rows() == 15);
      CHECK(a.plan.segments.front().change.kind == ChangeKind::Squared);
    }
  }
  const auto world = generate_world(c);
  WorldSimulator sim(world, c.sensor, c.seed);
  SlamSession session(c, world.start);
  for (int k = 0; k < 10; ++k)
    session.advance(sim.step(control_toward(session.pose_estimate(session.pose_index()), world.goals[0], c.motion)));
  PlanningKeys keys;
  const auto cands = generate_candidates(session, world.goals[0], c, keys);
  SECTION("default configuration gives about 200 candidates") {
    CHECK(cands.size() >= 150);
    CHECK(cands.size() <= 250);
    CHECK(std::any_of(cands.begin(), cands.end(), [](const auto& a) { return a.toward_cluster; }));
  }
  SECTION("common first waypoints give identical first increments") {
    int shared = 0;
    for (std::size_t i = 1; i < cands.size(); ++i) {
      const bool same_wp = (cands[i].waypoints[0] - cands[0].waypoints[0]).norm() == 0.0;
      CHECK(same_wp == cands[i].plan.segments[0].same_as(cands[0].plan.segments[0]));
      shared += same_wp;
    }
    CHECK(shared == static_cast<int>(cands.size()) / c.planner.first_directions - 1);
  }
  SECTION("predicted observations stay within the sensing radius") {
    for (const auto& a : cands) {
      for (std::size_t s = 0; s < a.plan.segments.size(); ++s) {
        const auto& ch = a.plan.segments[s].change;
        CHECK(ch.rows() <= 15 + 2 * 5 * c.planner.max_observations);
        for (const auto& key : ch.involved) {
          if (key.kind != VarKind::Landmark) continue;
          const Eigen::Vector2d l = session.landmark_estimate(static_cast<int>(key.index));
          double nearest = 1e300;
          for (const auto& p : a.segment_poses[s]) nearest = std::min(nearest, (p.head<2>() - l).norm());
          CHECK(nearest <= c.sensor.radius);
        }
      }
      CHECK((a.terminal_pose - a.segment_poses.back().back()).norm() == 0.0);
      CHECK(a.path_length <= 3 * c.planner.segment_poses * c.motion.step_length + 1e-9);
    }
  }
}

TEST_CASE("landmark clustering", "[sim]") {
  const std::vector<Eigen::Vector2d> pts{{0, 0}, {1, 0}, {0, 1}, {100, 100}, {101, 100}, {0, 200}};
  const auto c3 = cluster_landmarks(pts, 3);
  REQUIRE(c3.size() == 3);
  CHECK(cluster_landmarks(pts, 3) == c3);
  CHECK(cluster_landmarks(pts, 10).size() == pts.size());
  CHECK(cluster_landmarks({}, 4).empty());
  const bool has_left = std::any_of(c3.begin(), c3.end(), [](const auto& p) { return (p - Eigen::Vector2d(1.0 / 3, 1.0 / 3)).norm() < 1e-12; });
  CHECK(has_left);
}

TEST_CASE("objective assembly", "[sim]") {
  std::vector<CandidateAction> acts(3);
  acts[0].id = 0;
  acts[0].terminal_pose = {3, 4, 0};
  acts[0].path_length = 10;
  acts[1].id = 5;
  acts[1].terminal_pose = {6, 8, 0};
  acts[1].path_length = 4;
  acts[2].id = 2;
  acts[2].terminal_pose = {0, 1, 0};
  acts[2].path_length = 12;
  const std::vector<InfoScore> ig{{1.0, ScoreKind::UnfocusedIG}, {3.0, ScoreKind::UnfocusedIG}, {0.5, ScoreKind::UnfocusedIG}};
  const Eigen::Vector2d goal(0, 0);

  SECTION("pure information decision") {
    const auto r = assemble_objective(acts, ig, {0.0, 0.0, 1.0}, goal);
    CHECK(r.best_id == 5);
  }
  SECTION("pure distance decision") {
    const auto r = assemble_objective(acts, ig, {1.0, 0.0, 0.0}, goal);
    CHECK(r.best_id == 2);
  }
  SECTION("hand-computed ranking with a tie") {
    // J = d + 0.5 length - 2 IG: 5 + 5 - 2 = 8, 10 + 2 - 6 = 6, 1 + 6 - 1 = 6.
    const auto r = assemble_objective(acts, ig, {1.0, 0.5, 2.0}, goal);
    CHECK(r.cost == std::vector<double>{8.0, 6.0, 6.0});
    CHECK(r.best_id == 2);
    acts[2].id = 9;
    CHECK(assemble_objective(acts, ig, {1.0, 0.5, 2.0}, goal).best_id == 5);
  }
  SECTION("entropy is minimized") {
    const std::vector<InfoScore> h{{1.0, ScoreKind::FocusedEntropy}, {3.0, ScoreKind::FocusedEntropy}, {0.5, ScoreKind::FocusedEntropy}};
    CHECK(assemble_objective(acts, h, {0.0, 0.0, 1.0}, goal).best_id == 2);
  }
  SECTION("misaligned scores are rejected") {
    CHECK_THROWS_AS(assemble_objective(acts, std::span(ig).first(2), {}, goal), DimensionError);
  }
}

TEST_CASE("runs are deterministic", "[sim]") {
  ScenarioConfig c = small_config();
  c.motion.steps = 10;
  c.methods.onestage = true;
  const auto a = run_passive(c);
  const auto b = run_passive(c);
  REQUIRE(a.steps.size() == 10);
  CHECK(runlog_text(a) == runlog_text(b));
  CHECK(summary_json(a, c).find(config_hash(c)) != std::string::npos);

  c.planner.planning_steps = 2;
  const auto x = run_active(c);
  const auto y = run_active(c);
  CHECK(!x.planning.empty());
  CHECK(runlog_text(x) == runlog_text(y));
}

TEST_CASE("passive run logs one row per step", "[sim]") {
  ScenarioConfig c = small_config();
  c.motion.steps = 20;
  c.methods = {};
  c.methods.recursive = true;
  c.methods.backsub = c.methods.twostage = false;
  const auto log = run_passive(c);
  CHECK(log.steps.size() == 20);
  CHECK(log.methods == std::vector<std::string>{"recursive"});
  std::ostringstream s;
  write_runlog_csv(log, s);
  CHECK(s.str().find("absdiff") == std::string::npos);
  c.methods.recursive = false;
  CHECK_THROWS_AS(run_passive(c), ConfigError);
}

TEST_CASE("median", "[sim]") {
  CHECK(median({}) == 0.0);
  CHECK(median({3.0, 1.0, 2.0}) == 2.0);
  CHECK(median({4.0, 1.0, 2.0, 3.0}) == 2.5);
}
