#include "covplan/sim/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "covplan/errors.hpp"

namespace covplan::sim {

namespace {

using nlohmann::json;

json to_json(const ScenarioConfig& c) {
  json goals = json::array();
  for (const auto& g : c.world.goals) goals.push_back({g.x(), g.y()});
  const auto& s = c.sensor;
  return {
      {"seed", c.seed},
      {"world",
       {{"width", c.world.width},
        {"height", c.world.height},
        {"landmarks", c.world.landmarks},
        {"goals", goals},
        {"goal_count", c.world.goal_count},
        {"laps", c.world.laps},
        {"margin", c.world.margin}}},
      {"sensor",
       {{"radius", s.radius},
        {"min_range", s.min_range},
        {"range_std", s.range_std},
        {"bearing_std", s.bearing_std},
        {"odometry_std", {s.odometry_std.x(), s.odometry_std.y(), s.odometry_std.z()}},
        {"noise_scale", s.noise_scale}}},
      {"motion",
       {{"step_length", c.motion.step_length},
        {"max_turn", c.motion.max_turn},
        {"goal_tolerance", c.motion.goal_tolerance},
        {"steps", c.motion.steps}}},
      {"solver",
       {{"max_iters", c.solver.max_iters},
        {"step_tol", c.solver.step_tol},
        {"relin_threshold", c.solver.relin_threshold}}},
      {"methods",
       {{"recursive", c.methods.recursive},
        {"backsub", c.methods.backsub},
        {"twostage", c.methods.twostage},
        {"onestage", c.methods.onestage},
        {"tolerance", c.methods.tolerance},
        {"fallback_ratio", c.methods.fallback_ratio},
        {"loop_gap", c.methods.loop_gap}}},
      {"planner",
       {{"first_directions", c.planner.first_directions},
        {"second_directions", c.planner.second_directions},
        {"clusters", c.planner.clusters},
        {"segment_poses", c.planner.segment_poses},
        {"max_observations", c.planner.max_observations},
        {"planning_steps", c.planner.planning_steps},
        {"objective", std::string(to_string(c.planner.objective))},
        {"dump_tree", c.planner.dump_tree},
        {"weights",
         {{"alpha_distance", c.planner.weights.alpha_distance},
          {"alpha_length", c.planner.weights.alpha_length},
          {"alpha_information", c.planner.weights.alpha_information}}}}},
  };
}

// Overlay `user` onto `base`, rejecting keys that `base` does not have.
void merge(json& base, const json& user, const std::string& where) {
  if (!user.is_object()) throw ConfigError("expected an object at '" + where + "'");
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string path = where.empty() ? it.key() : where + "." + it.key();
    if (!base.contains(it.key())) throw ConfigError("unknown config key '" + path + "'");
    json& slot = base[it.key()];
    if (slot.is_object())
      merge(slot, it.value(), path);
    else
      slot = it.value();
  }
}

ScenarioConfig from_json(const json& j) {
  ScenarioConfig c;
  c.seed = j.at("seed").get<std::uint64_t>();
  const auto& w = j.at("world");
  c.world.width = w.at("width").get<double>();
  c.world.height = w.at("height").get<double>();
  c.world.landmarks = w.at("landmarks").get<int>();
  c.world.goal_count = w.at("goal_count").get<int>();
  c.world.laps = w.at("laps").get<int>();
  c.world.margin = w.at("margin").get<double>();
  for (const auto& g : w.at("goals")) {
    if (!g.is_array() || g.size() != 2) throw ConfigError("goals must be [x, y] pairs");
    c.world.goals.emplace_back(g[0].get<double>(), g[1].get<double>());
  }
  const auto& s = j.at("sensor");
  c.sensor.radius = s.at("radius").get<double>();
  c.sensor.min_range = s.at("min_range").get<double>();
  c.sensor.range_std = s.at("range_std").get<double>();
  c.sensor.bearing_std = s.at("bearing_std").get<double>();
  const auto& o = s.at("odometry_std");
  if (!o.is_array() || o.size() != 3) throw ConfigError("odometry_std must have three entries");
  c.sensor.odometry_std = {o[0].get<double>(), o[1].get<double>(), o[2].get<double>()};
  c.sensor.noise_scale = s.at("noise_scale").get<double>();
  const auto& m = j.at("motion");
  c.motion.step_length = m.at("step_length").get<double>();
  c.motion.max_turn = m.at("max_turn").get<double>();
  c.motion.goal_tolerance = m.at("goal_tolerance").get<double>();
  c.motion.steps = m.at("steps").get<int>();
  const auto& so = j.at("solver");
  c.solver.max_iters = so.at("max_iters").get<int>();
  c.solver.step_tol = so.at("step_tol").get<double>();
  c.solver.relin_threshold = so.at("relin_threshold").get<double>();
  const auto& me = j.at("methods");
  c.methods.recursive = me.at("recursive").get<bool>();
  c.methods.backsub = me.at("backsub").get<bool>();
  c.methods.twostage = me.at("twostage").get<bool>();
  c.methods.onestage = me.at("onestage").get<bool>();
  c.methods.tolerance = me.at("tolerance").get<double>();
  c.methods.fallback_ratio = me.at("fallback_ratio").get<double>();
  c.methods.loop_gap = me.at("loop_gap").get<int>();
  const auto& p = j.at("planner");
  c.planner.first_directions = p.at("first_directions").get<int>();
  c.planner.second_directions = p.at("second_directions").get<int>();
  c.planner.clusters = p.at("clusters").get<int>();
  c.planner.segment_poses = p.at("segment_poses").get<int>();
  c.planner.max_observations = p.at("max_observations").get<int>();
  c.planner.planning_steps = p.at("planning_steps").get<int>();
  c.planner.objective = parse_objective(p.at("objective").get<std::string>());
  c.planner.dump_tree = p.at("dump_tree").get<bool>();
  const auto& wt = p.at("weights");
  c.planner.weights.alpha_distance = wt.at("alpha_distance").get<double>();
  c.planner.weights.alpha_length = wt.at("alpha_length").get<double>();
  c.planner.weights.alpha_information = wt.at("alpha_information").get<double>();
  return c;
}

void validate(const ScenarioConfig& c) {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(what);
  };
  require(c.world.width > 0 && c.world.height > 0, "field dimensions must be positive");
  require(c.world.landmarks >= 0, "landmark count must be non-negative");
  require(!c.world.goals.empty() || c.world.goal_count > 0, "at least one goal is required");
  require(c.world.laps > 0, "laps must be positive");
  require(c.sensor.radius > 0, "sensing radius must be positive");
  require(c.sensor.min_range > 0 && c.sensor.min_range < c.sensor.radius, "min_range must lie in (0, radius)");
  require(c.sensor.range_std > 0 && c.sensor.bearing_std > 0, "sensor noise must be positive");
  require((c.sensor.odometry_std.array() > 0).all(), "odometry noise must be positive");
  require(c.sensor.noise_scale >= 0, "noise_scale must be non-negative");
  require(c.motion.step_length > 0 && c.motion.steps >= 0, "invalid motion settings");
  require(c.solver.max_iters > 0, "solver needs at least one iteration");
  require(c.planner.segment_poses > 0 && c.planner.first_directions > 0 &&
              c.planner.second_directions > 0 && c.planner.clusters >= 0,
          "invalid planner settings");
  require(std::isfinite(c.planner.weights.alpha_distance) &&
              std::isfinite(c.planner.weights.alpha_length) &&
              std::isfinite(c.planner.weights.alpha_information),
          "objective weights must be finite");
}

}  // namespace

QueryMode parse_objective(const std::string& name) {
  for (auto m : {QueryMode::Unfocused, QueryMode::FocusedOld, QueryMode::FocusedNew})
    if (name == to_string(m)) return m;
  throw ConfigError("unknown objective '" + name + "'");
}

ScenarioConfig parse_config(const std::string& json_text) {
  json user;
  try {
    user = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  json base = to_json(ScenarioConfig{});
  merge(base, user, "");
  ScenarioConfig c;
  try {
    c = from_json(base);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config has a value of the wrong type: ") + e.what());
  }
  validate(c);
  return c;
}

ScenarioConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string dump_config(const ScenarioConfig& config) { return to_json(config).dump(2); }

std::string config_hash(const ScenarioConfig& config) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : to_json(config).dump()) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace covplan::sim
