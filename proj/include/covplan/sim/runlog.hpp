#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "covplan/sim/config.hpp"

namespace covplan::sim {

/// Deterministic per-step quantities. Wall times live in TimingRecord so the
/// run log stays byte-identical across runs.
struct StepRecord {
  int step = 0;
  Index n = 0;
  Index m = 0;
  Index involved_dim = 0;
  int relinearized_poses = 0;
  int relinearized_landmarks = 0;
  int new_landmarks = 0;
  int reobserved = 0;
  bool loop_closure = false;
  bool fallback = false;
  int goal = 0;
  /// Passive: max abs and relative Frobenius difference of each non-reference
  /// method against the reference method, aligned with RunLog::methods[1..].
  std::vector<double> max_abs_diff;
  std::vector<double> max_rel_diff;
  /// Active: planning step that chose the executed action, or -1.
  int planning_step = -1;
  int action = -1;
};

struct TimingRecord {
  int step = 0;
  Index n = 0;
  bool loop_closure = false;
  bool fallback = false;
  std::vector<double> seconds;  // aligned with RunLog::methods (passive)
};

struct PlanningRecord {
  int planning_step = 0;
  int step = 0;
  Index n = 0;
  int candidates = 0;
  int tree_nodes = 0;
  int flat_best = 0;
  int tree_best = 0;
  int chosen = 0;
  std::size_t flat_prior_dim = 0;
  std::size_t tree_root_dim = 0;
  double flat_seconds = 0.0;
  double tree_seconds = 0.0;
};

struct ScoreRecord {
  int planning_step = 0;
  int candidate = 0;
  double flat = 0.0;
  double tree = 0.0;
  double cost = 0.0;
};

struct RunLog {
  std::string mode;                  // "passive" or "active"
  std::vector<std::string> methods;  // passive recovery methods, reference first
  std::string objective;             // active query mode
  std::vector<StepRecord> steps;
  std::vector<TimingRecord> timing;
  std::vector<PlanningRecord> planning;
  std::vector<ScoreRecord> scores;
};

inline constexpr const char* kRunLogHeader = "# covplan-runlog v1";

void write_runlog_csv(const RunLog& log, std::ostream& out);
void write_timing_csv(const RunLog& log, std::ostream& out);
void write_scores_csv(const RunLog& log, std::ostream& out);
/// Totals and timing aggregates, with the config hash.
std::string summary_json(const RunLog& log, const ScenarioConfig& config);

/// runlog.csv, timing.csv, summary.json and (active) scores.csv under `dir`.
void write_outputs(const RunLog& log, const ScenarioConfig& config, const std::filesystem::path& dir);

double median(std::vector<double> values);

}  // namespace covplan::sim
