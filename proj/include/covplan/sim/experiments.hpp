#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "covplan/sim/config.hpp"
#include "covplan/sim/runlog.hpp"

namespace covplan::sim {

/// Enabled recovery methods in canonical order; the first is the reference.
std::vector<std::string> enabled_methods(const MethodsConfig& methods);

/// Follows the goal loop and recovers every per-variable marginal by each
/// enabled method at every step. Throws MethodDisagreement when a method
/// departs from the reference by more than the configured tolerance.
RunLog run_passive(const ScenarioConfig& config);

/// Plans over sampled candidates with both the flat evaluator and the action
/// tree, executes the first segment of the chosen candidate and repeats.
/// Throws DecisionMismatch when the two evaluators disagree. When
/// `tree_dump` is given the tree of every planning step is written to it.
RunLog run_active(const ScenarioConfig& config, std::ostream* tree_dump = nullptr);

}  // namespace covplan::sim
