#pragma once

#include <span>
#include <vector>

#include "covplan/belief.hpp"
#include "covplan/oracle/dense.hpp"
#include "covplan/ramdl.hpp"

// Dense brute-force scoring of planning candidates and random planning scenes
// with shared trajectory prefixes.
namespace covplan::oracle {

/// Score of applying `segments` in order to the prior, from dense posterior
/// information matrices and dense inverses.
double dense_score(const Matrix& prior, const StateLayout& layout,
                   std::span<const ActionIncrement> segments, const FocusedQuery& query,
                   std::span<const VariableKey> terminal);

/// Utility-maximizing candidate id with ties (relative 1e-9) to the lowest id.
int dense_argmax(std::span<const double> utilities, std::span<const int> ids);

struct PlanningScene {
  StateLayout layout;
  Matrix prior;
  BeliefState belief;
  std::vector<PlanCandidate> candidates;
  std::vector<VariableKey> focus;  // old focused variables for focused-old queries
};

/// Random prior of dimension about `n` and a trie of up to three levels whose
/// leaves give between `min_candidates` and `max_candidates` candidates. Edges
/// add one pose-like variable (sometimes a landmark too) attached to the
/// parent's tail variable and observe a few random old variables. With
/// `duplicates`, a few candidates are repeated under new ids.
PlanningScene random_planning_scene(Rng& rng, Index n, int min_candidates, int max_candidates,
                                    bool duplicates = true);

}  // namespace covplan::oracle
