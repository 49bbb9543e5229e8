#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "covplan/belief.hpp"
#include "covplan/cov_cache.hpp"
#include "covplan/ramdl.hpp"

namespace covplan {

/// Vertex of the action tree. Every node but the root owns the increment of
/// its incoming edge.
struct FgpNode {
  int id = 0;
  int parent = -1;
  std::vector<int> children;
  ActionIncrement increment;         // incoming edge (unused at the root)
  std::vector<int> candidates;       // candidates whose path ends here
  std::vector<VariableKey> request;  // Y_T, marginal covariances needed at this node
  CovarianceCache cache;             // resolved Σ^{M, Y_T}
  CovarianceCache conditional;       // resolved Σ^{Y_T \ X^F | X^F} (focused-old only)
  InfoScore edge_score;              // IG of the incoming edge
  int score_evaluations = 0;
  int propagations = 0;
};

struct FgpTree {
  std::vector<FgpNode> nodes;  // nodes[0] is the root; parents precede children
  std::map<int, int> leaf_of;  // candidate id -> node id

  const FgpNode& root() const { return nodes.front(); }
  /// Node ids from the root's child down to the candidate's leaf.
  std::vector<int> path(int candidate_id) const;
};

/// Prefix trie over the candidates' segment sequences.
FgpTree build_trajectory_tree(std::span<const PlanCandidate> candidates);

/// Bottom-up pass filling every node's request. Returns the root request,
/// which is the set of prior covariances computed once from the belief.
std::vector<VariableKey> query_required_covariances(FgpTree& tree,
                                                    std::span<const PlanCandidate> candidates,
                                                    const FocusedQuery& query);

struct PropagationStats {
  Index max_workspace = 0;  // largest intermediate matrix dimension below the root
};

/// Top-down pass: root blocks from the belief, every other node by the lemma
/// matching its incoming increment.
PropagationStats propagate_covariances(FgpTree& tree, const BeliefState& belief,
                                       const FocusedQuery& query);

struct TreeResult {
  std::vector<InfoScore> scores;  // aligned with the candidate list
  std::size_t best_index = 0;
  int best_id = 0;
  int edges = 0;
  int max_score_evaluations = 0;  // over edges; 1 when every edge was scored once
  int max_propagations = 0;
  std::size_t root_dim = 0;
  PropagationStats stats;
};

/// Requests, propagation and scoring in one call. Candidate IG is the sum of
/// edge IGs on its path; focused-new entropy is read off the leaf cache.
TreeResult evaluate_tree(FgpTree& tree, std::span<const PlanCandidate> candidates,
                         const BeliefState& belief, const FocusedQuery& query);

struct AdditivityCheck {
  double sum_of_segments = 0.0;
  double direct = 0.0;
};

/// Unfocused IG of a segment sequence as a chain of edges and as one merged
/// change.
AdditivityCheck ig_additivity_check(std::span<const ActionIncrement> path,
                                    const BeliefState& belief);

/// Text outline: one line per node with depth indentation, the increment id,
/// its change kind and edge IG.
std::string dump_tree(const FgpTree& tree);

}  // namespace covplan
