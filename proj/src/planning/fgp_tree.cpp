#include "covplan/fgp_tree.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>

#include "covplan/errors.hpp"
#include "covplan/layout.hpp"
#include "covplan/lemmas.hpp"

namespace covplan {

std::vector<int> FgpTree::path(int candidate_id) const {
  const auto it = leaf_of.find(candidate_id);
  if (it == leaf_of.end()) throw DimensionError("unknown candidate id " + std::to_string(candidate_id));
  std::vector<int> out;
  for (int v = it->second; v > 0; v = nodes[static_cast<std::size_t>(v)].parent) out.push_back(v);
  std::reverse(out.begin(), out.end());
  return out;
}

FgpTree build_trajectory_tree(std::span<const PlanCandidate> candidates) {
  if (candidates.empty()) throw DimensionError("cannot build an action tree without candidates");
  FgpTree tree;
  tree.nodes.emplace_back();
  for (const auto& cand : candidates) {
    int cur = 0;
    for (const auto& seg : cand.segments) {
      int next = -1;
      for (int c : tree.nodes[static_cast<std::size_t>(cur)].children)
        if (tree.nodes[static_cast<std::size_t>(c)].increment.same_as(seg)) {
          next = c;
          break;
        }
      if (next < 0) {
        FgpNode node;
        node.id = static_cast<int>(tree.nodes.size());
        node.parent = cur;
        node.increment = seg;
        next = node.id;
        tree.nodes[static_cast<std::size_t>(cur)].children.push_back(next);
        tree.nodes.push_back(std::move(node));
      }
      cur = next;
    }
    if (!tree.leaf_of.emplace(cand.id, cur).second)
      throw DimensionError("duplicate candidate id " + std::to_string(cand.id));
    tree.nodes[static_cast<std::size_t>(cur)].candidates.push_back(cand.id);
  }
  return tree;
}

namespace {

const PlanCandidate& find_candidate(std::span<const PlanCandidate> candidates, int id) {
  for (const auto& c : candidates)
    if (c.id == id) return c;
  throw DimensionError("unknown candidate id " + std::to_string(id));
}

}  // namespace

std::vector<VariableKey> query_required_covariances(FgpTree& tree,
                                                    std::span<const PlanCandidate> candidates,
                                                    const FocusedQuery& query) {
  for (std::size_t i = tree.nodes.size(); i-- > 0;) {
    FgpNode& v = tree.nodes[i];
    std::vector<VariableKey> req;
    if (query.mode == QueryMode::FocusedNew)
      for (int id : v.candidates) req = key_union(req, find_candidate(candidates, id).terminal);
    for (int c : v.children) {
      const FgpNode& child = tree.nodes[static_cast<std::size_t>(c)];
      const auto& change = child.increment.change;
      req = key_union(req, change.involved);
      req = key_union(req, key_difference(child.request, change.new_keys));
    }
    v.request = std::move(req);
  }
  return tree.nodes.front().request;
}

PropagationStats propagate_covariances(FgpTree& tree, const BeliefState& belief,
                                       const FocusedQuery& query) {
  PropagationStats stats;
  const bool focused_old = query.mode == QueryMode::FocusedOld;
  FgpNode& root = tree.nodes.front();
  root.cache = cache_from_belief(belief, root.request);
  if (focused_old)
    root.conditional =
        conditional_cache_from_belief(belief, key_difference(root.request, query.focus), query.focus);

  for (std::size_t i = 1; i < tree.nodes.size(); ++i) {
    FgpNode& v = tree.nodes[i];
    const FgpNode& p = tree.nodes[static_cast<std::size_t>(v.parent)];
    const auto& change = v.increment.change;
    UpdateWorkspace ws;
    if (!v.request.empty()) {
      v.cache = update(p.cache, change, v.request, RectangularMethod::Method2, &ws);
      stats.max_workspace = std::max(stats.max_workspace, ws.max_dimension());
    } else {
      v.cache = CovarianceCache();
    }
    if (focused_old) {
      const auto cond_request = key_difference(v.request, query.focus);
      v.conditional = cond_request.empty()
                          ? CovarianceCache(StateLayout(), Matrix(), CacheMode::Conditional, query.focus)
                          : update_conditional(p.conditional, change, cond_request,
                                               RectangularMethod::Method2, &ws);
      stats.max_workspace = std::max(stats.max_workspace, ws.max_dimension());
    }
    ++v.propagations;
  }
  return stats;
}

TreeResult evaluate_tree(FgpTree& tree, std::span<const PlanCandidate> candidates,
                         const BeliefState& belief, const FocusedQuery& query) {
  for (auto& v : tree.nodes) {
    v.score_evaluations = 0;
    v.propagations = 0;
  }
  TreeResult out;
  out.root_dim = static_cast<std::size_t>(
      StateLayout::total_dim(query_required_covariances(tree, candidates, query)));
  out.stats = propagate_covariances(tree, belief, query);
  out.edges = static_cast<int>(tree.nodes.size()) - 1;

  if (query.mode != QueryMode::FocusedNew) {
    for (std::size_t i = 1; i < tree.nodes.size(); ++i) {
      FgpNode& v = tree.nodes[i];
      const FgpNode& p = tree.nodes[static_cast<std::size_t>(v.parent)];
      v.edge_score = score_change(v.increment.change, p.cache, &p.conditional, query);
      ++v.score_evaluations;
    }
  }

  std::vector<double> utilities;
  std::vector<int> ids;
  for (const auto& cand : candidates) {
    InfoScore s;
    if (query.mode == QueryMode::FocusedNew) {
      const FgpNode& leaf = tree.nodes[static_cast<std::size_t>(tree.leaf_of.at(cand.id))];
      if (leaf.id == 0) throw DimensionError("focused entropy needs at least one segment");
      s = {half_log_det(leaf.cache.block(cand.terminal), "posterior marginal of X^F"),
           ScoreKind::FocusedEntropy};
    } else {
      s.kind = query.mode == QueryMode::FocusedOld ? ScoreKind::FocusedIG : ScoreKind::UnfocusedIG;
      for (int v : tree.path(cand.id)) s.value += tree.nodes[static_cast<std::size_t>(v)].edge_score.value;
    }
    out.scores.push_back(s);
    utilities.push_back(s.utility());
    ids.push_back(cand.id);
  }
  for (std::size_t i = 1; i < tree.nodes.size(); ++i) {
    out.max_score_evaluations = std::max(out.max_score_evaluations, tree.nodes[i].score_evaluations);
    out.max_propagations = std::max(out.max_propagations, tree.nodes[i].propagations);
  }
  out.best_index = select_best(utilities, ids);
  out.best_id = candidates[out.best_index].id;
  return out;
}

AdditivityCheck ig_additivity_check(std::span<const ActionIncrement> path,
                                    const BeliefState& belief) {
  PlanCandidate cand;
  cand.segments.assign(path.begin(), path.end());
  const std::span<const PlanCandidate> one(&cand, 1);
  FgpTree tree = build_trajectory_tree(one);
  const FocusedQuery query;
  AdditivityCheck out;
  out.sum_of_segments = evaluate_tree(tree, one, belief, query).scores.front().value;
  out.direct = evaluate_candidates_flat(one, belief, query).scores.front().value;
  return out;
}

namespace {

void dump_node(const FgpTree& tree, int id, int depth, std::ostringstream& os) {
  const FgpNode& v = tree.nodes[static_cast<std::size_t>(id)];
  os << std::string(static_cast<std::size_t>(2 * depth), ' ') << "node " << v.id;
  if (id == 0) {
    os << " root";
  } else {
    os << " edge " << v.increment.id << " " << to_string(v.increment.change.kind) << " m="
       << v.increment.change.rows() << " ig=" << std::setprecision(10) << v.edge_score.value;
  }
  if (!v.candidates.empty()) {
    os << " candidates";
    for (int c : v.candidates) os << ' ' << c;
  }
  os << '\n';
  for (int c : v.children) dump_node(tree, c, depth + 1, os);
}

}  // namespace

std::string dump_tree(const FgpTree& tree) {
  std::ostringstream os;
  if (!tree.nodes.empty()) dump_node(tree, 0, 0, os);
  return os.str();
}

}  // namespace covplan
