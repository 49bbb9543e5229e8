#include "covplan/oracle/planning.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "covplan/errors.hpp"

namespace covplan::oracle {

double dense_score(const Matrix& prior, const StateLayout& layout,
                   std::span<const ActionIncrement> segments, const FocusedQuery& query,
                   std::span<const VariableKey> terminal) {
  Matrix lambda = prior;
  StateLayout current = layout;
  for (const auto& s : segments) {
    StateLayout next;
    lambda = posterior_information(lambda, current, s.change, next);
    current = next;
  }
  switch (query.mode) {
    case QueryMode::Unfocused:
      return 0.5 * (log_det(lambda) - log_det(prior));
    case QueryMode::FocusedOld: {
      const Matrix before = dense_block(dense_inverse(prior), layout, query.focus, query.focus);
      const Matrix after = dense_block(dense_inverse(lambda), current, query.focus, query.focus);
      return 0.5 * (log_det(before) - log_det(after));
    }
    case QueryMode::FocusedNew:
      return 0.5 * log_det(dense_block(dense_inverse(lambda), current, terminal, terminal));
  }
  throw DimensionError("unknown query mode");
}

int dense_argmax(std::span<const double> utilities, std::span<const int> ids) {
  std::vector<std::size_t> order(ids.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return ids[a] < ids[b]; });
  std::size_t best = order.front();
  for (std::size_t i : order)
    if (utilities[i] > utilities[best] + 1e-9 * std::max(1.0, std::abs(utilities[best]))) best = i;
  return ids[best];
}

PlanningScene random_planning_scene(Rng& rng, Index n, int min_candidates, int max_candidates,
                                    bool duplicates) {
  PlanningScene scene;
  scene.layout = StateLayout(random_keys(rng, n));
  scene.prior = random_information(rng, scene.layout, std::min(0.2, 6.0 / static_cast<double>(n)));
  scene.belief = make_belief(scene.layout, to_sparse(scene.prior), Vector::Zero(scene.layout.dim()));
  const auto& keys = scene.layout.keys();
  scene.focus = random_subset(rng, keys, std::min<std::size_t>(3, keys.size()));
  const VariableKey anchor = random_subset(rng, keys, 1).front();

  std::uniform_int_distribution<int> branch(2, 5);
  std::uniform_int_distribution<int> extra_rows(0, 4);
  std::uniform_int_distribution<int> observed(1, 2);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int target = std::uniform_int_distribution<int>(min_candidates, max_candidates)(rng);
  const int b1 = branch(rng);
  const int b2 = branch(rng);
  int b3 = std::max(1, (target + b1 * b2 - 1) / (b1 * b2));
  if (b3 > 1 && b1 * b2 * b3 > max_candidates) --b3;
  std::int64_t next_index = 1000000;
  int next_edge = 0;

  struct Partial {
    std::vector<ActionIncrement> segments;
    VariableKey tail;
  };
  auto extend = [&](const Partial& parent) {
    ActionIncrement inc;
    inc.id = "e" + std::to_string(next_edge++);
    std::vector<VariableKey> new_keys{pose_key(next_index++)};
    if (unit(rng) < 0.2) new_keys.push_back(landmark_key(next_index++));
    const Index new_dim = StateLayout::total_dim(new_keys);
    const int extra = extra_rows(rng);
    std::vector<VariableKey> involved{parent.tail};
    if (extra > 0) involved = key_union(involved, random_subset(rng, keys, static_cast<std::size_t>(observed(rng))));
    const Index rows = new_dim + extra;
    Matrix a_i = random_matrix(rng, rows, StateLayout::total_dim(involved));
    Matrix a_new = random_matrix(rng, rows, new_dim);
    a_new.topRows(new_dim) += 2.0 * Matrix::Identity(new_dim, new_dim);
    inc.change = InferenceChange::augmented(involved, a_i, new_keys, a_new);
    Partial out{parent.segments, new_keys.front()};
    out.segments.push_back(std::move(inc));
    return out;
  };

  std::vector<Partial> level{Partial{{}, anchor}};
  for (int width : {b1, b2, b3}) {
    std::vector<Partial> next;
    for (const auto& p : level)
      for (int i = 0; i < width; ++i) next.push_back(extend(p));
    level = std::move(next);
  }
  int id = 0;
  for (const auto& p : level) {
    PlanCandidate c;
    c.id = id++;
    c.segments = p.segments;
    c.terminal = {c.segments.back().change.new_keys.front()};
    scene.candidates.push_back(std::move(c));
  }
  if (duplicates) {
    const int room = max_candidates - static_cast<int>(scene.candidates.size());
    const int copies = std::max(0, std::min({3, static_cast<int>(scene.candidates.size()) / 10, room}));
    std::uniform_int_distribution<std::size_t> pick(0, scene.candidates.size() - 1);
    for (int i = 0; i < copies; ++i) {
      PlanCandidate c = scene.candidates[pick(rng)];
      c.id = id++;
      scene.candidates.push_back(std::move(c));
    }
  }
  return scene;
}

}  // namespace covplan::oracle
