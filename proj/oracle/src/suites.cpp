#include "covplan/oracle/suites.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "covplan/errors.hpp"
#include "covplan/fgp_tree.hpp"
#include "covplan/lemmas.hpp"
#include "covplan/oracle/dense.hpp"
#include "covplan/oracle/planning.hpp"
#include "covplan/ramdl.hpp"
#include "covplan/recovery.hpp"

namespace covplan::oracle {

namespace {

struct Instance {
  StateLayout layout;
  Matrix lambda;
  Matrix sigma;
};

Rng seeded(std::uint64_t seed, std::uint64_t salt) { return Rng(seed * 0x9e3779b97f4a7c15ull + salt); }

Index uniform(Rng& rng, Index lo, Index hi) {
  return std::uniform_int_distribution<Index>(lo, std::max(lo, hi))(rng);
}

Instance random_instance(Rng& rng, Index max_n) {
  Instance in;
  in.layout = StateLayout(random_keys(rng, uniform(rng, 12, max_n)));
  in.lambda = random_information(rng, in.layout, std::min(0.2, 6.0 / static_cast<double>(in.layout.dim())));
  in.sigma = dense_inverse(in.lambda);
  return in;
}

CovarianceCache dense_cache(const Matrix& sigma, const StateLayout& layout, std::span<const VariableKey> keys) {
  return CovarianceCache(StateLayout(keys), dense_block(sigma, layout, keys, keys));
}

// Change of `kind` with m ≤ 30 rows in total and at most 10 new scalars.
InferenceChange random_kind(Rng& rng, const StateLayout& layout, ChangeKind kind) {
  RandomChangeSpec spec;
  spec.kind = kind;
  spec.rows = uniform(rng, 1, 25);
  spec.involved = static_cast<std::size_t>(uniform(rng, 1, std::min<Index>(6, static_cast<Index>(layout.size()))));
  spec.new_vars = kind == ChangeKind::NotAugmented ? 0 : static_cast<std::size_t>(uniform(rng, 1, 3));
  return random_change(rng, layout, spec, 1'000'000);
}

std::vector<VariableKey> random_request(Rng& rng, const StateLayout& layout, const InferenceChange& change) {
  auto y = random_subset(rng, layout.keys(), static_cast<std::size_t>(uniform(rng, 1, 6)));
  if (rng() % 2 && !change.involved.empty()) y = key_union(y, std::span(change.involved).first(1));
  for (const auto& k : change.new_keys)
    if (rng() % 2 || y.empty()) y.push_back(k);
  return y;
}

Matrix dense_posterior_block(const Matrix& prior, const StateLayout& layout, const InferenceChange& change,
                             std::span<const VariableKey> y) {
  StateLayout post;
  const Matrix lp = posterior_information(prior, layout, change, post);
  return dense_block(dense_inverse(lp), post, y, y);
}

CaseOutcome within(double error, double tol, std::string detail = {}) {
  return {std::isfinite(error) && error <= tol, error, std::move(detail)};
}

std::string describe(const StateLayout& layout, const InferenceChange& change) {
  std::ostringstream s;
  s << "n=" << layout.dim() << " m=" << change.rows() << " |X^I|=" << change.involved_dim()
    << " |X_new|=" << change.new_dim() << " kind=" << to_string(change.kind);
  return s.str();
}

CaseOutcome lemma_case(std::uint64_t seed, Index max_n, ChangeKind kind, std::uint64_t salt) {
  Rng rng = seeded(seed, salt);
  const auto in = random_instance(rng, max_n);
  const auto change = random_kind(rng, in.layout, kind);
  const auto y = random_request(rng, in.layout, change);
  const auto w = key_union(key_difference(y, change.new_keys), change.involved);
  const auto out = update(dense_cache(in.sigma, in.layout, w), change, y);
  return within(rel_error(out.joint(), dense_posterior_block(in.lambda, in.layout, change, y)), 1e-8,
                describe(in.layout, change));
}

CaseOutcome relinearization_case(std::uint64_t seed, Index max_n) {
  Rng rng = seeded(seed, 4);
  const StateLayout layout(random_keys(rng, uniform(rng, 12, max_n)));
  const Matrix base = random_information(rng, layout, std::min(0.2, 6.0 / static_cast<double>(layout.dim())));
  const auto involved = static_cast<std::size_t>(uniform(rng, 1, std::min<Index>(6, static_cast<Index>(layout.size()))));
  const auto inst = random_relinearization(rng, layout, base, uniform(rng, 1, 15), involved);
  const Matrix sigma = dense_inverse(inst.prior);
  const auto y = random_subset(rng, layout.keys(), static_cast<std::size_t>(uniform(rng, 1, 6)));
  const auto out = update(dense_cache(sigma, layout, key_union(y, inst.change.involved)), inst.change, y);
  return within(rel_error(out.joint(), dense_posterior_block(inst.prior, layout, inst.change, y)), 1e-8,
                describe(layout, inst.change));
}

CaseOutcome conditional_case(std::uint64_t seed, Index max_n) {
  Rng rng = seeded(seed, 5);
  const auto in = random_instance(rng, max_n);
  const ChangeKind kinds[] = {ChangeKind::NotAugmented, ChangeKind::Rectangular, ChangeKind::Squared};
  const auto change = random_kind(rng, in.layout, kinds[seed % 3]);
  auto f = random_subset(rng, in.layout.keys(), static_cast<std::size_t>(uniform(rng, 1, 5)));
  if (rng() % 2) f = key_union(f, std::span(change.involved).first(1));
  const auto rest = key_difference(in.layout.keys(), f);
  auto y = random_subset(rng, rest, static_cast<std::size_t>(uniform(rng, 1, std::min<Index>(5, static_cast<Index>(rest.size())))));
  for (const auto& k : change.new_keys) y.push_back(k);
  const auto w = key_union(key_difference(y, change.new_keys), key_difference(change.involved, f));
  const CovarianceCache cond(StateLayout(w), conditional_covariance(in.lambda, in.layout, w, f),
                             CacheMode::Conditional, f);
  const auto out = update_conditional(cond, change, y);
  StateLayout post;
  const Matrix lp = posterior_information(in.lambda, in.layout, change, post);
  return within(rel_error(out.joint(), conditional_covariance(lp, post, y, f)), 1e-8, describe(in.layout, change));
}

CaseOutcome rectangular_methods_case(std::uint64_t seed, Index max_n) {
  Rng rng = seeded(seed, 2);
  const auto in = random_instance(rng, max_n);
  const auto change = random_kind(rng, in.layout, ChangeKind::Rectangular);
  const auto y = random_request(rng, in.layout, change);
  const auto cache = dense_cache(in.sigma, in.layout, key_union(key_difference(y, change.new_keys), change.involved));
  const auto m1 = update_rectangular(cache, change, y, RectangularMethod::Method1);
  const auto m2 = update_rectangular(cache, change, y, RectangularMethod::Method2);
  return within(rel_error(m1.joint(), m2.joint()), 1e-10, describe(in.layout, change));
}

CaseOutcome squared_conservation_case(std::uint64_t seed, Index max_n) {
  Rng rng = seeded(seed, 3);
  const auto in = random_instance(rng, max_n);
  const auto change = random_kind(rng, in.layout, ChangeKind::Squared);
  auto y = random_subset(rng, in.layout.keys(), static_cast<std::size_t>(uniform(rng, 1, 6)));
  for (const auto& k : change.new_keys) y.push_back(k);
  const auto cache = dense_cache(in.sigma, in.layout, key_union(key_difference(y, change.new_keys), change.involved));
  const auto out = update_squared(cache, change, y);
  const auto y_old = key_difference(y, change.new_keys);
  const double diff = (out.block(y_old) - cache.block(y_old)).cwiseAbs().maxCoeff();
  return within(diff, 0.0, describe(in.layout, change));
}

CaseOutcome baseline_case(std::uint64_t seed, Index max_n) {
  Rng rng = seeded(seed, 6);
  const Index n = uniform(rng, 5, std::min<Index>(150, max_n));
  const SparseMatrix r = random_upper(rng, n, std::uniform_real_distribution<double>(0.02, 0.2)(rng));
  const Matrix rd(r);
  const Matrix dense = dense_inverse(rd.transpose() * rd);
  const Matrix rec = recover_recursive(r);
  const Matrix back = recover_backsubstitution(r);
  const double err = std::max({rel_error(rec, dense), rel_error(back, dense), rel_error(rec, back)});
  return within(err, 1e-9, "n=" + std::to_string(n));
}

struct Prior {
  StateLayout layout;
  Matrix lambda;
  BeliefState belief;
};

Prior random_prior(Rng& rng, Index max_n) {
  Prior p;
  p.layout = StateLayout(random_keys(rng, uniform(rng, 12, max_n)));
  p.lambda = random_information(rng, p.layout, std::min(0.2, 6.0 / static_cast<double>(p.layout.dim())));
  p.belief = make_belief(p.layout, to_sparse(p.lambda), Vector::Zero(p.layout.dim()));
  return p;
}

CaseOutcome ig_unfocused_case(std::uint64_t seed, Index max_n) {
  Rng rng = seeded(seed, 7);
  const auto p = random_prior(rng, max_n);
  const ChangeKind kinds[] = {ChangeKind::NotAugmented, ChangeKind::Rectangular, ChangeKind::Squared};
  const auto change = random_kind(rng, p.layout, kinds[seed % 3]);
  const auto marg = cache_from_belief(p.belief, change.involved);
  const double ig = score_change(change, marg, nullptr, {}).value;
  StateLayout post;
  const Matrix lp = posterior_information(p.lambda, p.layout, change, post);
  const double ref = 0.5 * (log_det(lp) - log_det(p.lambda));
  return within(std::abs(ig - ref) / std::max(1.0, std::abs(ref)), 1e-9, describe(p.layout, change));
}

CaseOutcome ig_focused_case(std::uint64_t seed, Index max_n) {
  Rng rng = seeded(seed, 8);
  const auto p = random_prior(rng, max_n);
  const ChangeKind kinds[] = {ChangeKind::NotAugmented, ChangeKind::Rectangular, ChangeKind::Squared};
  const auto change = random_kind(rng, p.layout, kinds[seed % 3]);
  auto focus = random_subset(rng, p.layout.keys(), static_cast<std::size_t>(uniform(rng, 1, 5)));
  focus = key_union(focus, std::span(change.involved).first(1));
  const auto marg = cache_from_belief(p.belief, change.involved);
  const auto cond = conditional_cache_from_belief(p.belief, key_difference(change.involved, focus), focus);
  const FocusedQuery q{QueryMode::FocusedOld, focus};
  const double got = score_change(change, marg, &cond, q).value;
  const ActionIncrement inc{"a", change};
  const double ref = dense_score(p.lambda, p.layout, std::span(&inc, 1), q, {});
  return within(std::abs(got - ref) / std::max(1.0, std::abs(ref)), 1e-8, describe(p.layout, change));
}

CaseOutcome additivity_case(std::uint64_t seed, Index max_n) {
  Rng rng = seeded(seed, 9);
  const auto p = random_prior(rng, max_n);
  const auto parts = static_cast<std::size_t>(uniform(rng, 1, 5));
  std::vector<ActionIncrement> path;
  VariableKey tail = p.layout.keys()[static_cast<std::size_t>(uniform(rng, 0, static_cast<Index>(p.layout.size()) - 1))];
  for (std::size_t i = 0; i < parts; ++i) {
    const VariableKey next = pose_key(2'000'000 + static_cast<std::int64_t>(i));
    auto involved = key_union(std::vector{tail}, random_subset(rng, p.layout.keys(), static_cast<std::size_t>(uniform(rng, 0, 3))));
    const Index rows = next.dim() + uniform(rng, 0, 6);
    Matrix a_new = random_matrix(rng, rows, next.dim());
    a_new.topRows(next.dim()) += 2.0 * Matrix::Identity(next.dim(), next.dim());
    path.push_back({"p" + std::to_string(i),
                    InferenceChange::augmented(involved, random_matrix(rng, rows, StateLayout::total_dim(involved)),
                                               {next}, a_new)});
    tail = next;
  }
  const auto check = ig_additivity_check(path, p.belief);
  const double err = std::abs(check.sum_of_segments - check.direct) / std::max(1.0, std::abs(check.direct));
  return within(err, 1e-9, "parts=" + std::to_string(parts) + " n=" + std::to_string(p.layout.dim()));
}

CaseOutcome planner_case(std::uint64_t seed, Index max_n) {
  Rng rng = seeded(seed, 10);
  const Index n = uniform(rng, 20, std::min<Index>(max_n, 100));
  const auto scene = random_planning_scene(rng, n, 20, 200);
  const QueryMode modes[] = {QueryMode::Unfocused, QueryMode::FocusedOld, QueryMode::FocusedNew};
  const FocusedQuery q{modes[seed % 3], scene.focus};
  auto tree = build_trajectory_tree(scene.candidates);
  const auto t = evaluate_tree(tree, scene.candidates, scene.belief, q);
  const auto f = evaluate_candidates_flat(scene.candidates, scene.belief, q);
  std::vector<double> util;
  std::vector<int> ids;
  for (const auto& c : scene.candidates) {
    const double v = dense_score(scene.prior, scene.layout, c.segments, q, c.terminal);
    util.push_back(q.mode == QueryMode::FocusedNew ? -v : v);
    ids.push_back(c.id);
  }
  const int dense = dense_argmax(util, ids);
  std::ostringstream d;
  d << "mode=" << to_string(q.mode) << " candidates=" << scene.candidates.size() << " tree=" << t.best_id
    << " flat=" << f.best_id << " dense=" << dense << " max_evals=" << t.max_score_evaluations
    << " max_props=" << t.max_propagations;
  const bool ok = t.best_id == f.best_id && f.best_id == dense && t.max_score_evaluations <= 1 &&
                  t.max_propagations <= 1;
  return {ok, ok ? 0.0 : 1.0, d.str()};
}

CaseOutcome guarded(const Suite& s, std::uint64_t seed, Index max_n) {
  try {
    return s.run(seed, max_n);
  } catch (const std::exception& e) {
    return {false, std::numeric_limits<double>::infinity(), std::string("exception: ") + e.what()};
  }
}

}  // namespace

std::vector<Suite> verification_suites() {
  return {
      {"not-augmented", 1e-8,
       [](std::uint64_t s, Index n) { return lemma_case(s, n, ChangeKind::NotAugmented, 1); }},
      {"rectangular", 1e-8,
       [](std::uint64_t s, Index n) { return lemma_case(s, n, ChangeKind::Rectangular, 11); }},
      {"rectangular-methods", 1e-10, rectangular_methods_case},
      {"squared", 1e-8, [](std::uint64_t s, Index n) { return lemma_case(s, n, ChangeKind::Squared, 12); }},
      {"squared-conservation", 0.0, squared_conservation_case},
      {"relinearization", 1e-8, relinearization_case},
      {"conditional", 1e-8, conditional_case},
      {"baseline-recovery", 1e-9, baseline_case},
      {"ig-determinant", 1e-9, ig_unfocused_case},
      {"ig-focused", 1e-8, ig_focused_case},
      {"ig-additivity", 1e-9, additivity_case},
      {"planner-equivalence", 0.0, planner_case},
  };
}

const Suite& find_suite(const std::string& name) {
  static const auto suites = verification_suites();
  for (const auto& s : suites)
    if (s.name == name) return s;
  throw std::invalid_argument("unknown suite '" + name + "'");
}

SuiteSummary run_suite(const Suite& suite, std::uint64_t first, int count, Index max_n, int threads) {
  std::vector<CaseOutcome> outcomes(static_cast<std::size_t>(std::max(0, count)));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int i = next++; i < count; i = next++)
      outcomes[static_cast<std::size_t>(i)] = guarded(suite, first + static_cast<std::uint64_t>(i), max_n);
  };
  const int workers = std::clamp(threads, 1, std::max(1, count));
  std::vector<std::thread> pool;
  for (int w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  SuiteSummary sum;
  sum.name = suite.name;
  sum.cases = count;
  for (int i = 0; i < count; ++i) {
    const auto& o = outcomes[static_cast<std::size_t>(i)];
    sum.worst = std::max(sum.worst, o.error);
    if (!o.pass) {
      ++sum.failures;
      sum.failing_seeds.push_back(first + static_cast<std::uint64_t>(i));
      sum.failing_details.push_back(o.detail);
    }
  }
  return sum;
}

}  // namespace covplan::oracle
