#include <catch_amalgamated.hpp>

#include "covplan/belief.hpp"
#include "covplan/errors.hpp"
#include "covplan/oracle/dense.hpp"
#include "covplan/recovery.hpp"
#include "covplan/slam_update.hpp"

using namespace covplan;

namespace {

struct StepInstance {
  StateLayout old_layout;
  Matrix prior;
  BeliefState prior_belief;
  MarginalBlocks prior_marginals;
  SlamStep step;
  StateLayout post_layout;
  Matrix posterior;
};

void add_block(Matrix& lambda, const StateLayout& layout, std::span<const VariableKey> keys,
               const Matrix& a, double sign = 1.0) {
  const auto idx = layout.scalar_indices(keys);
  lambda(idx, idx) += sign * a.transpose() * a;
}

// Old state: poses x0..x{p-1} and landmarks; new: pose x_p and one landmark.
StepInstance make_step(unsigned seed, bool observe, bool relinearize, std::size_t involved_old = 3) {
  oracle::Rng rng(seed);
  StepInstance in;
  const int poses = 6;
  for (int i = 0; i < poses; ++i) in.old_layout.append(pose_key(i));
  for (int j = 0; j < 8; ++j) in.old_layout.append(landmark_key(j));
  in.prior = oracle::random_information(rng, in.old_layout, 0.15);

  SlamStep& s = in.step;
  s.previous_pose = pose_key(poses - 1);
  s.new_keys = {pose_key(poses), landmark_key(100)};
  const Index d_new = 5;
  s.a_s_previous = oracle::random_matrix(rng, d_new, 3);
  s.a_s_new = oracle::random_matrix(rng, d_new, d_new) + 2.0 * Matrix::Identity(d_new, d_new);

  if (observe || relinearize) {
    s.involved = oracle::random_subset(rng, in.old_layout.keys(), involved_old);
    s.involved.push_back(pose_key(poses));
  }
  const Index inv_dim = StateLayout::total_dim(s.involved);
  s.a_observe = observe ? oracle::random_matrix(rng, 4, inv_dim) : Matrix(0, inv_dim);
  if (relinearize) {
    // F_R only touches old variables at the old point.
    s.a_minus = oracle::random_matrix(rng, 3, inv_dim);
    s.a_minus.rightCols(3).setZero();
    s.a_plus = s.a_minus + oracle::random_matrix(rng, 3, inv_dim, 0.3);
    s.a_plus.rightCols(3).setZero();
    const std::vector<VariableKey> old_inv(s.involved.begin(), s.involved.end() - 1);
    add_block(in.prior, in.old_layout, old_inv, s.a_minus.leftCols(inv_dim - 3));
  } else {
    s.a_minus = Matrix(0, inv_dim);
    s.a_plus = Matrix(0, inv_dim);
  }

  in.prior_belief = make_belief(in.old_layout, oracle::to_sparse(in.prior), Vector::Zero(in.old_layout.dim()));
  in.prior_marginals = marginal_blocks(in.old_layout, marginals_backsubstitution(in.prior_belief.factor(), in.old_layout));

  in.post_layout = in.old_layout;
  in.post_layout.append(s.new_keys);
  const Index n = in.post_layout.dim();
  in.posterior = Matrix::Zero(n, n);
  in.posterior.topLeftCorner(in.old_layout.dim(), in.old_layout.dim()) = in.prior;
  Matrix a_s(d_new, 3 + d_new);
  a_s << s.a_s_previous, s.a_s_new;
  std::vector<VariableKey> s_keys{s.previous_pose};
  s_keys.insert(s_keys.end(), s.new_keys.begin(), s.new_keys.end());
  add_block(in.posterior, in.post_layout, s_keys, a_s);
  if (observe) add_block(in.posterior, in.post_layout, s.involved, s.a_observe);
  if (relinearize) {
    add_block(in.posterior, in.post_layout, s.involved, s.a_minus, -1.0);
    add_block(in.posterior, in.post_layout, s.involved, s.a_plus);
  }
  return in;
}

double worst_block_error(const MarginalBlocks& got, const StepInstance& in) {
  REQUIRE(got.layout.keys() == in.post_layout.keys());
  const Matrix sigma = oracle::dense_inverse(in.posterior);
  double worst = 0.0;
  for (const auto& k : in.post_layout.keys()) {
    const VariableKey kk[] = {k};
    worst = std::max(worst, oracle::rel_error(got[k], oracle::dense_block(sigma, in.post_layout, kk, kk)));
  }
  return worst;
}

}  // namespace

TEST_CASE("SLAM step: both strategies match the dense posterior", "[slam_update]") {
  const std::pair<bool, bool> cases[] = {{false, false}, {true, false}, {false, true}, {true, true}};
  for (auto [observe, relin] : cases) {
    for (unsigned seed = 0; seed < 8; ++seed) {
      const auto in = make_step(seed + 31 * observe + 67 * relin, observe, relin);
      INFO("observe " << observe << " relinearize " << relin << " seed " << seed);
      SlamUpdateOptions opts;
      opts.allow_fallback = false;
      SlamUpdateReport two_rep, one_rep;
      const auto two = slam_step_update(in.prior_marginals, in.prior_belief, in.step,
                                        SlamStrategy::TwoStage, opts, nullptr, &two_rep);
      const auto one = slam_step_update(in.prior_marginals, in.prior_belief, in.step,
                                        SlamStrategy::OneStage, opts, nullptr, &one_rep);
      CHECK(worst_block_error(two, in) < 1e-8);
      CHECK(worst_block_error(one, in) < 1e-8);
      CHECK_FALSE(two_rep.fallback);
      CHECK(one_rep.imaginary_residue < 1e-9);
      CHECK(two_rep.m == in.step.rows());
    }
  }
}

TEST_CASE("SLAM step falls back when the change is large", "[slam_update]") {
  auto in = make_step(5, true, false);
  SlamUpdateOptions opts;
  opts.fallback_ratio = 0.1;
  const BeliefState current = make_belief(in.post_layout, oracle::to_sparse(in.posterior),
                                          Vector::Zero(in.post_layout.dim()));
  SlamUpdateReport rep;
  const auto out = slam_step_update(in.prior_marginals, in.prior_belief, in.step,
                                    SlamStrategy::TwoStage, opts, &current, &rep);
  CHECK(rep.fallback);
  CHECK(worst_block_error(out, in) < 1e-9);
  CHECK_THROWS_AS(slam_step_update(in.prior_marginals, in.prior_belief, in.step,
                                   SlamStrategy::TwoStage, opts),
                  DimensionError);
}

TEST_CASE("SLAM step input validation", "[slam_update]") {
  auto in = make_step(2, true, false);
  SlamStep bad = in.step;
  bad.previous_pose = pose_key(99);
  CHECK_THROWS_AS(slam_step_update(in.prior_marginals, in.prior_belief, bad, SlamStrategy::TwoStage),
                  DimensionError);
  bad = in.step;
  bad.a_observe = Matrix::Ones(2, 1);
  CHECK_THROWS_AS(slam_step_update(in.prior_marginals, in.prior_belief, bad, SlamStrategy::TwoStage),
                  DimensionError);
  bad = in.step;
  bad.a_s_new.setZero();
  CHECK_THROWS_AS(slam_step_update(in.prior_marginals, in.prior_belief, bad, SlamStrategy::TwoStage),
                  RankDeficient);
}
