#include <catch_amalgamated.hpp>

#include <Eigen/LU>

#include "covplan/errors.hpp"
#include "covplan/lemmas.hpp"
#include "covplan/oracle/dense.hpp"

using namespace covplan;

namespace {

CovarianceCache dense_cache(const Matrix& sigma, const StateLayout& layout,
                            std::span<const VariableKey> keys) {
  return CovarianceCache(StateLayout(keys), oracle::dense_block(sigma, layout, keys, keys));
}

Matrix one(double v) { return Matrix::Constant(1, 1, v); }

struct Instance {
  StateLayout layout;
  Matrix lambda;
  Matrix sigma;
};

Instance random_instance(oracle::Rng& rng, Index n) {
  Instance in;
  in.layout = StateLayout(oracle::random_keys(rng, n));
  in.lambda = oracle::random_information(rng, in.layout, 0.05);
  in.sigma = oracle::dense_inverse(in.lambda);
  return in;
}

}  // namespace

TEST_CASE("Not-augmented update scalar and zero-information cases", "[lemmas]") {
  const VariableKey x = scalar_key(0);
  const std::vector<VariableKey> y{x};
  const CovarianceCache cache(StateLayout{x}, one(1.0));
  UpdateWorkspace ws;
  const auto out = update_not_augmented(cache, InferenceChange::not_augmented(y, one(1.0)), y, &ws);
  CHECK(ws.c(0, 0) == Catch::Approx(2.0));
  CHECK(out.joint()(0, 0) == Catch::Approx(0.5));
  const auto same = update_not_augmented(cache, InferenceChange::not_augmented(y, one(0.0)), y);
  CHECK(same.joint()(0, 0) == 1.0);
}

TEST_CASE("Not-augmented update random instances match the dense posterior", "[lemmas]") {
  for (unsigned seed = 0; seed < 20; ++seed) {
    oracle::Rng rng(seed);
    const auto in = random_instance(rng, 60);
    const auto change = oracle::random_change(rng, in.layout, {ChangeKind::NotAugmented, 7, 4, 0}, 0);
    // Y overlaps X^I on purpose in half the instances.
    auto y = oracle::random_subset(rng, in.layout.keys(), 6);
    if (seed % 2) y = key_union(y, std::span(change.involved).first(1));
    const auto w = key_union(key_difference(y, change.new_keys), change.involved);
    UpdateWorkspace ws;
    const auto out = update_not_augmented(dense_cache(in.sigma, in.layout, w), change, y, &ws);
    StateLayout post;
    const Matrix lp = oracle::posterior_information(in.lambda, in.layout, change, post);
    const Matrix ref = oracle::dense_block(oracle::dense_inverse(lp), post, y, y);
    CHECK(oracle::rel_error(out.joint(), ref) < 1e-9);
    CHECK(ws.c.rows() == 7);
    CHECK((ws.c - ws.c.transpose()).norm() == 0.0);
  }
}

TEST_CASE("1-D prediction: squared and rectangular paths agree", "[lemmas]") {
  const VariableKey x_old = scalar_key(0);
  const VariableKey x_new = scalar_key(1);
  const CovarianceCache cache(StateLayout{x_old}, one(1.0));
  const auto change = InferenceChange::augmented({x_old}, one(-1.0), {x_new}, one(1.0));
  REQUIRE(change.kind == ChangeKind::Squared);
  const std::vector<VariableKey> y{x_old, x_new};
  UpdateWorkspace ws;
  const auto sq = update_squared(cache, change, y, &ws);
  CHECK(ws.c(0, 0) == Catch::Approx(2.0));
  CHECK(sq.joint()(1, 1) == Catch::Approx(2.0));
  CHECK(sq.joint()(0, 1) == Catch::Approx(1.0));
  CHECK(sq.joint()(0, 0) == 1.0);
  for (auto method : {RectangularMethod::Method1, RectangularMethod::Method2}) {
    const auto rect = update_rectangular(cache, change, y, method);
    CHECK(oracle::max_abs_diff(rect.joint(), sq.joint()) < 1e-14);
  }
}

TEST_CASE("squared change with no involved variables", "[lemmas]") {
  const VariableKey x_old = scalar_key(0);
  const VariableKey l = landmark_key(0);
  const CovarianceCache cache(StateLayout{x_old}, one(3.0));
  Matrix a_new(2, 2);
  a_new << 2, 0, 1, 1;
  const auto change = InferenceChange::augmented({}, Matrix(2, 0), {l}, a_new);
  const std::vector<VariableKey> y{x_old, l};
  const auto out = update_squared(cache, change, y);
  const Matrix inv = a_new.inverse();
  CHECK(out.block(std::vector{l}).isApprox(inv * inv.transpose(), 1e-14));
  CHECK(out.block(std::vector{x_old}, std::vector{l}).isZero());
}

TEST_CASE("rectangular with Y_new empty and square A_new keeps old blocks", "[lemmas]") {
  oracle::Rng rng(9);
  const auto in = random_instance(rng, 30);
  auto change = oracle::random_change(rng, in.layout, {ChangeKind::Squared, 0, 3, 2}, 500);
  const auto y = oracle::random_subset(rng, in.layout.keys(), 4);
  const auto w = key_union(key_difference(y, change.new_keys), change.involved);
  const auto cache = dense_cache(in.sigma, in.layout, w);
  UpdateWorkspace ws;
  const auto out = update_rectangular(cache, change, y, RectangularMethod::Method2, &ws);
  CHECK(ws.k.norm() < 1e-12);
  CHECK(oracle::rel_error(out.joint(), cache.block(y)) < 1e-12);
}

TEST_CASE("Rectangular update random instances and K projector properties", "[lemmas]") {
  for (unsigned seed = 0; seed < 20; ++seed) {
    oracle::Rng rng(200 + seed);
    const auto in = random_instance(rng, 60);
    const auto change = oracle::random_change(rng, in.layout, {ChangeKind::Rectangular, 9, 4, 2}, 900);
    REQUIRE(change.kind == ChangeKind::Rectangular);
    auto y = oracle::random_subset(rng, in.layout.keys(), 5);
    y.push_back(change.new_keys.back());
    const auto w = key_union(key_difference(y, change.new_keys), change.involved);
    const auto cache = dense_cache(in.sigma, in.layout, w);

    UpdateWorkspace ws;
    const auto m2 = update_rectangular(cache, change, y, RectangularMethod::Method2, &ws);
    const auto m1 = update_rectangular(cache, change, y, RectangularMethod::Method1);
    StateLayout post;
    const Matrix lp = oracle::posterior_information(in.lambda, in.layout, change, post);
    const Matrix ref = oracle::dense_block(oracle::dense_inverse(lp), post, y, y);
    CHECK(oracle::rel_error(m2.joint(), ref) < 1e-8);
    CHECK(oracle::rel_error(m1.joint(), m2.joint()) < 1e-10);

    CHECK((ws.k - ws.k.transpose()).norm() < 1e-12);
    CHECK((ws.k * ws.k - ws.k).norm() < 1e-10);
    CHECK((ws.k * change.a_new).norm() < 1e-10);
    CHECK(ws.g.rows() == change.rows());
    CHECK(ws.max_dimension() <= std::max<Index>(change.rows(), StateLayout::total_dim(w)));
  }
}

TEST_CASE("Squared update conserves old blocks exactly", "[lemmas]") {
  for (unsigned seed = 0; seed < 20; ++seed) {
    oracle::Rng rng(300 + seed);
    const auto in = random_instance(rng, 60);
    const auto change = oracle::random_change(rng, in.layout, {ChangeKind::Squared, 0, 3, 2}, 700);
    auto y = oracle::random_subset(rng, in.layout.keys(), 5);
    for (const auto& k : change.new_keys) y.push_back(k);
    const auto w = key_union(key_difference(y, change.new_keys), change.involved);
    const auto cache = dense_cache(in.sigma, in.layout, w);
    const auto out = update_squared(cache, change, y);
    const auto y_old = key_difference(y, change.new_keys);
    CHECK((out.block(y_old).array() == cache.block(y_old).array()).all());
    StateLayout post;
    const Matrix lp = oracle::posterior_information(in.lambda, in.layout, change, post);
    const Matrix ref = oracle::dense_block(oracle::dense_inverse(lp), post, y, y);
    CHECK(oracle::rel_error(out.joint(), ref) < 1e-9);
  }
}

TEST_CASE("Relinearization update", "[lemmas]") {
  SECTION("identical linearization points leave covariance unchanged") {
    oracle::Rng rng(1);
    const auto in = random_instance(rng, 30);
    const auto keys = oracle::random_subset(rng, in.layout.keys(), 3);
    const Matrix a = oracle::random_matrix(rng, 4, StateLayout::total_dim(keys), 0.3);
    const auto change = InferenceChange::relinearization(keys, a, a);
    const auto y = oracle::random_subset(rng, in.layout.keys(), 4);
    const auto w = key_union(y, keys);
    const auto cache = dense_cache(in.sigma, in.layout, w);
    const auto out = update_relinearized(cache, change, y);
    CHECK(oracle::rel_error(out.joint(), cache.block(y)) < 1e-12);
  }
  SECTION("zero old Jacobian reduces to the not-augmented update") {
    oracle::Rng rng(2);
    const auto in = random_instance(rng, 30);
    const auto keys = oracle::random_subset(rng, in.layout.keys(), 3);
    const Matrix a = oracle::random_matrix(rng, 4, StateLayout::total_dim(keys));
    const auto y = oracle::random_subset(rng, in.layout.keys(), 4);
    const auto cache = dense_cache(in.sigma, in.layout, key_union(y, keys));
    const auto relin = update_relinearized(
        cache, InferenceChange::relinearization(keys, Matrix::Zero(4, a.cols()), a), y);
    const auto plain = update_not_augmented(cache, InferenceChange::not_augmented(keys, a), y);
    CHECK(oracle::rel_error(relin.joint(), plain.joint()) < 1e-12);
  }
  SECTION("random instances match the dense posterior") {
    for (unsigned seed = 0; seed < 20; ++seed) {
      oracle::Rng rng(400 + seed);
      const StateLayout layout(oracle::random_keys(rng, 50));
      const Matrix base = oracle::random_information(rng, layout, 0.05);
      const auto inst = oracle::random_relinearization(rng, layout, base, 6, 3);
      const Matrix sigma = oracle::dense_inverse(inst.prior);
      auto y = oracle::random_subset(rng, layout.keys(), 5);
      const auto w = key_union(y, inst.change.involved);
      UpdateWorkspace ws;
      const auto out = update_relinearized(dense_cache(sigma, layout, w), inst.change, y, &ws);
      StateLayout post;
      const Matrix lp = oracle::posterior_information(inst.prior, layout, inst.change, post);
      const Matrix ref = oracle::dense_block(oracle::dense_inverse(lp), post, y, y);
      CHECK(oracle::rel_error(out.joint(), ref) < 1e-8);
      CHECK(ws.imaginary_residue < 1e-10);
    }
  }
  SECTION("downdate beyond the prior information is rejected") {
    const VariableKey x = scalar_key(0);
    const CovarianceCache cache(StateLayout{x}, one(1.0));
    const auto change = InferenceChange::relinearization({x}, one(2.0), one(0.0));
    CHECK_THROWS_AS(update_relinearized(cache, change, std::vector{x}), InconsistentDowndate);
  }
}

TEST_CASE("conditional updates", "[lemmas]") {
  SECTION("empty conditioning set equals the marginal update") {
    oracle::Rng rng(5);
    const auto in = random_instance(rng, 30);
    const auto change = oracle::random_change(rng, in.layout, {ChangeKind::NotAugmented, 4, 3, 0}, 0);
    const auto y = oracle::random_subset(rng, in.layout.keys(), 4);
    const auto marginal = dense_cache(in.sigma, in.layout, key_union(y, change.involved));
    const auto cond = condition_cache(marginal, marginal.layout().keys(), {});
    const auto a = update(marginal, change, y);
    const auto b = update(cond, change, y);
    CHECK(oracle::rel_error(a.joint(), b.joint()) < 1e-14);
  }
  SECTION("factor on conditioning variables only screens off") {
    oracle::Rng rng(6);
    const auto in = random_instance(rng, 30);
    const auto f = oracle::random_subset(rng, in.layout.keys(), 3);
    const auto rest = key_difference(in.layout.keys(), f);
    const auto y = oracle::random_subset(rng, rest, 4);
    const auto cond = CovarianceCache(StateLayout(y), oracle::conditional_covariance(in.lambda, in.layout, y, f),
                                      CacheMode::Conditional, f);
    const auto change = InferenceChange::not_augmented(
        f, oracle::random_matrix(rng, 3, StateLayout::total_dim(f)));
    const auto out = update_conditional(cond, change, y);
    CHECK(oracle::rel_error(out.joint(), cond.joint()) < 1e-14);
  }
  SECTION("random instances match the dense Schur complement") {
    for (unsigned seed = 0; seed < 20; ++seed) {
      oracle::Rng rng(500 + seed);
      const auto in = random_instance(rng, 40);
      const auto f = oracle::random_subset(rng, in.layout.keys(), 5);
      const ChangeKind kinds[] = {ChangeKind::NotAugmented, ChangeKind::Rectangular, ChangeKind::Squared};
      const ChangeKind kind = kinds[seed % 3];
      const auto change = oracle::random_change(rng, in.layout, {kind, 6, 4, 2}, 800);
      const auto rest = key_difference(in.layout.keys(), f);
      auto y = oracle::random_subset(rng, rest, 4);
      for (const auto& k : change.new_keys) y.push_back(k);
      const auto involved_u = key_difference(change.involved, f);
      const auto w = key_union(key_difference(y, change.new_keys), involved_u);
      const auto cond = CovarianceCache(StateLayout(w), oracle::conditional_covariance(in.lambda, in.layout, w, f),
                                        CacheMode::Conditional, f);
      const auto out = update_conditional(cond, change, y);
      StateLayout post;
      const Matrix lp = oracle::posterior_information(in.lambda, in.layout, change, post);
      const Matrix ref = oracle::conditional_covariance(lp, post, y, f);
      CHECK(oracle::rel_error(out.joint(), ref) < 1e-8);
    }
  }
}

TEST_CASE("fault injection flips the rectangular old-block update", "[lemmas]") {
  oracle::Rng rng(77);
  const auto in = random_instance(rng, 20);
  const auto change = oracle::random_change(rng, in.layout, {ChangeKind::Rectangular, 6, 3, 1}, 900);
  const auto y = oracle::random_subset(rng, in.layout.keys(), 3);
  const auto cache = dense_cache(in.sigma, in.layout, key_union(y, change.involved));
  const auto good = update_rectangular(cache, change, y);
  set_fault(Fault::RectangularSign);
  const auto bad = update_rectangular(cache, change, y);
  set_fault(Fault::None);
  CHECK(oracle::rel_error(bad.joint(), good.joint()) > 1e-6);
}

TEST_CASE("cache misses are reported", "[lemmas]") {
  const CovarianceCache cache(StateLayout{scalar_key(0)}, one(1.0));
  const auto change = InferenceChange::not_augmented({scalar_key(1)}, one(1.0));
  CHECK_THROWS_AS(update(cache, change, std::vector{scalar_key(0)}), CacheMiss);
}
