#include <catch_amalgamated.hpp>

#include "covplan/belief.hpp"
#include "covplan/errors.hpp"
#include "covplan/oracle/dense.hpp"
#include "covplan/recovery.hpp"

using namespace covplan;

TEST_CASE("identity R recovers identity covariance", "[recovery]") {
  const SparseMatrix r = oracle::to_sparse(Matrix::Identity(4, 4));
  CHECK(recover_recursive(r).isApprox(Matrix::Identity(4, 4)));
  CHECK(recover_backsubstitution(r).isApprox(Matrix::Identity(4, 4)));
}

TEST_CASE("2x2 R satisfies RᵀRΣ = I", "[recovery]") {
  Matrix r(2, 2);
  r << 2, 1, 0, 1;
  const Matrix expected = oracle::dense_inverse(r.transpose() * r);
  const Matrix s = recover_recursive(oracle::to_sparse(r));
  CHECK((r.transpose() * r * s - Matrix::Identity(2, 2)).norm() < 1e-14);
  CHECK(oracle::max_abs_diff(s, expected) < 1e-14);
  CHECK(oracle::max_abs_diff(recover_backsubstitution(oracle::to_sparse(r)), expected) < 1e-14);
}

TEST_CASE("random sparse R: baselines agree with the dense inverse", "[recovery]") {
  for (unsigned seed = 0; seed < 10; ++seed) {
    oracle::Rng rng(seed);
    const SparseMatrix r = oracle::random_upper(rng, 50, 0.05);
    const Matrix rd = r;
    const Matrix dense = oracle::dense_inverse(rd.transpose() * rd);
    const Matrix rec = recover_recursive(r);
    const Matrix back = recover_backsubstitution(r);
    CHECK(oracle::rel_error(rec, dense) < 1e-9);
    CHECK(oracle::rel_error(back, dense) < 1e-9);
    CHECK(oracle::rel_error(rec, back) < 1e-9);
    CHECK((rec - rec.transpose()).norm() == 0.0);
  }
}

TEST_CASE("zero diagonal in R is rejected", "[recovery]") {
  Matrix r = Matrix::Identity(3, 3);
  r(1, 1) = 0.0;
  r(0, 1) = 1.0;
  CHECK_THROWS_AS(recover_recursive(oracle::to_sparse(r)), RankDeficient);
  CHECK_THROWS_AS(recover_backsubstitution(oracle::to_sparse(r)), RankDeficient);
}

TEST_CASE("factorization-based recovery undoes the permutation", "[recovery]") {
  oracle::Rng rng(21);
  const StateLayout layout(oracle::random_keys(rng, 80));
  const Matrix lambda = oracle::random_information(rng, layout, 0.05);
  const SparseCholesky chol(oracle::to_sparse(lambda));
  const Matrix dense = oracle::dense_inverse(lambda);
  CHECK(oracle::rel_error(recover_recursive(chol), dense) < 1e-9);
  CHECK(oracle::rel_error(recover_backsubstitution(chol), dense) < 1e-9);

  const auto mb = marginals_backsubstitution(chol, layout);
  const auto mr = marginals_recursive(chol, layout);
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const VariableKey k[] = {layout.keys()[i]};
    const Matrix ref = oracle::dense_block(dense, layout, k, k);
    CHECK(oracle::rel_error(mb[i], ref) < 1e-9);
    CHECK(oracle::rel_error(mr[i], ref) < 1e-9);
  }
}

TEST_CASE("prior_columns", "[recovery]") {
  SECTION("all variables give the full covariance") {
    oracle::Rng rng(4);
    const StateLayout layout(oracle::random_keys(rng, 20));
    const Matrix lambda = oracle::random_information(rng, layout, 0.2);
    const SparseCholesky chol(oracle::to_sparse(lambda));
    const Matrix cols = prior_columns(chol, layout, layout.keys());
    CHECK(oracle::rel_error(cols, oracle::dense_inverse(lambda)) < 1e-10);
  }
  SECTION("diagonal information") {
    Matrix lambda = Matrix::Zero(2, 2);
    lambda(0, 0) = 1.0;
    lambda(1, 1) = 4.0;
    const SparseCholesky chol(oracle::to_sparse(lambda));
    const Index idx[] = {0};
    const Matrix c = prior_columns(chol, idx);
    CHECK(c(0, 0) == Catch::Approx(1.0));
    CHECK(c(1, 0) == 0.0);
    const SparseMatrix r = oracle::to_sparse(Matrix(lambda.cwiseSqrt()));
    CHECK(prior_columns(r, idx).isApprox(c));
  }
  SECTION("random 80x80 with five variables") {
    for (unsigned seed = 0; seed < 5; ++seed) {
      oracle::Rng rng(50 + seed);
      const StateLayout layout(oracle::random_keys(rng, 80));
      const Matrix lambda = oracle::random_information(rng, layout, 0.05);
      const SparseCholesky chol(oracle::to_sparse(lambda));
      const auto y = oracle::random_subset(rng, layout.keys(), 5);
      const Matrix cols = prior_columns(chol, layout, y);
      const Matrix dense = oracle::dense_inverse(lambda);
      CHECK(oracle::rel_error(cols, dense(Eigen::all, layout.scalar_indices(y))) < 1e-9);
    }
  }
}
