#include <catch_amalgamated.hpp>

#include <Eigen/Cholesky>

#include "covplan/errors.hpp"
#include "covplan/oracle/dense.hpp"
#include "covplan/sparse_cholesky.hpp"

using namespace covplan;

namespace {

Matrix permuted(const Matrix& lambda, const std::vector<int>& perm) {
  const Index n = lambda.rows();
  Matrix out(n, n);
  for (Index a = 0; a < n; ++a)
    for (Index b = 0; b < n; ++b) out(a, b) = lambda(perm[a], perm[b]);
  return out;
}

std::vector<int> identity_order(Index n) {
  std::vector<int> p(n);
  for (Index i = 0; i < n; ++i) p[i] = static_cast<int>(i);
  return p;
}

}  // namespace

TEST_CASE("identity factorizes to identity", "[cholesky]") {
  const Matrix eye = Matrix::Identity(5, 5);
  const SparseCholesky chol(oracle::to_sparse(eye));
  CHECK(dense_upper(chol).isApprox(eye));
}

TEST_CASE("2x2 hand example", "[cholesky]") {
  Matrix lambda(2, 2);
  lambda << 4, 2, 2, 2;
  const SparseCholesky chol(oracle::to_sparse(lambda), identity_order(2));
  Matrix expected(2, 2);
  expected << 2, 1, 0, 1;
  CHECK(dense_upper(chol).isApprox(expected, 1e-15));
}

TEST_CASE("random sparse SPD reproduces the permuted matrix", "[cholesky]") {
  for (int seed = 0; seed < 10; ++seed) {
    oracle::Rng rng(seed);
    const auto keys = oracle::random_keys(rng, 100);
    const StateLayout layout(keys);
    const Matrix lambda = oracle::random_information(rng, layout, 0.02);
    const SparseCholesky chol(oracle::to_sparse(lambda));
    const Matrix r = dense_upper(chol);
    CHECK(r.isUpperTriangular());
    const Matrix p = permuted(lambda, chol.permutation());
    CHECK((r.transpose() * r - p).norm() / lambda.norm() < 1e-10);
    // dense oracle
    const Matrix dense_r = Eigen::LLT<Matrix>(p).matrixU();
    CHECK((dense_r - r).norm() / dense_r.norm() < 1e-10);
  }
}

TEST_CASE("fill-reducing ordering beats natural order on an arrow matrix", "[cholesky]") {
  const Index n = 60;
  Matrix lambda = Matrix::Identity(n, n) * 4.0;
  for (Index i = 1; i < n; ++i) lambda(0, i) = lambda(i, 0) = 0.1;
  const SparseCholesky natural(oracle::to_sparse(lambda), identity_order(n));
  const SparseCholesky amd(oracle::to_sparse(lambda));
  CHECK(amd.nonzeros() < natural.nonzeros());
  CHECK(amd.nonzeros() <= 2 * n);
}

TEST_CASE("solve and log-determinant", "[cholesky]") {
  oracle::Rng rng(3);
  const StateLayout layout(oracle::random_keys(rng, 40));
  const Matrix lambda = oracle::random_information(rng, layout, 0.1);
  const SparseCholesky chol(oracle::to_sparse(lambda));
  const Vector b = oracle::random_matrix(rng, 40, 1);
  CHECK((lambda * chol.solve(b) - b).norm() < 1e-9 * b.norm() * lambda.norm());
  CHECK(chol.log_determinant() == Catch::Approx(oracle::log_det(lambda)).epsilon(1e-12));
}

TEST_CASE("non-PD pivot reports its index", "[cholesky]") {
  Matrix lambda = Matrix::Identity(4, 4);
  lambda(2, 2) = 0.0;
  try {
    SparseCholesky chol(oracle::to_sparse(lambda), {3, 2, 1, 0});
    FAIL("expected failure");
  } catch (const NotPositiveDefinite& e) {
    CHECK(e.pivot() == 1);
    CHECK(e.original_index() == 2);
  }
  Matrix indefinite(2, 2);
  indefinite << 1, 2, 2, 1;
  CHECK_THROWS_AS(SparseCholesky(oracle::to_sparse(indefinite)), NotPositiveDefinite);
}
