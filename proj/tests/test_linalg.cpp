#include <doctest.h>

#include <cmath>
#include <random>

#include "svperturb/linalg.hpp"

using namespace svperturb;

namespace {

DenseMatrix random_matrix(std::mt19937_64& rng, std::size_t m, std::size_t n) {
  std::normal_distribution<double> gauss;
  DenseMatrix A(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) A(i, j) = gauss(rng);
  }
  return A;
}

DenseMatrix random_symmetric(std::mt19937_64& rng, std::size_t n) {
  const DenseMatrix A = random_matrix(rng, n, n);
  return DenseMatrix::from_eigen(
      0.5 * (A.to_eigen() + A.to_eigen().transpose()));
}

DenseMatrix random_orthogonal(std::mt19937_64& rng, std::size_t n) {
  const EigenMatrix G = random_matrix(rng, n, n).to_eigen();
  Eigen::HouseholderQR<EigenMatrix> qr(G);
  return DenseMatrix::from_eigen(
      EigenMatrix(qr.householderQ() * EigenMatrix::Identity(n, n)));
}

}  // namespace

TEST_CASE("dense matrix construction rejects bad input") {
  CHECK_THROWS_AS(DenseMatrix(2, 2, {1.0, 2.0, 3.0}), DimensionMismatchError);
  CHECK_THROWS_AS(DenseMatrix(1, 2, {1.0, std::nan("")}), NonFiniteError);
  CHECK_THROWS_AS(DenseMatrix(0, 3), DimensionMismatchError);
}

TEST_CASE("sym_eig on the 2x2 swap matrix") {
  const DenseMatrix S(2, 2, {0.0, 1.0, 1.0, 0.0});
  const EigenDecomposition eig = sym_eig(S);
  CHECK(eig.eigenvalues[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(eig.eigenvalues[1] == doctest::Approx(-1.0).epsilon(1e-12));
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  // Up to sign; the first nonzero component is made non-negative.
  CHECK(std::abs(eig.eigenvectors(0, 0) - inv_sqrt2) < 1e-12);
  CHECK(std::abs(eig.eigenvectors(1, 0) - inv_sqrt2) < 1e-12);
  CHECK(std::abs(eig.eigenvectors(0, 1) - inv_sqrt2) < 1e-12);
  CHECK(std::abs(eig.eigenvectors(1, 1) + inv_sqrt2) < 1e-12);
}

TEST_CASE("sym_eig on the identity") {
  const EigenDecomposition eig = sym_eig(DenseMatrix::identity(4));
  for (double v : eig.eigenvalues) CHECK(v == doctest::Approx(1.0));
}

TEST_CASE("sym_eig reconstruction on random symmetric input") {
  std::mt19937_64 rng(11);
  const DenseMatrix S = random_symmetric(rng, 8);
  const EigenDecomposition eig = sym_eig(S);
  const EigenMatrix Q = eig.eigenvectors.to_eigen();
  EigenVector lambda(8);
  for (int i = 0; i < 8; ++i) lambda(i) = eig.eigenvalues[i];
  const EigenMatrix rebuilt = Q * lambda.asDiagonal() * Q.transpose();
  const double scale = 1.0 + operator_norm(S);
  CHECK((rebuilt - S.to_eigen()).cwiseAbs().maxCoeff() < 1e-9 * scale);
  CHECK(orthonormality_defect(eig.eigenvectors) < 1e-10);
}

TEST_CASE("sym_eig rejects asymmetry and non-square input") {
  CHECK_THROWS_AS(sym_eig(DenseMatrix(2, 3)), NonSymmetricError);
  DenseMatrix S(2, 2, {1.0, 0.5, 0.2, 1.0});
  CHECK_THROWS_AS(sym_eig(S), NonSymmetricError);
}

TEST_CASE("svd of diag(3,1)") {
  const DenseMatrix A(2, 2, {3.0, 0.0, 0.0, 1.0});
  const SvdDecomposition dec = svd(A);
  CHECK(dec.singular_values[0] == doctest::Approx(3.0));
  CHECK(dec.singular_values[1] == doctest::Approx(1.0));
  CHECK(std::abs(std::abs(dec.left_vectors(0, 0)) - 1.0) < 1e-12);
  CHECK(std::abs(std::abs(dec.right_vectors(1, 1)) - 1.0) < 1e-12);
}

TEST_CASE("svd of the zero matrix") {
  const SvdDecomposition dec = svd(DenseMatrix(3, 2));
  CHECK(dec.singular_values[0] == 0.0);
  CHECK(dec.singular_values[1] == 0.0);
}

TEST_CASE("svd of a rank-1 outer product") {
  // |u| = 2, |v| = 3 gives sigma_1 = 6.
  const std::vector<double> u = {2.0, 0.0, 0.0};
  const std::vector<double> v = {0.0, 3.0};
  DenseMatrix A(3, 2);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 2; ++j) A(i, j) = u[i] * v[j];
  }
  const SvdDecomposition dec = svd(A);
  CHECK(dec.singular_values[0] == doctest::Approx(6.0).epsilon(1e-12));
  CHECK(dec.singular_values[1] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("svd satisfies A v_i = sigma_i u_i") {
  std::mt19937_64 rng(5);
  const DenseMatrix A = random_matrix(rng, 9, 6);
  const SvdDecomposition dec = svd(A);
  const EigenMatrix Ae = A.to_eigen();
  const double scale = 1e-9 * (1.0 + dec.singular_values[0]);
  for (int i = 0; i < 6; ++i) {
    const EigenVector lhs = Ae * dec.right_vectors.to_eigen().col(i);
    const EigenVector rhs =
        dec.singular_values[i] * dec.left_vectors.to_eigen().col(i);
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() < scale);
  }
  CHECK(orthonormality_defect(dec.left_vectors) < 1e-10);
  CHECK(orthonormality_defect(dec.right_vectors) < 1e-10);
}

TEST_CASE("operator norm examples") {
  CHECK(operator_norm(DenseMatrix(2, 2, {3.0, 0.0, 0.0, 1.0})) ==
        doctest::Approx(3.0));
  CHECK(operator_norm(DenseMatrix(2, 2, {0.0, 1.0, 1.0, 0.0})) ==
        doctest::Approx(1.0));
  std::mt19937_64 rng(17);
  const DenseMatrix A = random_matrix(rng, 10, 7);
  const double direct = operator_norm(A);
  const double via_svd = svd(A).singular_values[0];
  CHECK(std::abs(direct - via_svd) < 1e-10 * via_svd);
}

TEST_CASE("orthonormality defect examples") {
  CHECK(orthonormality_defect(DenseMatrix::identity(3)) == 0.0);
  CHECK(orthonormality_defect(DenseMatrix(2, 1, {1.0, 0.0})) == 0.0);
  const DenseMatrix Q(2, 2, {1.0, 1.0, 0.0, 0.0});
  CHECK(orthonormality_defect(Q) == doctest::Approx(1.0));
}

TEST_CASE("eigenvalue magnitudes match singular values for symmetric input") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    const DenseMatrix S = random_symmetric(rng, 7);
    const EigenDecomposition eig = sym_eig(S);
    const SvdDecomposition dec = svd(S);
    std::vector<double> magnitudes;
    for (double v : eig.eigenvalues) magnitudes.push_back(std::abs(v));
    std::sort(magnitudes.rbegin(), magnitudes.rend());
    for (std::size_t i = 0; i < magnitudes.size(); ++i) {
      CHECK(std::abs(magnitudes[i] - dec.singular_values[i]) < 1e-9);
    }
  }
}

TEST_CASE("operator norm is unitarily invariant") {
  std::mt19937_64 rng(31);
  const DenseMatrix A = random_matrix(rng, 6, 4);
  const DenseMatrix Q = random_orthogonal(rng, 6);
  const DenseMatrix R = random_orthogonal(rng, 4);
  const DenseMatrix rotated = DenseMatrix::from_eigen(
      Q.to_eigen() * A.to_eigen() * R.to_eigen().transpose());
  CHECK(std::abs(operator_norm(rotated) - operator_norm(A)) < 1e-9);
}

TEST_CASE("decompositions are deterministic for identical input") {
  std::mt19937_64 rng(37);
  const DenseMatrix S = random_symmetric(rng, 6);
  const EigenDecomposition a = sym_eig(S);
  const EigenDecomposition b = sym_eig(S);
  CHECK(a.eigenvalues == b.eigenvalues);
  CHECK(a.eigenvectors == b.eigenvectors);

  const DenseMatrix A = random_matrix(rng, 6, 4);
  const SvdDecomposition s1 = svd(A);
  const SvdDecomposition s2 = svd(A);
  CHECK(s1.singular_values == s2.singular_values);
  CHECK(s1.left_vectors == s2.left_vectors);
  CHECK(s1.right_vectors == s2.right_vectors);
}

TEST_CASE("matrix csv round-trips at full precision") {
  std::mt19937_64 rng(41);
  const DenseMatrix A = random_matrix(rng, 4, 3);
  const std::string path = "test_matrix_roundtrip.csv";
  write_matrix_csv(A, path);
  const DenseMatrix B = read_matrix_csv(path);
  CHECK(A == B);
  std::remove(path.c_str());
}
