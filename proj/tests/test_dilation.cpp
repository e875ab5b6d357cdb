#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "svperturb/dilation.hpp"
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

}  // namespace

TEST_CASE("dilate places the blocks") {
  const DenseMatrix A(1, 1, {2.5});
  const DenseMatrix B = dilate(A);
  CHECK(B.rows() == 2);
  CHECK(B(0, 0) == 0.0);
  CHECK(B(0, 1) == 2.5);
  CHECK(B(1, 0) == 2.5);
  CHECK(B(1, 1) == 0.0);
}

TEST_CASE("dilation spectrum of diag(3,1) is {3,1,-1,-3}") {
  const DenseMatrix A(2, 2, {3.0, 0.0, 0.0, 1.0});
  const EigenDecomposition eig = sym_eig(dilate(A));
  const std::vector<double> expected = {3.0, 1.0, -1.0, -3.0};
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(eig.eigenvalues[i] == doctest::Approx(expected[i]).epsilon(1e-12));
  }
}

TEST_CASE("dilation of the zero matrix is zero with full null space") {
  const DenseMatrix B = dilate(DenseMatrix(2, 3));
  CHECK(B.rows() == 5);
  CHECK(B.max_abs() == 0.0);
}

TEST_CASE("dilate is exactly linear") {
  std::mt19937_64 rng(3);
  const DenseMatrix A = random_matrix(rng, 4, 3);
  const DenseMatrix X = random_matrix(rng, 4, 3);
  DenseMatrix sum(4, 3);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 3; ++j) sum(i, j) = A(i, j) + X(i, j);
  }
  const DenseMatrix lhs = dilate(sum);
  const DenseMatrix rhs = DenseMatrix::from_eigen(
      dilate(A).to_eigen() + dilate(X).to_eigen());
  CHECK(lhs == rhs);  // bitwise: dilation is entry placement
}

TEST_CASE("theta_from_uv stacks and normalizes") {
  const std::vector<double> u = {1.0, 0.0};
  const std::vector<double> v = {1.0};
  const auto plus = theta_from_uv(u, v, +1);
  const auto minus = theta_from_uv(u, v, -1);
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  CHECK(plus[0] == doctest::Approx(inv_sqrt2));
  CHECK(plus[1] == 0.0);
  CHECK(plus[2] == doctest::Approx(inv_sqrt2));
  CHECK(minus[2] == doctest::Approx(-inv_sqrt2));
  CHECK_THROWS_AS(theta_from_uv({2.0, 0.0}, v, 1), NonUnitError);
}

TEST_CASE("theta_from_uv builds dilation eigenvectors") {
  std::mt19937_64 rng(7);
  const DenseMatrix A = random_matrix(rng, 5, 4);
  const SvdDecomposition dec = svd(A);
  const EigenMatrix B = dilate(A).to_eigen();
  for (int i = 0; i < 4; ++i) {
    std::vector<double> u(5), v(4);
    for (int r = 0; r < 5; ++r) u[r] = dec.left_vectors(r, i);
    for (int r = 0; r < 4; ++r) v[r] = dec.right_vectors(r, i);
    const auto theta = theta_from_uv(u, v, +1);
    EigenVector t(9);
    for (int r = 0; r < 9; ++r) t(r) = theta[r];
    const EigenVector residual = B * t - dec.singular_values[i] * t;
    CHECK(residual.cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("cluster_spectrum merges ties and computes gaps") {
  const SpectrumClustering c = cluster_spectrum({3.0, 3.0, 1.0}, 3, 3, 0.0);
  CHECK(c.cluster_count() == 2);
  CHECK(c.index_sets[0] == std::vector<std::size_t>{1, 2});
  CHECK(c.index_sets[1] == std::vector<std::size_t>{3});
  CHECK(c.multiplicities[0] == 2);
  CHECK(c.multiplicities[1] == 1);
  CHECK(c.gaps[0] == doctest::Approx(2.0));
  CHECK(c.gaps[1] == doctest::Approx(1.0));
  CHECK(c.zero_multiplicity == 0);
}

TEST_CASE("cluster_spectrum single-cluster convention") {
  const SpectrumClustering c = cluster_spectrum({5.0}, 4, 4, 1e-8);
  CHECK(c.cluster_count() == 1);
  CHECK(c.gaps[0] == doctest::Approx(5.0));
  CHECK(c.zero_multiplicity == 6);
}

TEST_CASE("cluster_spectrum transitive merge within tolerance") {
  const SpectrumClustering c =
      cluster_spectrum({2.0 + 1e-13, 2.0, 1.0}, 3, 3, 1e-10);
  CHECK(c.cluster_count() == 2);
  CHECK(c.index_sets[0] == std::vector<std::size_t>{1, 2});
}

TEST_CASE("cluster_spectrum rejects an all-zero spectrum") {
  CHECK_THROWS_AS(cluster_spectrum({0.0, 0.0}, 2, 2, 1e-8), EmptySpectrumError);
}

TEST_CASE("projectors for diag(3,1)") {
  const DenseMatrix A(2, 2, {3.0, 0.0, 0.0, 1.0});
  const SvdDecomposition dec = svd(A);
  const SpectrumClustering clustering =
      cluster_spectrum(dec.singular_values, 2, 2, 1e-8);
  const ProjectorSet set = build_projectors(dec, clustering);
  CHECK(set.clusters.size() == 2);
  CHECK_FALSE(set.P0.has_value());

  // P_1 = theta_1 theta_1^T with theta_1 = (e_1, e_1)/sqrt(2).
  EigenVector theta = EigenVector::Zero(4);
  theta(0) = theta(2) = 1.0 / std::sqrt(2.0);
  const EigenMatrix expected = theta * theta.transpose();
  CHECK((set.cluster(1).P.to_eigen() - expected).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(set.cluster(1).P.to_eigen().trace() == doctest::Approx(1.0));

  // C_1 from its defining sum evaluated directly: the eigenvalues of the
  // dilation are {3, 1, -1, -3}, and each term carries 1/(mu_1 - mu_s).
  const EigenMatrix C_expected =
      set.cluster(1).P_neg.to_eigen() / (3.0 + 3.0) +
      set.cluster(2).P.to_eigen() / (3.0 - 1.0) +
      set.cluster(2).P_neg.to_eigen() / (3.0 + 1.0);
  CHECK((set.cluster(1).C.to_eigen() - C_expected).cwiseAbs().maxCoeff() <
        1e-12);
}

TEST_CASE("projector family is complete and mutually orthogonal") {
  std::mt19937_64 rng(13);
  const DenseMatrix A = random_matrix(rng, 6, 4);
  const SvdDecomposition dec = svd(A);
  const SpectrumClustering clustering =
      cluster_spectrum(dec.singular_values, 6, 4, 1e-8);
  const ProjectorSet set = build_projectors(dec, clustering);

  std::vector<EigenMatrix> family;
  for (std::size_t k = 1; k <= clustering.cluster_count(); ++k) {
    family.push_back(set.cluster(k).P.to_eigen());
    family.push_back(set.cluster(k).P_neg.to_eigen());
  }
  REQUIRE(set.P0.has_value());
  family.push_back(set.P0->to_eigen());

  EigenMatrix total = EigenMatrix::Zero(10, 10);
  for (std::size_t a = 0; a < family.size(); ++a) {
    total += family[a];
    for (std::size_t b = 0; b < family.size(); ++b) {
      const EigenMatrix prod = family[a] * family[b];
      const EigenMatrix expected = a == b ? family[a] : EigenMatrix::Zero(10, 10);
      CHECK((prod - expected).cwiseAbs().maxCoeff() < 1e-9);
    }
  }
  CHECK((total - EigenMatrix::Identity(10, 10)).cwiseAbs().maxCoeff() < 1e-9);

  for (std::size_t k = 1; k <= clustering.cluster_count(); ++k) {
    const auto& c = set.cluster(k);
    CHECK((c.C.to_eigen() * c.P.to_eigen()).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(operator_norm(c.C) <= 1.0 / c.gap + 1e-9);
  }
}

TEST_CASE("riesz projector matches the eigendecomposition route") {
  const DenseMatrix A(2, 2, {3.0, 0.0, 0.0, 1.0});
  const DenseMatrix B = dilate(A);
  const SvdDecomposition dec = svd(A);
  const SpectrumClustering clustering =
      cluster_spectrum(dec.singular_values, 2, 2, 1e-8);
  const ProjectorSet set = build_projectors(dec, clustering);
  const DenseMatrix contour = riesz_projector(B, 3.0, 1.0, 64);
  CHECK(max_abs_diff(contour, set.cluster(1).P) < 1e-8);
}

TEST_CASE("riesz projector of an empty contour is zero") {
  const DenseMatrix A(2, 2, {3.0, 0.0, 0.0, 1.0});
  const DenseMatrix empty = riesz_projector(dilate(A), 10.0, 1.0, 64);
  CHECK(empty.max_abs() < 1e-8);
}

TEST_CASE("riesz projector over the whole spectrum is the identity") {
  const DenseMatrix B(2, 2, {0.0, 1.0, 1.0, 0.0});
  const DenseMatrix P = riesz_projector(B, 0.0, 1.5, 64);
  CHECK(max_abs_diff(P, DenseMatrix::identity(2)) < 1e-8);
}

TEST_CASE("riesz projector flags a contour through the spectrum") {
  const DenseMatrix B(2, 2, {0.0, 1.0, 1.0, 0.0});
  // Eigenvalues are {1, -1}; radius 1 puts both on the contour.
  CHECK_THROWS_AS(riesz_projector(B, 0.0, 1.0, 64), EigenvalueOnContourError);
  CHECK_THROWS_AS(riesz_projector(B, 0.0, 1.5, 8), std::invalid_argument);
}

TEST_CASE("riesz projector agrees on random instances") {
  std::mt19937_64 rng(19);
  for (int trial = 0; trial < 10; ++trial) {
    const DenseMatrix A = random_matrix(rng, 5, 4);
    const SvdDecomposition dec = svd(A);
    const SpectrumClustering clustering =
        cluster_spectrum(dec.singular_values, 5, 4, 1e-8);
    const ProjectorSet set = build_projectors(dec, clustering);
    for (std::size_t k = 1; k <= clustering.cluster_count(); ++k) {
      const double gap = clustering.gaps[k - 1];
      if (gap < 1e-3) continue;
      const DenseMatrix contour = riesz_projector(
          dilate(A), clustering.distinct_values[k - 1], gap / 2.0, 64);
      CHECK(max_abs_diff(contour, set.cluster(k).P) < 1e-8);
    }
  }
}

TEST_CASE("dilation eigenvalue symmetry on random instances") {
  std::mt19937_64 rng(29);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t m = 3 + trial % 4, n = 2 + trial % 3;
    const DenseMatrix A = random_matrix(rng, m, n);
    const SvdDecomposition dec = svd(A);
    const EigenDecomposition eig = sym_eig(dilate(A));
    std::vector<double> expected;
    for (double s : dec.singular_values) {
      expected.push_back(s);
      expected.push_back(-s);
    }
    expected.resize(m + n, 0.0);
    std::sort(expected.rbegin(), expected.rend());
    for (std::size_t i = 0; i < m + n; ++i) {
      CHECK(std::abs(eig.eigenvalues[i] - expected[i]) < 1e-9);
    }
  }
}

TEST_CASE("projector set serializes with a manifest") {
  const DenseMatrix A(2, 2, {3.0, 0.0, 0.0, 1.0});
  const SvdDecomposition dec = svd(A);
  const SpectrumClustering clustering =
      cluster_spectrum(dec.singular_values, 2, 2, 1e-8);
  const ProjectorSet set = build_projectors(dec, clustering);
  const std::string dir = "test_projector_set";
  write_projector_set(set, dir);
  const DenseMatrix P1 = read_matrix_csv(dir + "/cluster_1_P.csv");
  CHECK(max_abs_diff(P1, set.cluster(1).P) == 0.0);
  std::filesystem::remove_all(dir);
}
