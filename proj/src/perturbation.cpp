#include "svperturb/perturbation.hpp"

#include <algorithm>
#include <cmath>

#include "svperturb/linalg.hpp"

namespace svperturb {

EmpiricalProjector empirical_projector(const DenseMatrix& B_tilde,
                                       const std::vector<std::size_t>& delta_k,
                                       std::size_t m, std::size_t k) {
  const EigenDecomposition eig = sym_eig(B_tilde);
  const std::size_t N = B_tilde.rows();
  if (m >= N) {
    throw DimensionMismatchError("empirical_projector: block split exceeds size");
  }
  if (delta_k.empty()) {
    throw IndexOutOfRangeError("empirical_projector: empty index set");
  }

  const EigenMatrix Q = eig.eigenvectors.to_eigen();
  EigenMatrix P = EigenMatrix::Zero(N, N);
  for (std::size_t idx : delta_k) {
    if (idx < 1 || idx > N) {
      throw IndexOutOfRangeError("empirical_projector: position " +
                                 std::to_string(idx) + " out of range");
    }
    if (!(eig.eigenvalues[idx - 1] > 0.0)) {
      throw IndexOutOfRangeError(
          "empirical_projector: position " + std::to_string(idx) +
          " does not land on a positive eigenvalue");
    }
    const auto q = Q.col(static_cast<Eigen::Index>(idx - 1));
    P.noalias() += q * q.transpose();
  }

  const std::size_t n = N - m;
  EmpiricalProjector out{k,
                         DenseMatrix::from_eigen(P),
                         DenseMatrix::from_eigen(2.0 * P.topLeftCorner(m, m)),
                         DenseMatrix::from_eigen(2.0 * P.topRightCorner(m, n)),
                         DenseMatrix::from_eigen(2.0 * P.bottomLeftCorner(n, m)),
                         DenseMatrix::from_eigen(2.0 * P.bottomRightCorner(n, n))};
  return out;
}

DenseMatrix linear_term(const DenseMatrix& Gamma, const ProjectorSet& projset,
                        std::size_t k) {
  const ClusterProjectors& c = projset.cluster(k);
  if (Gamma.rows() != c.P.rows() || Gamma.cols() != c.P.cols()) {
    throw DimensionMismatchError("linear_term: Gamma shape mismatch");
  }
  const EigenMatrix G = Gamma.to_eigen();
  const EigenMatrix P = c.P.to_eigen();
  const EigenMatrix C = c.C.to_eigen();
  EigenMatrix L = C * G * P;
  L += P * G * C;
  return DenseMatrix::from_eigen(L);
}

PerturbationSplit perturbation_split(const DenseMatrix& B,
                                     const DenseMatrix& Gamma,
                                     const ProjectorSet& projset,
                                     const SpectrumClustering& clustering,
                                     std::size_t k) {
  if (B.rows() != Gamma.rows() || B.cols() != Gamma.cols()) {
    throw DimensionMismatchError("perturbation_split: B/Gamma shape mismatch");
  }
  if (k < 1 || k > clustering.cluster_count()) {
    throw IndexOutOfRangeError("perturbation_split: cluster index");
  }
  const EigenMatrix Bt = B.to_eigen() + Gamma.to_eigen();
  const EmpiricalProjector emp = empirical_projector(
      DenseMatrix::from_eigen(Bt), clustering.index_sets[k - 1], projset.m, k);

  const DenseMatrix L = linear_term(Gamma, projset, k);
  const EigenMatrix S = emp.P_tilde.to_eigen() -
                        projset.cluster(k).P.to_eigen() - L.to_eigen();

  PerturbationSplit split{L, DenseMatrix::from_eigen(S), operator_norm(Gamma),
                          clustering.gaps[k - 1], false};
  split.in_regime = split.norm_gamma < split.gap / 2.0;
  return split;
}

SpectralDeviation weyl_deviation(const DenseMatrix& B,
                                 const DenseMatrix& B_tilde) {
  if (B.rows() != B_tilde.rows() || B.cols() != B_tilde.cols()) {
    throw DimensionMismatchError("weyl_deviation: shape mismatch");
  }
  // Only eigenvalues are needed on both sides.
  auto ascending_eigenvalues = [](const DenseMatrix& S) {
    if (S.rows() != S.cols()) {
      throw NonSymmetricError("weyl_deviation: matrix is not square");
    }
    const EigenMatrix M = S.to_eigen();
    const double scale = std::max(1.0, S.max_abs());
    if ((M - M.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
      throw NonSymmetricError("weyl_deviation: matrix is not symmetric");
    }
    Eigen::SelfAdjointEigenSolver<EigenMatrix> solver(0.5 * (M + M.transpose()),
                                                      Eigen::EigenvaluesOnly);
    return solver.eigenvalues();
  };
  const EigenVector eb = ascending_eigenvalues(B);
  const EigenVector et = ascending_eigenvalues(B_tilde);
  SpectralDeviation dev;
  const Eigen::Index N = eb.size();
  // Match by sorted rank; shifts are reported in descending-eigenvalue order.
  dev.shifts.resize(static_cast<std::size_t>(N));
  for (Eigen::Index j = 0; j < N; ++j) {
    dev.shifts[static_cast<std::size_t>(N - 1 - j)] = std::abs(et(j) - eb(j));
  }
  for (double s : dev.shifts) dev.max_shift = std::max(dev.max_shift, s);
  dev.gamma_norm = operator_norm(
      DenseMatrix::from_eigen(B_tilde.to_eigen() - B.to_eigen()));
  return dev;
}

double bilinear_form(const DenseMatrix& M, const std::vector<double>& x,
                     const std::vector<double>& y) {
  if (x.size() != M.rows() || y.size() != M.cols()) {
    throw DimensionMismatchError("bilinear_form: vector lengths");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < M.rows(); ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < M.cols(); ++j) row += M(i, j) * y[j];
    acc += x[i] * row;
  }
  return acc;
}

}  // namespace svperturb
