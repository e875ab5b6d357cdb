#include "svperturb/linalg.hpp"

#include <algorithm>
#include <cmath>

namespace svperturb {

namespace detail {

void fix_vector_sign(EigenVector& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (v(i) != 0.0) {
      if (v(i) < 0.0) v = -v;
      return;
    }
  }
}

void fix_column_signs(EigenMatrix& m) {
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      if (m(i, j) != 0.0) {
        if (m(i, j) < 0.0) m.col(j) = -m.col(j);
        break;
      }
    }
  }
}

}  // namespace detail

EigenDecomposition sym_eig(const DenseMatrix& S) {
  if (S.rows() != S.cols()) {
    throw NonSymmetricError("sym_eig: matrix is not square");
  }
  const EigenMatrix M = S.to_eigen();
  const double scale = std::max(1.0, S.max_abs());
  const double asym = (M - M.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-12 * scale) {
    throw NonSymmetricError("sym_eig: asymmetry " + std::to_string(asym) +
                            " exceeds tolerance");
  }

  Eigen::SelfAdjointEigenSolver<EigenMatrix> solver(
      0.5 * (M + M.transpose()));
  if (solver.info() != Eigen::Success) {
    throw NumericError("sym_eig: eigensolver did not converge");
  }

  // Eigen returns ascending order; flip to non-increasing.
  const Eigen::Index n = M.rows();
  EigenMatrix vectors(n, n);
  std::vector<double> values(static_cast<std::size_t>(n));
  for (Eigen::Index j = 0; j < n; ++j) {
    values[static_cast<std::size_t>(j)] = solver.eigenvalues()(n - 1 - j);
    vectors.col(j) = solver.eigenvectors().col(n - 1 - j);
  }
  detail::fix_column_signs(vectors);
  return {std::move(values), DenseMatrix::from_eigen(vectors)};
}

SvdDecomposition svd(const DenseMatrix& A) {
  Eigen::BDCSVD<EigenMatrix> solver(A.to_eigen(),
                                    Eigen::ComputeThinU | Eigen::ComputeThinV);
  EigenMatrix U = solver.matrixU();
  EigenMatrix V = solver.matrixV();
  // The pair (u_i, v_i) flips together, driven by u_i's first nonzero entry.
  for (Eigen::Index j = 0; j < U.cols(); ++j) {
    for (Eigen::Index i = 0; i < U.rows(); ++i) {
      if (U(i, j) != 0.0) {
        if (U(i, j) < 0.0) {
          U.col(j) = -U.col(j);
          V.col(j) = -V.col(j);
        }
        break;
      }
    }
  }
  std::vector<double> values(solver.singularValues().data(),
                             solver.singularValues().data() +
                                 solver.singularValues().size());
  return {std::move(values), DenseMatrix::from_eigen(U),
          DenseMatrix::from_eigen(V)};
}

double operator_norm(const DenseMatrix& A) {
  const EigenMatrix M = A.to_eigen();
  if (A.rows() == A.cols()) {
    // For symmetric input the largest singular value is max |eigenvalue|,
    // and the symmetric solver is several times cheaper than a full SVD.
    const double scale = std::max(1.0, A.max_abs());
    if ((M - M.transpose()).cwiseAbs().maxCoeff() <= 1e-14 * scale) {
      Eigen::SelfAdjointEigenSolver<EigenMatrix> eig(0.5 * (M + M.transpose()),
                                                     Eigen::EigenvaluesOnly);
      return std::max(std::abs(eig.eigenvalues()(0)),
                      std::abs(eig.eigenvalues()(M.rows() - 1)));
    }
  }
  Eigen::BDCSVD<EigenMatrix> solver(M);
  return solver.singularValues()(0);
}

double orthonormality_defect(const DenseMatrix& Q) {
  const EigenMatrix M = Q.to_eigen();
  const EigenMatrix G = M.transpose() * M;
  return (G - EigenMatrix::Identity(G.rows(), G.cols()))
      .cwiseAbs()
      .maxCoeff();
}

}  // namespace svperturb
