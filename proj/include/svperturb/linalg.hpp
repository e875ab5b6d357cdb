#pragma once

#include <vector>

#include "svperturb/dense_matrix.hpp"

namespace svperturb {

/// Symmetric eigendecomposition, eigenvalues sorted non-increasing.
/// Column j of `eigenvectors` pairs with `eigenvalues[j]`; each column is
/// unit-norm with its first nonzero component made non-negative, so the
/// output is deterministic up to the solver's own determinism.
struct EigenDecomposition {
  std::vector<double> eigenvalues;
  DenseMatrix eigenvectors;
};

/// Thin SVD, singular values sorted non-increasing.
/// left_vectors is m x min(m,n), right_vectors is n x min(m,n); the sign
/// convention is driven by the left vector (first nonzero component >= 0),
/// negating the pair together so A v_i = sigma_i u_i is preserved.
struct SvdDecomposition {
  std::vector<double> singular_values;
  DenseMatrix left_vectors;
  DenseMatrix right_vectors;
};

/// Eigendecomposition of a symmetric matrix.
/// Throws NonSymmetricError if max |S - S^T| exceeds 1e-12 * max(1, |S|_max).
EigenDecomposition sym_eig(const DenseMatrix& S);

SvdDecomposition svd(const DenseMatrix& A);

/// Largest singular value.
double operator_norm(const DenseMatrix& A);

/// |Q^T Q - I|_max, zero for matrices with orthonormal columns.
double orthonormality_defect(const DenseMatrix& Q);

namespace detail {
/// Flips signs in-place so the first exactly-nonzero component of each
/// column is non-negative. Used by both decompositions.
void fix_column_signs(EigenMatrix& m);
/// Same convention for a single vector.
void fix_vector_sign(EigenVector& v);
}  // namespace detail

}  // namespace svperturb
