#pragma once

#include <cstddef>
#include <vector>

#include "svperturb/dense_matrix.hpp"

namespace svperturb::detail {

/// Singular triples of a dense matrix at the top `block` rank positions,
/// computed by warm-started subspace iteration on the Gram operator of the
/// smaller side. Intended for the replicate loops, where the warm start
/// (the unperturbed singular vectors) is a few iterations away from the
/// answer. Falls back to the full decomposition when iteration stalls, so
/// results are always trustworthy; `fallback_used` reports that.
struct TopBlockSvd {
  std::vector<double> sigma;  // block values, non-increasing
  EigenMatrix U;              // m x block
  EigenMatrix V;              // n x block
  bool fallback_used = false;
};

/// `warm_start` holds starting vectors for the smaller side (n-side columns
/// when m >= n, else m-side columns); missing columns are padded with a
/// fixed pseudo-random basis. Signs follow the same convention as svd():
/// first nonzero entry of each u non-negative, pairs flipped together.
TopBlockSvd top_block_svd(const EigenMatrix& A, std::size_t block,
                          const EigenMatrix& warm_start);

/// Largest singular value via the Gram matrix eigenvalues. Exact to
/// rounding for the top value and several times faster than a full SVD.
double spectral_norm_gram(const EigenMatrix& A);

/// Operator norms of P_tilde - P, L and S without forming the big matrices.
/// All three are symmetric with range inside span{theta_i, theta_tilde_i,
/// C Gamma theta_i}, so the norms come from compressions onto that span.
/// X is the m x n noise block; Theta and ThetaTilde hold the cluster
/// eigenvectors of the clean and noisy dilation as columns.
struct SplitNorms {
  double norm_L = 0.0;
  double norm_S = 0.0;
  double norm_Pdiff = 0.0;
};

SplitNorms split_norms_lowrank(const EigenMatrix& X, const EigenMatrix& Theta,
                               const EigenMatrix& ThetaTilde,
                               const EigenMatrix& C, std::size_t m);

}  // namespace svperturb::detail
