#pragma once

#include <cstddef>
#include <vector>

#include "svperturb/dense_matrix.hpp"
#include "svperturb/dilation.hpp"

namespace svperturb {

/// Projector built from eigenvectors of a noisy dilation at the sorted
/// positions Delta_k, with its four half-scaled blocks, i.e.
/// P = (1/2) [[uu, uv], [vu, vv]].
struct EmpiricalProjector {
  std::size_t k = 0;
  DenseMatrix P_tilde;
  DenseMatrix blocks_uu;
  DenseMatrix blocks_uv;
  DenseMatrix blocks_vu;
  DenseMatrix blocks_vv;
};

/// Exact decomposition P_tilde - P = L + S of one cluster's projector
/// perturbation. L is the first-order term C Gamma P + P Gamma C; S is
/// defined by subtraction, which makes the identity hold to rounding.
struct PerturbationSplit {
  DenseMatrix L;
  DenseMatrix S;
  double norm_gamma = 0.0;
  double gap = 0.0;
  bool in_regime = false;  // |Gamma| < gap / 2
};

/// Weyl comparison of the sorted spectra of two symmetric matrices.
struct SpectralDeviation {
  std::vector<double> shifts;  // |lambda_j(B_tilde) - lambda_j(B)| per j
  double max_shift = 0.0;
  double gamma_norm = 0.0;  // |B_tilde - B|
};

/// Projector onto the eigenvectors of symmetric B_tilde at 1-based rank
/// positions delta_k (eigenvalues sorted non-increasing; every selected
/// eigenvalue must be positive). `m` gives the row split for the blocks.
EmpiricalProjector empirical_projector(const DenseMatrix& B_tilde,
                                       const std::vector<std::size_t>& delta_k,
                                       std::size_t m, std::size_t k = 0);

/// L_k(Gamma) = C_k Gamma P_k + P_k Gamma C_k.
DenseMatrix linear_term(const DenseMatrix& Gamma, const ProjectorSet& projset,
                        std::size_t k);

/// Splits P_tilde_k - P_k into the linear term and the remainder for
/// B = dilation of the signal and Gamma = dilation of the noise.
PerturbationSplit perturbation_split(const DenseMatrix& B,
                                     const DenseMatrix& Gamma,
                                     const ProjectorSet& projset,
                                     const SpectrumClustering& clustering,
                                     std::size_t k);

SpectralDeviation weyl_deviation(const DenseMatrix& B,
                                 const DenseMatrix& B_tilde);

/// x^T M y.
double bilinear_form(const DenseMatrix& M, const std::vector<double>& x,
                     const std::vector<double>& y);

}  // namespace svperturb
