#pragma once

#include <cstddef>
#include <vector>

#include "svperturb/dense_matrix.hpp"
#include "svperturb/noise.hpp"
#include "svperturb/perturbation.hpp"

namespace svperturb {

struct AlignedEigenvector {
  std::vector<double> vector;
  double reference_overlap = 0.0;  // <aligned, reference> >= 0
};

/// Two-sample bias estimate b_tilde = <theta1, theta2> - 1 in [-1, 0].
struct BiasEstimate {
  double b_tilde = 0.0;
  double gamma = 0.25;
  bool floor_active = false;  // sqrt(1 + b_tilde) < sqrt(gamma) / 2
};

/// Monte Carlo ground truth for b_k = E<theta_tilde, theta>^2 - 1.
struct BiasOracle {
  double b_hat = 0.0;
  double std_error = 0.0;
  std::size_t replicates = 0;
};

/// Returns theta or -theta, whichever overlaps the reference non-negatively.
/// An exactly zero overlap falls back to the first-nonzero-positive rule so
/// the operation is total and idempotent.
AlignedEigenvector align_sign(const std::vector<double>& theta,
                              const std::vector<double>& reference);

/// b_tilde from two independently observed eigenvectors; theta2 is aligned
/// against theta1 before the inner product, matching the convention that
/// the product is non-negative.
BiasEstimate estimate_bias_two_sample(const std::vector<double>& theta1,
                                      const std::vector<double>& theta2,
                                      double gamma);

/// theta1 / max(sqrt(1 + b_tilde), sqrt(gamma)/2). Output norm lies in
/// [1, 2/sqrt(gamma)] for unit input.
std::vector<double> debias(const std::vector<double>& theta1,
                           const BiasEstimate& bias);

/// Estimates b_k by Monte Carlo over `replicates` noise draws. The cluster
/// must have multiplicity 1. Per-replicate terms are computed independently
/// (parallelizable) and summed in replicate order.
BiasOracle bias_oracle_mc(const DenseMatrix& A, const NoiseModel& model,
                          std::size_t k, std::size_t replicates,
                          std::size_t threads = 1);

/// rho_k(x) = <(P_tilde - (1 + b_k) P_k) theta, x>.
double rho_diagnostic(const EmpiricalProjector& P_tilde, const DenseMatrix& P_k,
                      double b_k, const std::vector<double>& theta,
                      const std::vector<double>& x);

/// |estimate - scale * reference|_inf.
double linf_error(const std::vector<double>& estimate,
                  const std::vector<double>& reference, double scale);

}  // namespace svperturb
