#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "svperturb/dense_matrix.hpp"
#include "svperturb/linalg.hpp"

namespace svperturb {

/// Grouping of the positive singular values into clusters of numerically
/// equal values, with the spectral gap of each cluster.
///
/// Clusters are indexed 1..d in decreasing order of their representative
/// value mu_k (the mean of the merged singular values). Index sets use
/// 1-based singular-value positions. Values at or below rel_tol * sigma_1
/// count as zero and feed the zero eigenspace of the dilation, whose
/// multiplicity is m + n - 2 * (number of retained values).
struct SpectrumClustering {
  std::vector<double> distinct_values;            // mu_1 > ... > mu_d > 0
  std::vector<std::vector<std::size_t>> index_sets;  // Delta_k, 1-based
  std::vector<std::size_t> multiplicities;        // nu_k
  std::size_t zero_multiplicity = 0;              // nu_0
  std::vector<double> gaps;                       // gbar_k

  std::size_t cluster_count() const { return distinct_values.size(); }
  std::size_t rank() const {
    std::size_t r = 0;
    for (std::size_t nu : multiplicities) r += nu;
    return r;
  }
};

/// Spectral projectors of the dilation B = [[0, A], [A^T, 0]] for one
/// cluster: P onto the eigenspace of +mu_k, P_neg onto the eigenspace of
/// -mu_k, the four blocks of P scaled per P = (1/2) [[uu, uv], [vu, vv]],
/// and the reduced resolvent C = sum_{s != k} P_s / (mu_s - mu_k) taken
/// over signed clusters and, when present, the zero eigenspace.
struct ClusterProjectors {
  double mu = 0.0;
  double gap = 0.0;
  std::size_t multiplicity = 0;
  DenseMatrix P;
  DenseMatrix P_neg;
  DenseMatrix C;
  DenseMatrix block_uu;
  DenseMatrix block_uv;
  DenseMatrix block_vu;
  DenseMatrix block_vv;
};

struct ProjectorSet {
  std::size_t m = 0;
  std::size_t n = 0;
  std::vector<ClusterProjectors> clusters;     // index k-1 holds cluster k
  std::optional<DenseMatrix> P0;               // present iff nu_0 > 0

  const ClusterProjectors& cluster(std::size_t k) const;  // 1-based
};

/// The dilation map A -> [[0, A], [A^T, 0]]. Entry placement only, so the
/// result is exactly symmetric and the map is exactly linear.
DenseMatrix dilate(const DenseMatrix& A);

/// Eigenvector (u^T, sign * v^T)^T / sqrt(2) of the dilation for a singular
/// pair (u, v). Inputs must be unit norm to 1e-9.
std::vector<double> theta_from_uv(const std::vector<double>& u,
                                  const std::vector<double>& v, int sign);

/// Clusters a non-increasing, non-negative singular value array.
/// Adjacent values merge transitively when they differ by at most
/// rel_tol * sigma_1; values <= rel_tol * sigma_1 are dropped as zeros.
/// Gaps use cluster means; the single-cluster convention is gbar_1 = mu_1.
SpectrumClustering cluster_spectrum(const std::vector<double>& singular_values,
                                    std::size_t m, std::size_t n,
                                    double rel_tol);

constexpr double kDefaultClusterRelTol = 1e-8;

ProjectorSet build_projectors(const SvdDecomposition& decomposition,
                              const SpectrumClustering& clustering);

/// Spectral projector onto the eigenvalues of symmetric B strictly inside
/// the circle |eta - center| = radius, by trapezoidal quadrature of the
/// resolvent. This is an independent oracle for the eigendecomposition
/// route, not a production path. Complex solves run on the real
/// 2N-dimensional form of (B - eta I) with dense partial-pivot LU; a solve
/// with reciprocal condition below 1e-12 raises EigenvalueOnContourError.
DenseMatrix riesz_projector(const DenseMatrix& B, double center, double radius,
                            std::size_t nodes);

/// Writes each projector matrix as CSV into `directory` plus a
/// manifest.json listing k, nu_k, mu_k, gbar_k per cluster.
void write_projector_set(const ProjectorSet& set, const std::string& directory);

}  // namespace svperturb
