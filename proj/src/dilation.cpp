#include "svperturb/dilation.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include <nlohmann/json.hpp>

namespace svperturb {

const ClusterProjectors& ProjectorSet::cluster(std::size_t k) const {
  if (k < 1 || k > clusters.size()) {
    throw IndexOutOfRangeError("cluster index " + std::to_string(k) +
                               " outside 1.." + std::to_string(clusters.size()));
  }
  return clusters[k - 1];
}

DenseMatrix dilate(const DenseMatrix& A) {
  const std::size_t m = A.rows(), n = A.cols();
  DenseMatrix B(m + n, m + n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double v = A(i, j);
      B(i, m + j) = v;
      B(m + j, i) = v;
    }
  }
  return B;
}

std::vector<double> theta_from_uv(const std::vector<double>& u,
                                  const std::vector<double>& v, int sign) {
  auto norm = [](const std::vector<double>& x) {
    double s = 0.0;
    for (double e : x) s += e * e;
    return std::sqrt(s);
  };
  if (std::abs(norm(u) - 1.0) > 1e-9 || std::abs(norm(v) - 1.0) > 1e-9) {
    throw NonUnitError("theta_from_uv: inputs must be unit vectors");
  }
  const double inv_sqrt2 = 1.0 / std::numbers::sqrt2;
  const double s = sign >= 0 ? 1.0 : -1.0;
  std::vector<double> theta;
  theta.reserve(u.size() + v.size());
  for (double e : u) theta.push_back(e * inv_sqrt2);
  for (double e : v) theta.push_back(s * e * inv_sqrt2);
  return theta;
}

SpectrumClustering cluster_spectrum(const std::vector<double>& singular_values,
                                    std::size_t m, std::size_t n,
                                    double rel_tol) {
  if (singular_values.empty()) {
    throw EmptySpectrumError("cluster_spectrum: no singular values");
  }
  for (std::size_t i = 0; i < singular_values.size(); ++i) {
    if (singular_values[i] < 0.0) {
      throw std::invalid_argument("cluster_spectrum: negative singular value");
    }
    if (i > 0 && singular_values[i] > singular_values[i - 1]) {
      throw std::invalid_argument("cluster_spectrum: input not non-increasing");
    }
  }
  const double threshold = rel_tol * singular_values[0];
  std::vector<std::size_t> kept;  // 1-based indices of above-threshold values
  for (std::size_t i = 0; i < singular_values.size(); ++i) {
    if (singular_values[i] > threshold && singular_values[i] > 0.0) {
      kept.push_back(i + 1);
    }
  }
  if (kept.empty()) {
    throw EmptySpectrumError("cluster_spectrum: all singular values are zero");
  }

  SpectrumClustering out;
  // Transitive merge: a new cluster starts when the gap to the previous
  // retained value exceeds the threshold.
  std::vector<std::size_t> current{kept[0]};
  auto flush = [&](const std::vector<std::size_t>& group) {
    double mean = 0.0;
    for (std::size_t idx : group) mean += singular_values[idx - 1];
    mean /= static_cast<double>(group.size());
    out.distinct_values.push_back(mean);
    out.index_sets.push_back(group);
    out.multiplicities.push_back(group.size());
  };
  for (std::size_t pos = 1; pos < kept.size(); ++pos) {
    const double prev = singular_values[kept[pos - 1] - 1];
    const double cur = singular_values[kept[pos] - 1];
    if (prev - cur <= threshold) {
      current.push_back(kept[pos]);
    } else {
      flush(current);
      current = {kept[pos]};
    }
  }
  flush(current);

  const std::size_t r = out.rank();
  if (m + n < 2 * r) {
    throw DimensionMismatchError("cluster_spectrum: rank exceeds (m+n)/2");
  }
  out.zero_multiplicity = m + n - 2 * r;

  const std::size_t d = out.cluster_count();
  out.gaps.resize(d);
  const auto& mu = out.distinct_values;
  for (std::size_t k = 0; k < d; ++k) {
    if (d == 1) {
      out.gaps[k] = mu[0];
    } else if (k == 0) {
      out.gaps[k] = mu[0] - mu[1];
    } else if (k + 1 == d) {
      out.gaps[k] = std::min(mu[k - 1] - mu[k], mu[k]);
    } else {
      out.gaps[k] = std::min(mu[k - 1] - mu[k], mu[k] - mu[k + 1]);
    }
  }
  return out;
}

ProjectorSet build_projectors(const SvdDecomposition& decomposition,
                              const SpectrumClustering& clustering) {
  const std::size_t m = decomposition.left_vectors.rows();
  const std::size_t n = decomposition.right_vectors.rows();
  const std::size_t rank_bound = decomposition.singular_values.size();
  const std::size_t r = clustering.rank();
  if (clustering.zero_multiplicity != m + n - 2 * r) {
    throw DimensionMismatchError(
        "build_projectors: clustering zero multiplicity inconsistent with "
        "factor dimensions");
  }

  const EigenMatrix U = decomposition.left_vectors.to_eigen();
  const EigenMatrix V = decomposition.right_vectors.to_eigen();
  const std::size_t d = clustering.cluster_count();
  const std::size_t N = m + n;

  ProjectorSet set;
  set.m = m;
  set.n = n;
  set.clusters.reserve(d);

  std::vector<EigenMatrix> P_pos, P_neg;
  for (std::size_t k = 0; k < d; ++k) {
    EigenMatrix uu = EigenMatrix::Zero(m, m);
    EigenMatrix uv = EigenMatrix::Zero(m, n);
    EigenMatrix vv = EigenMatrix::Zero(n, n);
    for (std::size_t idx : clustering.index_sets[k]) {
      if (idx < 1 || idx > rank_bound) {
        throw DimensionMismatchError("build_projectors: cluster index out of "
                                     "range of the decomposition");
      }
      const auto u = U.col(static_cast<Eigen::Index>(idx - 1));
      const auto v = V.col(static_cast<Eigen::Index>(idx - 1));
      uu.noalias() += u * u.transpose();
      uv.noalias() += u * v.transpose();
      vv.noalias() += v * v.transpose();
    }
    EigenMatrix P(N, N), Pn(N, N);
    P.topLeftCorner(m, m) = 0.5 * uu;
    P.topRightCorner(m, n) = 0.5 * uv;
    P.bottomLeftCorner(n, m) = 0.5 * uv.transpose();
    P.bottomRightCorner(n, n) = 0.5 * vv;
    Pn.topLeftCorner(m, m) = 0.5 * uu;
    Pn.topRightCorner(m, n) = -0.5 * uv;
    Pn.bottomLeftCorner(n, m) = -0.5 * uv.transpose();
    Pn.bottomRightCorner(n, n) = 0.5 * vv;
    P_pos.push_back(P);
    P_neg.push_back(Pn);

    ClusterProjectors cp{clustering.distinct_values[k],
                         clustering.gaps[k],
                         clustering.multiplicities[k],
                         DenseMatrix::from_eigen(P),
                         DenseMatrix::from_eigen(Pn),
                         DenseMatrix(N, N),
                         DenseMatrix::from_eigen(uu),
                         DenseMatrix::from_eigen(uv),
                         DenseMatrix::from_eigen(EigenMatrix(uv.transpose())),
                         DenseMatrix::from_eigen(vv)};
    set.clusters.push_back(std::move(cp));
  }

  EigenMatrix P0;
  if (clustering.zero_multiplicity > 0) {
    P0 = EigenMatrix::Identity(N, N);
    for (std::size_t k = 0; k < d; ++k) P0 -= P_pos[k] + P_neg[k];
    set.P0 = DenseMatrix::from_eigen(P0);
  }

  // C_k sums every other signed cluster plus the zero eigenspace, with
  // denominators (mu_k - mu_s) so that C Gamma P + P Gamma C is the
  // first-order projector perturbation and the remainder stays quadratic.
  for (std::size_t k = 0; k < d; ++k) {
    const double mu_k = clustering.distinct_values[k];
    EigenMatrix C = EigenMatrix::Zero(N, N);
    for (std::size_t s = 0; s < d; ++s) {
      const double mu_s = clustering.distinct_values[s];
      if (s != k) C += P_pos[s] / (mu_k - mu_s);
      C += P_neg[s] / (mu_k + mu_s);
    }
    if (clustering.zero_multiplicity > 0) C += P0 / mu_k;
    set.clusters[k].C = DenseMatrix::from_eigen(C);
  }
  return set;
}

DenseMatrix riesz_projector(const DenseMatrix& B, double center, double radius,
                            std::size_t nodes) {
  if (B.rows() != B.cols()) {
    throw NonSymmetricError("riesz_projector: matrix is not square");
  }
  if (nodes < 16) {
    throw std::invalid_argument("riesz_projector: nodes must be >= 16");
  }
  if (radius <= 0.0) {
    throw std::invalid_argument("riesz_projector: radius must be positive");
  }

  const Eigen::Index N = static_cast<Eigen::Index>(B.rows());
  const EigenMatrix M = B.to_eigen();

  // P = -(1/2pi) * integral over [0, 2pi) of (B - eta I)^{-1} r e^{i phi},
  // eta = center + r e^{i phi}. The trapezoidal rule is spectrally accurate
  // here because the integrand is periodic and analytic near the circle.
  // Each complex solve is realified: for eta = a + ib,
  //   [[B - aI, bI], [-bI, B - aI]] [X; Y] = [I; 0]  gives  (B-etaI)^{-1} = X + iY.
  EigenMatrix acc_real = EigenMatrix::Zero(N, N);
  EigenMatrix big(2 * N, 2 * N);
  EigenMatrix rhs = EigenMatrix::Zero(2 * N, N);
  rhs.topRows(N) = EigenMatrix::Identity(N, N);

  for (std::size_t node = 0; node < nodes; ++node) {
    const double phi =
        2.0 * std::numbers::pi * static_cast<double>(node) / nodes;
    const double a = center + radius * std::cos(phi);
    const double b = radius * std::sin(phi);

    big.topLeftCorner(N, N) = M - a * EigenMatrix::Identity(N, N);
    big.topRightCorner(N, N) = b * EigenMatrix::Identity(N, N);
    big.bottomLeftCorner(N, N) = -b * EigenMatrix::Identity(N, N);
    big.bottomRightCorner(N, N) = big.topLeftCorner(N, N);

    Eigen::PartialPivLU<EigenMatrix> lu(big);
    if (lu.rcond() < 1e-12) {
      throw EigenvalueOnContourError(
          "riesz_projector: resolvent solve ill-conditioned; an eigenvalue "
          "lies on or near the contour");
    }
    const EigenMatrix sol = lu.solve(rhs);
    const auto X = sol.topRows(N);     // real part of the resolvent
    const auto Y = sol.bottomRows(N);  // imaginary part

    // real part of R(eta) * r * e^{i phi}
    acc_real += radius * (std::cos(phi) * X - std::sin(phi) * Y);
  }
  EigenMatrix P = -acc_real / static_cast<double>(nodes);
  P = 0.5 * (P + P.transpose()).eval();
  return DenseMatrix::from_eigen(P);
}

void write_projector_set(const ProjectorSet& set,
                         const std::string& directory) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(directory, ec);
  if (ec) throw IoError("cannot create directory: " + directory);

  nlohmann::json manifest;
  manifest["m"] = set.m;
  manifest["n"] = set.n;
  std::size_t nu0 = set.m + set.n;
  for (const auto& c : set.clusters) nu0 -= 2 * c.multiplicity;
  manifest["zero_multiplicity"] = nu0;
  manifest["clusters"] = nlohmann::json::array();
  for (std::size_t k = 1; k <= set.clusters.size(); ++k) {
    const auto& c = set.clusters[k - 1];
    const std::string stem = "cluster_" + std::to_string(k);
    write_matrix_csv(c.P, directory + "/" + stem + "_P.csv");
    write_matrix_csv(c.P_neg, directory + "/" + stem + "_Pneg.csv");
    write_matrix_csv(c.C, directory + "/" + stem + "_C.csv");
    write_matrix_csv(c.block_uu, directory + "/" + stem + "_uu.csv");
    write_matrix_csv(c.block_uv, directory + "/" + stem + "_uv.csv");
    write_matrix_csv(c.block_vu, directory + "/" + stem + "_vu.csv");
    write_matrix_csv(c.block_vv, directory + "/" + stem + "_vv.csv");
    manifest["clusters"].push_back({{"k", k},
                                    {"nu", c.multiplicity},
                                    {"mu", c.mu},
                                    {"gap", c.gap}});
  }
  if (set.P0) {
    write_matrix_csv(*set.P0, directory + "/P0.csv");
  }
  std::ofstream out(directory + "/manifest.json");
  if (!out) throw IoError("cannot write manifest in " + directory);
  out << manifest.dump(2) << "\n";
}

}  // namespace svperturb
