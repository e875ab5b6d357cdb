#include "svperturb/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <thread>

#include "cluster_svd.hpp"
#include "svperturb/dilation.hpp"
#include "svperturb/linalg.hpp"

namespace svperturb {

namespace {

double vec_norm(const std::vector<double>& x) {
  double s = 0.0;
  for (double e : x) s += e * e;
  return std::sqrt(s);
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void require_unit(const std::vector<double>& x, const char* who) {
  if (std::abs(vec_norm(x) - 1.0) > 1e-9) {
    throw NonUnitError(std::string(who) + ": vector is not unit norm");
  }
}

}  // namespace

AlignedEigenvector align_sign(const std::vector<double>& theta,
                              const std::vector<double>& reference) {
  if (theta.size() != reference.size()) {
    throw DimensionMismatchError("align_sign: length mismatch");
  }
  require_unit(theta, "align_sign");
  require_unit(reference, "align_sign");
  const double overlap = dot(theta, reference);
  AlignedEigenvector out;
  out.vector = theta;
  if (overlap < 0.0) {
    for (double& e : out.vector) e = -e;
    out.reference_overlap = -overlap;
  } else if (overlap > 0.0) {
    out.reference_overlap = overlap;
  } else {
    // Orthogonal tie: deterministic first-nonzero-positive convention.
    for (double e : out.vector) {
      if (e != 0.0) {
        if (e < 0.0) {
          for (double& f : out.vector) f = -f;
        }
        break;
      }
    }
    out.reference_overlap = 0.0;
  }
  return out;
}

BiasEstimate estimate_bias_two_sample(const std::vector<double>& theta1,
                                      const std::vector<double>& theta2,
                                      double gamma) {
  require_unit(theta1, "estimate_bias_two_sample");
  require_unit(theta2, "estimate_bias_two_sample");
  if (!(gamma > 0.0 && gamma < 1.0)) {
    throw std::invalid_argument("estimate_bias_two_sample: gamma outside (0,1)");
  }
  const double product = align_sign(theta2, theta1).reference_overlap;
  BiasEstimate out;
  // Cauchy-Schwarz keeps product <= 1 up to rounding; clamp the overshoot.
  out.b_tilde = std::clamp(product - 1.0, -1.0, 0.0);
  out.gamma = gamma;
  out.floor_active = std::sqrt(1.0 + out.b_tilde) < std::sqrt(gamma) / 2.0;
  return out;
}

std::vector<double> debias(const std::vector<double>& theta1,
                           const BiasEstimate& bias) {
  const double divisor = std::max(std::sqrt(1.0 + bias.b_tilde),
                                  std::sqrt(bias.gamma) / 2.0);
  std::vector<double> out = theta1;
  for (double& e : out) e /= divisor;
  return out;
}

BiasOracle bias_oracle_mc(const DenseMatrix& A, const NoiseModel& model,
                          std::size_t k, std::size_t replicates,
                          std::size_t threads) {
  if (A.rows() != model.m || A.cols() != model.n) {
    throw DimensionMismatchError("bias_oracle_mc: model dimensions");
  }
  if (replicates < 2) {
    throw InsufficientReplicatesError("bias_oracle_mc: replicates < 2");
  }
  const SvdDecomposition dec = svd(A);
  const SpectrumClustering clustering = cluster_spectrum(
      dec.singular_values, A.rows(), A.cols(), kDefaultClusterRelTol);
  if (k < 1 || k > clustering.cluster_count()) {
    throw IndexOutOfRangeError("bias_oracle_mc: cluster index");
  }
  if (clustering.multiplicities[k - 1] != 1) {
    throw MultiplicityNotOneError(
        "bias_oracle_mc: cluster has multiplicity > 1");
  }
  const std::size_t i_k = clustering.index_sets[k - 1][0];

  const EigenMatrix A_eig = A.to_eigen();
  const EigenMatrix U = dec.left_vectors.to_eigen();
  const EigenMatrix V = dec.right_vectors.to_eigen();
  const Eigen::Index p = static_cast<Eigen::Index>(i_k);
  const EigenMatrix warm =
      A.rows() >= A.cols() ? V.leftCols(p) : U.leftCols(p);

  EigenVector theta(A.rows() + A.cols());
  theta << U.col(p - 1), V.col(p - 1);
  theta /= std::numbers::sqrt2;

  std::vector<double> squared_overlap(replicates);
  auto worker = [&](std::size_t begin, std::size_t end) {
    for (std::size_t r = begin; r < end; ++r) {
      const DenseMatrix X = sample_noise(model, r);
      const EigenMatrix At = A_eig + X.to_eigen();
      const detail::TopBlockSvd top = detail::top_block_svd(At, i_k, warm);
      EigenVector theta_tilde(At.rows() + At.cols());
      theta_tilde << top.U.col(p - 1), top.V.col(p - 1);
      theta_tilde /= std::numbers::sqrt2;
      const double overlap = theta_tilde.dot(theta);  // sign-invariant squared
      squared_overlap[r] = overlap * overlap;
    }
  };
  if (threads <= 1) {
    worker(0, replicates);
  } else {
    const std::size_t used = std::min(threads, replicates);
    std::vector<std::thread> pool;
    const std::size_t chunk = (replicates + used - 1) / used;
    for (std::size_t t = 0; t < used; ++t) {
      const std::size_t begin = t * chunk;
      const std::size_t end = std::min(begin + chunk, replicates);
      if (begin < end) pool.emplace_back(worker, begin, end);
    }
    for (auto& th : pool) th.join();
  }

  // Sum in replicate order: identical result at any thread count.
  double sum = 0.0;
  for (double v : squared_overlap) sum += v;
  const double mean = sum / static_cast<double>(replicates);
  double ss = 0.0;
  for (double v : squared_overlap) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(replicates - 1));

  BiasOracle oracle;
  oracle.b_hat = mean - 1.0;
  oracle.std_error = sd / std::sqrt(static_cast<double>(replicates));
  oracle.replicates = replicates;
  return oracle;
}

double rho_diagnostic(const EmpiricalProjector& P_tilde, const DenseMatrix& P_k,
                      double b_k, const std::vector<double>& theta,
                      const std::vector<double>& x) {
  if (theta.size() != P_k.rows() || x.size() != P_k.rows()) {
    throw DimensionMismatchError("rho_diagnostic: vector lengths");
  }
  const double via_empirical = bilinear_form(P_tilde.P_tilde, x, theta);
  const double via_signal = bilinear_form(P_k, x, theta);
  return via_empirical - (1.0 + b_k) * via_signal;
}

double linf_error(const std::vector<double>& estimate,
                  const std::vector<double>& reference, double scale) {
  if (estimate.size() != reference.size()) {
    throw DimensionMismatchError("linf_error: length mismatch");
  }
  double m = 0.0;
  for (std::size_t i = 0; i < estimate.size(); ++i) {
    m = std::max(m, std::abs(estimate[i] - scale * reference[i]));
  }
  return m;
}

}  // namespace svperturb
