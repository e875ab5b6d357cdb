#include "cluster_svd.hpp"

#include <algorithm>
#include <cmath>

#include "svperturb/linalg.hpp"
#include "svperturb/noise.hpp"

namespace svperturb::detail {

namespace {

// Orientation fix matching linalg::svd: u's first nonzero entry >= 0.
void fix_pair_signs(EigenMatrix& U, EigenMatrix& V) {
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
}

TopBlockSvd from_full_svd(const EigenMatrix& A, std::size_t block) {
  Eigen::BDCSVD<EigenMatrix> solver(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
  TopBlockSvd out;
  out.fallback_used = true;
  const Eigen::Index b = static_cast<Eigen::Index>(block);
  out.U = solver.matrixU().leftCols(b);
  out.V = solver.matrixV().leftCols(b);
  out.sigma.assign(solver.singularValues().data(),
                   solver.singularValues().data() + b);
  fix_pair_signs(out.U, out.V);
  return out;
}

}  // namespace

TopBlockSvd top_block_svd(const EigenMatrix& A, std::size_t block,
                          const EigenMatrix& warm_start) {
  const Eigen::Index m = A.rows(), n = A.cols();
  const Eigen::Index small_side = std::min(m, n);
  const Eigen::Index p = static_cast<Eigen::Index>(block);
  if (p < 1 || p > small_side) {
    throw IndexOutOfRangeError("top_block_svd: block size out of range");
  }
  const bool iterate_v = m >= n;  // iterate on the smaller side

  EigenMatrix W(small_side, p);
  for (Eigen::Index j = 0; j < p; ++j) {
    if (j < warm_start.cols() && warm_start.rows() == small_side) {
      W.col(j) = warm_start.col(j);
    } else {
      const auto pad = gaussian_stream(
          0x73756273ull, static_cast<std::uint64_t>(j),
          static_cast<std::size_t>(small_side));
      for (Eigen::Index i = 0; i < small_side; ++i) W(i, j) = pad[i];
    }
  }
  {
    Eigen::HouseholderQR<EigenMatrix> qr(W);
    W = qr.householderQ() * EigenMatrix::Identity(small_side, p);
  }

  auto apply_gram = [&](const EigenMatrix& X) -> EigenMatrix {
    if (iterate_v) return A.transpose() * (A * X);
    return A * (A.transpose() * X);
  };

  // Convergence is judged on the invariant-subspace residual of the whole
  // block, not per column: Ritz rotation then splits the block, and within a
  // noise-split near-degenerate cluster the individual Ritz vectors inherit
  // accuracy residual / in-block-gap, which is all the downstream projector
  // and triple extraction need.
  constexpr int kMaxIters = 400;
  constexpr double kTol = 1e-12;
  EigenMatrix Z;            // Ritz block
  EigenVector ritz;         // Ritz values, descending
  bool converged = false;
  for (int iter = 0; iter < kMaxIters && !converged; ++iter) {
    const EigenMatrix Y = apply_gram(W);
    EigenMatrix H = W.transpose() * Y;  // = W^T G W, symmetric PSD
    H = 0.5 * (H + H.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<EigenMatrix> small(H);
    ritz.resize(p);
    EigenMatrix rot(p, p);
    for (Eigen::Index j = 0; j < p; ++j) {
      ritz(j) = small.eigenvalues()(p - 1 - j);
      rot.col(j) = small.eigenvectors().col(p - 1 - j);
    }
    const double lambda_max = std::max(ritz(0), 1e-300);
    const EigenMatrix R = Y - W * H;
    converged = true;
    for (Eigen::Index j = 0; j < p; ++j) {
      if (R.col(j).norm() > kTol * lambda_max) {
        converged = false;
        break;
      }
    }
    if (converged) {
      Z = W * rot;
    } else {
      Eigen::HouseholderQR<EigenMatrix> qr(Y);
      W = qr.householderQ() * EigenMatrix::Identity(small_side, p);
    }
  }
  if (!converged) {
    return from_full_svd(A, block);
  }

  TopBlockSvd out;
  out.sigma.resize(block);
  if (iterate_v) {
    out.V = Z;
    out.U.resize(m, p);
    for (Eigen::Index j = 0; j < p; ++j) {
      EigenVector w = A * Z.col(j);
      const double s = w.norm();
      out.sigma[static_cast<std::size_t>(j)] = s;
      out.U.col(j) = s > 0.0 ? EigenVector(w / s) : EigenVector::Unit(m, j);
    }
  } else {
    out.U = Z;
    out.V.resize(n, p);
    for (Eigen::Index j = 0; j < p; ++j) {
      EigenVector w = A.transpose() * Z.col(j);
      const double s = w.norm();
      out.sigma[static_cast<std::size_t>(j)] = s;
      out.V.col(j) = s > 0.0 ? EigenVector(w / s) : EigenVector::Unit(n, j);
    }
  }
  fix_pair_signs(out.U, out.V);
  return out;
}

SplitNorms split_norms_lowrank(const EigenMatrix& X, const EigenMatrix& Theta,
                               const EigenMatrix& ThetaTilde,
                               const EigenMatrix& C, std::size_t m) {
  const Eigen::Index N = Theta.rows();
  const Eigen::Index nu = Theta.cols();

  auto apply_gamma = [&](const EigenVector& w) {
    EigenVector out(N);
    out.head(static_cast<Eigen::Index>(m)) =
        X * w.tail(N - static_cast<Eigen::Index>(m));
    out.tail(N - static_cast<Eigen::Index>(m)) =
        X.transpose() * w.head(static_cast<Eigen::Index>(m));
    return out;
  };

  EigenMatrix W(N, nu);  // C Gamma theta_i
  for (Eigen::Index j = 0; j < nu; ++j) {
    W.col(j) = C * apply_gamma(Theta.col(j));
  }

  EigenMatrix span(N, 3 * nu);
  span << Theta, ThetaTilde, W;
  Eigen::HouseholderQR<EigenMatrix> qr(span);
  const EigenMatrix Q = qr.householderQ() * EigenMatrix::Identity(N, 3 * nu);

  EigenMatrix PdiffQ(N, 3 * nu), LQ(N, 3 * nu);
  for (Eigen::Index j = 0; j < 3 * nu; ++j) {
    const EigenVector q = Q.col(j);
    PdiffQ.col(j) = ThetaTilde * (ThetaTilde.transpose() * q) -
                    Theta * (Theta.transpose() * q);
    // L q = C Gamma P q + P Gamma C q
    LQ.col(j) = W * (Theta.transpose() * q) +
                Theta * (Theta.transpose() * apply_gamma(C * q));
  }
  const EigenMatrix Pdiff_small = Q.transpose() * PdiffQ;
  const EigenMatrix L_small = Q.transpose() * LQ;
  const EigenMatrix S_small = Pdiff_small - L_small;

  auto sym_norm = [](const EigenMatrix& M) {
    Eigen::SelfAdjointEigenSolver<EigenMatrix> eig(
        EigenMatrix(0.5 * (M + M.transpose())), Eigen::EigenvaluesOnly);
    return std::max(std::abs(eig.eigenvalues()(0)),
                    std::abs(eig.eigenvalues()(M.rows() - 1)));
  };
  SplitNorms norms;
  norms.norm_Pdiff = sym_norm(Pdiff_small);
  norms.norm_L = sym_norm(L_small);
  norms.norm_S = sym_norm(S_small);
  return norms;
}

double spectral_norm_gram(const EigenMatrix& A) {
  const bool tall = A.rows() >= A.cols();
  const Eigen::Index k = tall ? A.cols() : A.rows();
  EigenMatrix G = EigenMatrix::Zero(k, k);
  if (tall) {
    G.selfadjointView<Eigen::Lower>().rankUpdate(A.transpose());
  } else {
    G.selfadjointView<Eigen::Lower>().rankUpdate(A);
  }
  Eigen::SelfAdjointEigenSolver<EigenMatrix> eig(
      EigenMatrix(G.selfadjointView<Eigen::Lower>()), Eigen::EigenvaluesOnly);
  return std::sqrt(std::max(0.0, eig.eigenvalues()(k - 1)));
}

}  // namespace svperturb::detail
