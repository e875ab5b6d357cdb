#include "svperturb/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <thread>

#include "cluster_svd.hpp"
#include "svperturb/experiments.hpp"
#include "svperturb/linalg.hpp"
#include "svperturb/perturbation.hpp"

namespace svperturb {

namespace {

using clock_type = std::chrono::steady_clock;

double elapsed(clock_type::time_point start) {
  return std::chrono::duration<double>(clock_type::now() - start).count();
}

std::string fmt(double v) {
  std::ostringstream out;
  out.precision(4);
  out << v;
  return out.str();
}

void simple_parallel(std::size_t count, std::size_t threads,
                     const std::function<void(std::size_t, std::size_t)>& body) {
  if (threads <= 1 || count <= 1) {
    body(0, count);
    return;
  }
  const std::size_t used = std::min(threads, count);
  const std::size_t chunk = (count + used - 1) / used;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < used; ++t) {
    const std::size_t begin = t * chunk;
    const std::size_t end = std::min(begin + chunk, count);
    if (begin < end) pool.emplace_back([&body, begin, end] { body(begin, end); });
  }
  for (auto& th : pool) th.join();
}

DenseMatrix random_orthogonal_signal(std::mt19937_64& rng,
                                     const std::vector<double>& spectrum,
                                     std::size_t m, std::size_t n) {
  std::normal_distribution<double> gauss;
  EigenMatrix Gu(m, spectrum.size()), Gv(n, spectrum.size());
  for (Eigen::Index i = 0; i < Gu.rows(); ++i) {
    for (Eigen::Index j = 0; j < Gu.cols(); ++j) Gu(i, j) = gauss(rng);
  }
  for (Eigen::Index i = 0; i < Gv.rows(); ++i) {
    for (Eigen::Index j = 0; j < Gv.cols(); ++j) Gv(i, j) = gauss(rng);
  }
  const auto orth = [](const EigenMatrix& G) {
    Eigen::HouseholderQR<EigenMatrix> qr(G);
    return EigenMatrix(qr.householderQ() *
                       EigenMatrix::Identity(G.rows(), G.cols()));
  };
  const EigenMatrix U = orth(Gu);
  const EigenMatrix V = orth(Gv);
  EigenVector sigma(static_cast<Eigen::Index>(spectrum.size()));
  for (std::size_t i = 0; i < spectrum.size(); ++i) {
    sigma(static_cast<Eigen::Index>(i)) = spectrum[i];
  }
  return DenseMatrix::from_eigen(U * sigma.asDiagonal() * V.transpose());
}

// ---------------------------------------------------------------------------
// Criterion 1: projector algebra over random instances.
// ---------------------------------------------------------------------------
CriterionResult criterion_algebra() {
  const auto start = clock_type::now();
  CriterionResult result{"criterion-1 projector-algebra", true, "", 0.0};
  constexpr double kTol = 1e-8;
  std::mt19937_64 rng(20240801);
  std::uniform_int_distribution<std::size_t> pick_m(2, 30), pick_n(2, 20);
  std::normal_distribution<double> gauss;
  double worst = 0.0;
  int failures = 0;

  for (int instance = 0; instance < 200 && failures == 0; ++instance) {
    const std::size_t m = pick_m(rng), n = pick_n(rng);
    DenseMatrix A(m, n);
    if (instance % 2 == 0) {
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) A(i, j) = gauss(rng);
      }
    } else {
      // Tied spectra exercise multiplicities > 1.
      std::vector<double> spectrum;
      std::uniform_int_distribution<int> pick_d(1, 3);
      std::uniform_int_distribution<int> pick_mult(1, 2);
      std::uniform_real_distribution<double> pick_gap(0.5, 2.0);
      double value = pick_gap(rng) + 0.5;
      const std::size_t cap = std::min(m, n);
      for (int d = pick_d(rng); d > 0; --d) {
        const int mult = pick_mult(rng);
        for (int q = 0; q < mult && spectrum.size() < cap; ++q) {
          spectrum.push_back(value);
        }
        value += pick_gap(rng);
      }
      std::sort(spectrum.rbegin(), spectrum.rend());
      A = random_orthogonal_signal(rng, spectrum, m, n);
    }

    const SvdDecomposition dec = svd(A);
    const SpectrumClustering clustering =
        cluster_spectrum(dec.singular_values, m, n, kDefaultClusterRelTol);
    const ProjectorSet set = build_projectors(dec, clustering);
    const std::size_t N = m + n;
    const std::size_t d = clustering.cluster_count();

    auto record = [&](double err) {
      worst = std::max(worst, err);
      if (err > kTol) ++failures;
    };

    // Per-cluster identities and block relations.
    for (std::size_t k = 1; k <= d; ++k) {
      const auto& c = set.cluster(k);
      const EigenMatrix P = c.P.to_eigen();
      record((P - P.transpose()).cwiseAbs().maxCoeff());
      record((P * P - P).cwiseAbs().maxCoeff());
      record(std::abs(P.trace() - static_cast<double>(c.multiplicity)));
      const EigenMatrix uu = c.block_uu.to_eigen();
      const EigenMatrix uv = c.block_uv.to_eigen();
      const EigenMatrix vu = c.block_vu.to_eigen();
      record((uu - uu.transpose()).cwiseAbs().maxCoeff());
      record((uu * uu - uu).cwiseAbs().maxCoeff());
      record((vu - uv.transpose()).cwiseAbs().maxCoeff());
      record((uv * vu - uu).cwiseAbs().maxCoeff());
      // C_k relations.
      const EigenMatrix C = c.C.to_eigen();
      record((C - C.transpose()).cwiseAbs().maxCoeff());
      record((C * P).cwiseAbs().maxCoeff());
      const double c_norm =
          operator_norm(DenseMatrix::from_eigen(C));
      if (c_norm > 1.0 / c.gap + 1e-9) ++failures;
    }
    // Cross-cluster block orthogonality.
    for (std::size_t k = 1; k <= d; ++k) {
      for (std::size_t k2 = 1; k2 <= d; ++k2) {
        if (k == k2) continue;
        record((set.cluster(k).block_uu.to_eigen() *
                set.cluster(k2).block_uu.to_eigen())
                   .cwiseAbs()
                   .maxCoeff());
        record((set.cluster(k).block_vu.to_eigen() *
                set.cluster(k2).block_uv.to_eigen())
                   .cwiseAbs()
                   .maxCoeff());
      }
    }
    // Signed-projector family: orthogonality and completeness.
    std::vector<EigenMatrix> family;
    for (std::size_t k = 1; k <= d; ++k) {
      family.push_back(set.cluster(k).P.to_eigen());
      family.push_back(set.cluster(k).P_neg.to_eigen());
    }
    if (set.P0) family.push_back(set.P0->to_eigen());
    EigenMatrix total = EigenMatrix::Zero(N, N);
    for (std::size_t a = 0; a < family.size(); ++a) {
      total += family[a];
      for (std::size_t b = 0; b < family.size(); ++b) {
        const EigenMatrix prod = family[a] * family[b];
        record(a == b ? (prod - family[a]).cwiseAbs().maxCoeff()
                      : prod.cwiseAbs().maxCoeff());
      }
    }
    record((total - EigenMatrix::Identity(N, N)).cwiseAbs().maxCoeff());

    // Eigenvalue symmetry of the dilation.
    const EigenDecomposition eig = sym_eig(dilate(A));
    std::vector<double> expected;
    for (double s : dec.singular_values) {
      expected.push_back(s);
      expected.push_back(-s);
    }
    for (std::size_t z = 0; z < N - 2 * dec.singular_values.size(); ++z) {
      expected.push_back(0.0);
    }
    std::sort(expected.rbegin(), expected.rend());
    const double scale = 1.0 + dec.singular_values[0];
    for (std::size_t j = 0; j < N; ++j) {
      record(std::abs(eig.eigenvalues[j] - expected[j]) / scale);
    }
  }

  result.passed = failures == 0;
  result.details = "200 instances, worst defect " + fmt(worst) +
                   (result.passed ? "" : ", " + std::to_string(failures) +
                                             " checks beyond 1e-8");
  result.seconds = elapsed(start);
  return result;
}

// ---------------------------------------------------------------------------
// Criterion 2: contour projector against the eigendecomposition route.
// ---------------------------------------------------------------------------
CriterionResult criterion_riesz() {
  const auto start = clock_type::now();
  CriterionResult result{"criterion-2 riesz-oracle", true, "", 0.0};
  std::mt19937_64 rng(7151);
  std::uniform_int_distribution<std::size_t> pick_m(4, 10), pick_n(3, 8);
  std::uniform_int_distribution<int> pick_d(1, 3), pick_mult(1, 2);
  std::uniform_real_distribution<double> pick_gap(0.6, 2.0);
  double worst = 0.0;

  for (int instance = 0; instance < 50; ++instance) {
    const std::size_t m = pick_m(rng), n = pick_n(rng);
    const std::size_t cap = std::min(m, n);
    std::vector<double> spectrum;
    double value = pick_gap(rng);
    for (int d = pick_d(rng); d > 0; --d) {
      const int mult = pick_mult(rng);
      for (int q = 0; q < mult && spectrum.size() < cap; ++q) {
        spectrum.push_back(value);
      }
      value += pick_gap(rng);
    }
    std::sort(spectrum.rbegin(), spectrum.rend());
    const DenseMatrix A = random_orthogonal_signal(rng, spectrum, m, n);
    const SvdDecomposition dec = svd(A);
    const SpectrumClustering clustering =
        cluster_spectrum(dec.singular_values, m, n, kDefaultClusterRelTol);
    const ProjectorSet set = build_projectors(dec, clustering);
    const DenseMatrix B = dilate(A);

    std::uniform_int_distribution<std::size_t> pick_k(1, clustering.cluster_count());
    const std::size_t k = pick_k(rng);
    const double mu = clustering.distinct_values[k - 1];
    const double gap = clustering.gaps[k - 1];
    const DenseMatrix contour = riesz_projector(B, mu, gap / 2.0, 64);
    worst = std::max(worst, max_abs_diff(contour, set.cluster(k).P));
  }
  result.passed = worst <= 1e-8;
  result.details = "50 instances, worst |contour - eig| " + fmt(worst);
  result.seconds = elapsed(start);
  return result;
}

// ---------------------------------------------------------------------------
// Criterion 3: projector perturbation bounds and the Weyl inequality.
// ---------------------------------------------------------------------------
CriterionResult criterion_perturbation_bounds(std::size_t threads) {
  const auto start = clock_type::now();
  CriterionResult result{"criterion-3 perturbation-bounds", true, "", 0.0};

  struct Instance {
    std::vector<double> spectrum;
    std::size_t k;
    double tau;  // about 0.35 * gap of expected noise norm: deep in regime
  };
  const std::vector<Instance> instances = {
      {{10.0, 6.0, 3.0}, 1, 0.09},
      {{10.0, 10.0, 6.0}, 1, 0.09},  // multiplicity-2 cluster
      {{10.0, 6.0, 3.0}, 2, 0.065},
  };
  constexpr std::size_t kReplicates = 1000;
  constexpr std::size_t kSide = 60;
  constexpr double kTauLarge = 0.5;

  std::size_t in_regime_total = 0;
  std::size_t projector_bound_failures = 0;
  std::size_t remainder_bound_failures = 0;
  std::size_t weyl_failures = 0;
  std::ostringstream detail;

  std::mt19937_64 rng(99);
  for (const Instance& instance : instances) {
    const DenseMatrix A =
        random_orthogonal_signal(rng, instance.spectrum, kSide, kSide);
    const SvdDecomposition dec = svd(A);
    const SpectrumClustering clustering =
        cluster_spectrum(dec.singular_values, kSide, kSide, kDefaultClusterRelTol);
    const ProjectorSet set = build_projectors(dec, clustering);
    const DenseMatrix B = dilate(A);
    const double gap = clustering.gaps[instance.k - 1];
    const NoiseModel model(kSide, kSide, instance.tau, 4242 + instance.k);
    const NoiseModel model_large(kSide, kSide, kTauLarge, 515 + instance.k);

    std::vector<int> regime_flags(kReplicates, 0);
    std::vector<int> proj_ok(kReplicates, 1), rem_ok(kReplicates, 1),
        weyl_ok(kReplicates, 1);

    simple_parallel(kReplicates, threads, [&](std::size_t begin, std::size_t end) {
      for (std::size_t r = begin; r < end; ++r) {
        const DenseMatrix Gamma = dilate(sample_noise(model, r));
        const PerturbationSplit split =
            perturbation_split(B, Gamma, set, clustering, instance.k);
        if (split.in_regime) {
          regime_flags[r] = 1;
          const double norm_diff = operator_norm(DenseMatrix::from_eigen(
              split.L.to_eigen() + split.S.to_eigen()));
          if (norm_diff > 4.0 * split.norm_gamma / gap + 1e-9) proj_ok[r] = 0;
          const double norm_s = operator_norm(split.S);
          const double ratio = split.norm_gamma / gap;
          if (norm_s > 14.0 * ratio * ratio + 1e-9) rem_ok[r] = 0;
        }
        const DenseMatrix B_tilde =
            DenseMatrix::from_eigen(B.to_eigen() + Gamma.to_eigen());
        const SpectralDeviation dev = weyl_deviation(B, B_tilde);
        if (dev.max_shift > dev.gamma_norm + 1e-9) weyl_ok[r] = 0;

        // Weyl must hold at any noise level; repeat with the large tau.
        const DenseMatrix Gamma2 = dilate(sample_noise(model_large, r));
        const SpectralDeviation dev2 = weyl_deviation(
            B, DenseMatrix::from_eigen(B.to_eigen() + Gamma2.to_eigen()));
        if (dev2.max_shift > dev2.gamma_norm + 1e-9) weyl_ok[r] = 0;
      }
    });

    for (std::size_t r = 0; r < kReplicates; ++r) {
      if (regime_flags[r]) {
        ++in_regime_total;
        if (!proj_ok[r]) ++projector_bound_failures;
        if (!rem_ok[r]) ++remainder_bound_failures;
      }
      if (!weyl_ok[r]) ++weyl_failures;
    }
  }

  const std::size_t min_regime = instances.size() * kReplicates * 9 / 10;
  result.passed = projector_bound_failures == 0 &&
                  remainder_bound_failures == 0 && weyl_failures == 0 &&
                  in_regime_total >= min_regime;
  detail << in_regime_total << " in-regime replicates, bound failures "
         << projector_bound_failures << "/" << remainder_bound_failures
         << ", Weyl failures " << weyl_failures;
  result.details = detail.str();
  result.seconds = elapsed(start);
  return result;
}

// ---------------------------------------------------------------------------
// Criterion 4: spectral-norm concentration and moment equivalence.
// ---------------------------------------------------------------------------
CriterionResult criterion_norm_stats(std::size_t threads) {
  const auto start = clock_type::now();
  CriterionResult result{"criterion-4 norm-concentration", true, "", 0.0};
  constexpr std::size_t kSide = 200;
  constexpr std::size_t kReplicates = 200;
  const NoiseModel model(kSide, kSide, 1.0, 3131);

  std::vector<double> norms(kReplicates);
  simple_parallel(kReplicates, threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t r = begin; r < end; ++r) {
      norms[r] = operator_norm(sample_noise(model, r));
    }
  });
  double mean = 0.0;
  for (double v : norms) mean += v;
  mean /= static_cast<double>(kReplicates);

  const double gordon_ratio = mean / (2.0 * std::sqrt(double(kSide)));
  std::size_t beyond = 0;
  for (double v : norms) {
    if (std::abs(v - mean) > 5.0 * model.tau) ++beyond;
  }
  const double beyond_fraction =
      static_cast<double>(beyond) / static_cast<double>(kReplicates);

  const double scale = model.tau * std::sqrt(double(kSide));
  bool moments_ok = true;
  std::ostringstream detail;
  detail << "mean/(sqrt m + sqrt n) = " << fmt(gordon_ratio)
         << ", beyond-5tau fraction = " << fmt(beyond_fraction);
  for (double p : {1.0, 2.0, 4.0}) {
    double acc = 0.0;
    for (double v : norms) acc += std::pow(v, p);
    const double moment =
        std::pow(acc / static_cast<double>(kReplicates), 1.0 / p) / scale;
    detail << ", p" << p << " ratio = " << fmt(moment);
    if (moment < 1.0 || moment > 2.5) moments_ok = false;
  }

  result.passed = gordon_ratio >= 0.85 && gordon_ratio <= 1.00 &&
                  beyond_fraction <= 0.01 && moments_ok;
  result.details = detail.str();
  result.seconds = elapsed(start);
  return result;
}

// ---------------------------------------------------------------------------
// Criteria 5-7 share one size sweep.
// ---------------------------------------------------------------------------
struct SweepData {
  std::vector<double> sizes;
  std::vector<double> fluct_medians;      // median |<(P~ - mean)e1, e2>|
  std::vector<double> tk_ratios;
  std::vector<double> linf_normalized;    // median linf_shrunk normalized
  bool fallback_used = false;
};

ExperimentConfig sweep_config() {
  ExperimentConfig config;
  config.m = 100;
  config.n = 100;
  config.tau = 1.0;
  config.spectrum = {25.0};  // gap / (tau sqrt(n)) = 2.5 at every size
  config.factors = FactorKind::kIdentity;
  config.cluster_index = 1;
  config.replicates = 2000;
  config.master_seed = 20240801;
  config.gamma = 0.25;
  config.t_values = {1.0, 2.0, 4.0};
  config.random_probes = 5;
  config.oracle_replicates = 5000;
  config.size_sweep = {{100, 100, 1.0},
                       {200, 200, std::sqrt(2.0)},
                       {400, 400, 2.0},
                       {800, 800, std::sqrt(8.0)}};
  return config;
}

SweepData run_sweep(std::size_t threads) {
  const ExperimentConfig base = sweep_config();
  SweepData data;
  for (const SizePoint& point : base.size_sweep) {
    const ExperimentConfig config = base.at_size(point);
    const RunResult run = run_replicates(config, threads);
    const SummaryReport report = summarize(run.records, config, &run);
    data.sizes.push_back(static_cast<double>(std::max(point.m, point.n)));
    data.fluct_medians.push_back(report.abs_deviation_medians.at("bilin_c_1_2"));
    data.tk_ratios.push_back(report.tk_ratio.value_or(0.0));
    data.linf_normalized.push_back(
        report.linf_shrunk_median_normalized.value_or(0.0));
    data.fallback_used = data.fallback_used || run.used_fallback_svd;
  }
  return data;
}

CriterionResult criterion_fluctuation_scaling(const SweepData& data) {
  CriterionResult result{"criterion-5 fluctuation-scaling", true, "", 0.0};
  const SlopeFit fit = scaling_fit(data.sizes, data.fluct_medians);
  result.passed = fit.slope >= -0.65 && fit.slope <= -0.35;
  std::ostringstream detail;
  detail << "medians";
  for (double v : data.fluct_medians) detail << " " << fmt(v);
  detail << ", log-log slope " << fmt(fit.slope) << " +- " << fmt(fit.std_error);
  result.details = detail.str();
  return result;
}

CriterionResult criterion_bias_alignment(const SweepData& data) {
  CriterionResult result{"criterion-6 bias-alignment", true, "", 0.0};
  bool monotone = true;
  for (std::size_t i = 1; i < data.tk_ratios.size(); ++i) {
    if (data.tk_ratios[i] >= data.tk_ratios[i - 1]) monotone = false;
  }
  // sizes are {100, 200, 400, 800}: compare n=400 against n=100.
  const double shrink = data.tk_ratios[2] / data.tk_ratios[0];
  result.passed = monotone && shrink <= 0.7;
  std::ostringstream detail;
  detail << "tk ratios";
  for (double v : data.tk_ratios) detail << " " << fmt(v);
  detail << ", n400/n100 = " << fmt(shrink)
         << (monotone ? "" : ", not monotone");
  result.details = detail.str();
  return result;
}

CriterionResult criterion_linf_stability(const SweepData& data) {
  CriterionResult result{"criterion-7 linf-stability", true, "", 0.0};
  const auto [lo, hi] = std::minmax_element(data.linf_normalized.begin(),
                                            data.linf_normalized.end());
  const double factor = *hi / *lo;
  result.passed = factor < 2.0 && *lo > 0.0;
  std::ostringstream detail;
  detail << "normalized medians";
  for (double v : data.linf_normalized) detail << " " << fmt(v);
  detail << ", max/min = " << fmt(factor);
  result.details = detail.str();
  return result;
}

// ---------------------------------------------------------------------------
// Criterion 8: two-sample debiasing.
// ---------------------------------------------------------------------------
CriterionResult criterion_debias(std::size_t threads) {
  const auto start = clock_type::now();
  CriterionResult result{"criterion-8 debiasing", true, "", 0.0};
  constexpr std::size_t kSide = 60;
  constexpr std::size_t kPairs = 500;
  constexpr double kGamma = 0.25;
  const double mu = 2.2 * std::sqrt(double(kSide));

  ExperimentConfig config;
  config.m = kSide;
  config.n = kSide;
  config.tau = 1.0;
  config.spectrum = {mu};
  config.replicates = 2;  // signal construction only
  config.master_seed = 60606;
  const SignalBundle signal = build_signal(config, threads);

  const NoiseModel oracle_model(kSide, kSide, 1.0, 987001);
  const BiasOracle oracle =
      bias_oracle_mc(signal.A, oracle_model, 1, 5000, threads);

  const EigenMatrix A = signal.A.to_eigen();
  const EigenMatrix V = signal.decomposition.right_vectors.to_eigen();
  const EigenMatrix warm = V.leftCols(1);
  EigenVector theta(2 * kSide);
  theta << signal.decomposition.left_vectors.to_eigen().col(0), V.col(0);
  theta /= std::numbers::sqrt2;

  const NoiseModel pair_model(kSide, kSide, 1.0, 987002);
  std::vector<double> naive(kPairs), debiased(kPairs), b_tilde(kPairs);
  simple_parallel(kPairs, threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t p = begin; p < end; ++p) {
      auto observe = [&](std::size_t rep) {
        const EigenMatrix At =
            A + sample_noise(pair_model, rep).to_eigen();
        const detail::TopBlockSvd top = detail::top_block_svd(At, 1, warm);
        EigenVector t(2 * kSide);
        t << top.U.col(0), top.V.col(0);
        t /= std::numbers::sqrt2;
        return t;
      };
      EigenVector t1 = observe(2 * p);
      const EigenVector t2 = observe(2 * p + 1);
      const std::vector<double> t1v(t1.data(), t1.data() + t1.size());
      const std::vector<double> t2v(t2.data(), t2.data() + t2.size());
      const BiasEstimate est = estimate_bias_two_sample(t1v, t2v, kGamma);
      b_tilde[p] = est.b_tilde;
      if (t1.dot(theta) < 0.0) t1 = -t1;  // evaluation-side alignment
      naive[p] = t1.dot(theta) - 1.0;
      const double divisor = std::max(std::sqrt(1.0 + est.b_tilde),
                                      std::sqrt(kGamma) / 2.0);
      debiased[p] = t1.dot(theta) / divisor - 1.0;
    }
  });

  auto mean_se = [](const std::vector<double>& xs) {
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    const double sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
    return std::pair<double, double>(mean,
                                     sd / std::sqrt(double(xs.size())));
  };
  const auto [mean_naive, se_naive] = mean_se(naive);
  const auto [mean_deb, se_deb] = mean_se(debiased);
  const auto [mean_bt, se_bt] = mean_se(b_tilde);

  const bool oracle_in_band = oracle.b_hat >= -0.30 && oracle.b_hat <= -0.15;
  const bool improves = std::abs(mean_deb) <= 0.5 * std::abs(mean_naive);
  const double combined_se =
      std::sqrt(se_bt * se_bt + oracle.std_error * oracle.std_error);
  const bool consistent = std::abs(mean_bt - oracle.b_hat) <= 3.0 * combined_se;

  result.passed = oracle_in_band && improves && consistent;
  std::ostringstream detail;
  detail << "b_hat = " << fmt(oracle.b_hat) << ", mean naive dev = "
         << fmt(mean_naive) << ", mean debiased dev = " << fmt(mean_deb)
         << ", |mean b~ - b_hat| = " << fmt(std::abs(mean_bt - oracle.b_hat))
         << " vs 3se = " << fmt(3.0 * combined_se);
  if (!oracle_in_band) detail << ", oracle outside [-0.30, -0.15]";
  result.details = detail.str();
  result.seconds = elapsed(start);
  return result;
}

// ---------------------------------------------------------------------------
// Criterion 9: byte-identical records across thread counts.
// ---------------------------------------------------------------------------
std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

ExperimentConfig determinism_config() {
  ExperimentConfig config;
  config.m = 24;
  config.n = 18;
  config.tau = 0.5;
  config.spectrum = {12.0, 6.0};
  config.cluster_index = 1;
  config.replicates = 50;
  config.master_seed = 777;
  config.t_values = {1.0, 2.0};
  config.random_probes = 2;
  return config;
}

CriterionResult criterion_determinism(const VerifyOptions& options) {
  const auto start = clock_type::now();
  CriterionResult result{"criterion-9 determinism", true, "", 0.0};
  namespace fs = std::filesystem;
  const fs::path scratch =
      fs::path(options.scratch_dir) / "svperturb_determinism";
  fs::remove_all(scratch);
  fs::create_directories(scratch);
  const ExperimentConfig config = determinism_config();

  const std::string config_path = (scratch / "config.json").string();
  {
    std::ofstream out(config_path);
    out << config.to_json().dump(2) << "\n";
  }

  std::string rec1, rec2;
  if (!options.cli_path.empty()) {
    const std::string dir1 = (scratch / "run1").string();
    const std::string dir2 = (scratch / "run8").string();
    auto invoke = [&](const std::string& dir, int threads) {
      std::ostringstream cmd;
      cmd << "env -u SVPERTURB_THREADS \"" << options.cli_path
          << "\" simulate --config \"" << config_path << "\" --out-dir \""
          << dir << "\" --threads " << threads;
      return std::system(cmd.str().c_str());
    };
    if (invoke(dir1, 1) != 0 || invoke(dir2, 8) != 0) {
      result.passed = false;
      result.details = "simulate invocation failed";
      result.seconds = elapsed(start);
      return result;
    }
    rec1 = read_file_bytes(dir1 + "/records.csv");
    rec2 = read_file_bytes(dir2 + "/records.csv");
  } else {
    // Library-level fallback when no CLI binary is supplied.
    auto run_once = [&](std::size_t threads, const std::string& dir) {
      fs::create_directories(dir);
      const RunResult run = run_replicates(config, threads);
      const SummaryReport report = summarize(run.records, config, &run);
      emit(run, report, {dir + "/records.csv", dir + "/summary.json", "", ""});
      return read_file_bytes(dir + "/records.csv");
    };
    rec1 = run_once(1, (scratch / "run1").string());
    rec2 = run_once(8, (scratch / "run8").string());
  }
  result.passed = !rec1.empty() && rec1 == rec2;
  result.details = result.passed
                       ? "records byte-identical at 1 and 8 threads"
                       : "records differ between 1 and 8 threads";
  result.seconds = elapsed(start);
  return result;
}

}  // namespace

std::vector<CriterionResult> run_suite(const std::string& suite,
                                       const VerifyOptions& options) {
  std::vector<CriterionResult> results;
  const bool all = suite == "all";
  if (all || suite == "algebra") {
    results.push_back(criterion_algebra());
    results.push_back(criterion_riesz());
  }
  if (all || suite == "bounds") {
    results.push_back(criterion_perturbation_bounds(options.threads));
    results.push_back(criterion_norm_stats(options.threads));
  }
  if (all || suite == "scaling") {
    const auto start = clock_type::now();
    const SweepData data = run_sweep(options.threads);
    const double sweep_seconds = elapsed(start);
    CriterionResult c5 = criterion_fluctuation_scaling(data);
    CriterionResult c6 = criterion_bias_alignment(data);
    CriterionResult c7 = criterion_linf_stability(data);
    c5.seconds = sweep_seconds;  // the sweep cost is shared
    results.push_back(std::move(c5));
    results.push_back(std::move(c6));
    results.push_back(std::move(c7));
  }
  if (all || suite == "debias") {
    results.push_back(criterion_debias(options.threads));
  }
  if (all) {
    results.push_back(criterion_determinism(options));
  }
  if (results.empty()) {
    throw UsageError("unknown suite \"" + suite +
                     "\"; expected algebra|bounds|scaling|debias|all");
  }
  return results;
}

}  // namespace svperturb
