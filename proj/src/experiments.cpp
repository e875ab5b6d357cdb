#include "svperturb/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <iterator>
#include <numbers>
#include <thread>

#include "cluster_svd.hpp"
#include "svperturb/linalg.hpp"

namespace svperturb {

namespace {

// Purpose tags for substreams derived from the master seed. Keeping every
// consumer on its own derived seed means replicate noise, oracle noise,
// factors, probes and the regime estimate never share draws.
enum : std::uint64_t {
  kStreamRun = 1,
  kStreamOracle = 2,
  kStreamFactors = 3,
  kStreamProbes = 4,
  kStreamRegime = 5,
};

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t purpose) {
  std::uint64_t z = master + (purpose + 1) * 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

void parallel_for(std::size_t count, std::size_t threads,
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

EigenMatrix seeded_orthogonal(std::uint64_t seed, std::uint64_t tag,
                              std::size_t rows, std::size_t cols) {
  const auto raw = gaussian_stream(seed, tag, rows * cols);
  EigenMatrix G(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) G(i, j) = raw[i * cols + j];
  }
  Eigen::HouseholderQR<EigenMatrix> qr(G);
  EigenMatrix Q = qr.householderQ() *
                  EigenMatrix::Identity(static_cast<Eigen::Index>(rows),
                                        static_cast<Eigen::Index>(cols));
  const EigenMatrix R = qr.matrixQR().topRows(cols);
  for (Eigen::Index j = 0; j < Q.cols(); ++j) {
    if (R(j, j) < 0.0) Q.col(j) = -Q.col(j);
  }
  return Q;
}

struct ProbeSet {
  std::size_t canonical = 0;                       // pairs over e_1..e_c
  std::vector<EigenVector> random_x, random_y;     // unit pairs
};

ProbeSet make_probes(const ExperimentConfig& config) {
  ProbeSet probes;
  probes.canonical = config.canonical_probe_count();
  const std::uint64_t seed = derive_seed(config.master_seed, kStreamProbes);
  const std::size_t N = config.m + config.n;
  for (std::size_t p = 0; p < config.random_probes; ++p) {
    const auto xs = gaussian_stream(seed, 2 * p, N);
    const auto ys = gaussian_stream(seed, 2 * p + 1, N);
    EigenVector x(N), y(N);
    for (std::size_t i = 0; i < N; ++i) {
      x(static_cast<Eigen::Index>(i)) = xs[i];
      y(static_cast<Eigen::Index>(i)) = ys[i];
    }
    x.normalize();
    y.normalize();
    probes.random_x.push_back(std::move(x));
    probes.random_y.push_back(std::move(y));
  }
  return probes;
}

double operator_norm_symmetric(const EigenMatrix& M) {
  Eigen::SelfAdjointEigenSolver<EigenMatrix> eig(M, Eigen::EigenvaluesOnly);
  return std::max(std::abs(eig.eigenvalues()(0)),
                  std::abs(eig.eigenvalues()(M.rows() - 1)));
}

}  // namespace

void ExperimentConfig::validate() const {
  if (m == 0 || n == 0) throw std::invalid_argument("config: m, n must be >= 1");
  if (!(tau >= 0.0)) throw std::invalid_argument("config: tau must be >= 0");
  if (spectrum.empty()) throw EmptySpectrumError("config: empty spectrum");
  for (std::size_t i = 0; i < spectrum.size(); ++i) {
    if (!(spectrum[i] > 0.0)) {
      throw std::invalid_argument("config: spectrum values must be positive");
    }
    if (i > 0 && spectrum[i] > spectrum[i - 1]) {
      throw std::invalid_argument("config: spectrum must be non-increasing");
    }
  }
  if (spectrum.size() > std::min(m, n)) {
    throw SpectrumTooLongError("config: spectrum longer than min(m, n)");
  }
  if (replicates < 2) throw std::invalid_argument("config: replicates must be >= 2");
  if (!(gamma > 0.0 && gamma < 1.0)) {
    throw std::invalid_argument("config: gamma outside (0, 1)");
  }
  if (t_values.empty()) throw std::invalid_argument("config: t_values empty");
  for (double t : t_values) {
    if (!(t >= 1.0)) throw std::invalid_argument("config: t_values must be >= 1");
  }
  if (cluster_index < 1) {
    throw std::invalid_argument("config: cluster_index must be >= 1");
  }
  for (const auto& point : size_sweep) {
    if (point.m == 0 || point.n == 0 || !(point.spectrum_scale > 0.0)) {
      throw std::invalid_argument("config: bad size_sweep entry");
    }
  }
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  static const std::vector<std::string> known = {
      "m", "n", "tau", "spectrum", "factors", "cluster_index", "replicates",
      "master_seed", "gamma", "c2", "t_values", "probe_vectors",
      "oracle_replicates", "size_sweep"};
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw UsageError("config: unknown key \"" + key + "\"");
    }
  }
  ExperimentConfig c;
  c.m = j.at("m").get<std::size_t>();
  c.n = j.at("n").get<std::size_t>();
  c.tau = j.at("tau").get<double>();
  c.spectrum = j.at("spectrum").get<std::vector<double>>();
  if (j.contains("factors")) {
    const std::string f = j["factors"].get<std::string>();
    if (f == "identity") {
      c.factors = FactorKind::kIdentity;
    } else if (f == "random") {
      c.factors = FactorKind::kRandomOrthogonal;
    } else {
      throw UsageError("config: factors must be \"identity\" or \"random\"");
    }
  }
  if (j.contains("cluster_index")) c.cluster_index = j["cluster_index"].get<std::size_t>();
  if (j.contains("replicates")) c.replicates = j["replicates"].get<std::size_t>();
  if (j.contains("master_seed")) c.master_seed = j["master_seed"].get<std::uint64_t>();
  if (j.contains("gamma")) c.gamma = j["gamma"].get<double>();
  if (j.contains("c2")) c.c2 = j["c2"].get<double>();
  if (j.contains("t_values")) c.t_values = j["t_values"].get<std::vector<double>>();
  if (j.contains("probe_vectors")) {
    const auto& p = j["probe_vectors"];
    if (p.is_string() && p.get<std::string>() == "canonical") {
      c.random_probes = 0;
    } else if (p.is_number_unsigned() || p.is_number_integer()) {
      c.random_probes = p.get<std::size_t>();
    } else {
      throw UsageError(
          "config: probe_vectors must be \"canonical\" or a random-pair count");
    }
  }
  if (j.contains("oracle_replicates")) {
    c.oracle_replicates = j["oracle_replicates"].get<std::size_t>();
  }
  if (j.contains("size_sweep")) {
    for (const auto& entry : j["size_sweep"]) {
      if (!entry.is_array() || entry.size() != 3) {
        throw UsageError("config: size_sweep entries are [m, n, scale] triples");
      }
      c.size_sweep.push_back({entry[0].get<std::size_t>(),
                              entry[1].get<std::size_t>(),
                              entry[2].get<double>()});
    }
  }
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw UsageError("config: invalid JSON in " + path + ": " + e.what());
  }
  return from_json(j);
}

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json j;
  j["m"] = m;
  j["n"] = n;
  j["tau"] = tau;
  j["spectrum"] = spectrum;
  j["factors"] = factors == FactorKind::kIdentity ? "identity" : "random";
  j["cluster_index"] = cluster_index;
  j["replicates"] = replicates;
  j["master_seed"] = master_seed;
  j["gamma"] = gamma;
  j["c2"] = c2;
  j["t_values"] = t_values;
  j["probe_vectors"] = random_probes;
  j["oracle_replicates"] = oracle_replicates;
  if (!size_sweep.empty()) {
    nlohmann::json sweep = nlohmann::json::array();
    for (const auto& p : size_sweep) {
      sweep.push_back({p.m, p.n, p.spectrum_scale});
    }
    j["size_sweep"] = sweep;
  }
  return j;
}

ExperimentConfig ExperimentConfig::at_size(const SizePoint& point) const {
  ExperimentConfig scaled = *this;
  scaled.m = point.m;
  scaled.n = point.n;
  for (double& s : scaled.spectrum) s *= point.spectrum_scale;
  scaled.size_sweep.clear();
  scaled.validate();
  return scaled;
}

SignalBundle build_signal(const ExperimentConfig& config, std::size_t threads) {
  config.validate();
  const std::size_t m = config.m, n = config.n;
  const std::size_t r = config.spectrum.size();

  EigenMatrix A;
  if (config.factors == FactorKind::kIdentity) {
    A = EigenMatrix::Zero(m, n);
    for (std::size_t i = 0; i < r; ++i) {
      A(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) =
          config.spectrum[i];
    }
  } else {
    const std::uint64_t seed = derive_seed(config.master_seed, kStreamFactors);
    const EigenMatrix U = seeded_orthogonal(seed, 1, m, r);
    const EigenMatrix V = seeded_orthogonal(seed, 2, n, r);
    EigenVector sigma(static_cast<Eigen::Index>(r));
    for (std::size_t i = 0; i < r; ++i) sigma(static_cast<Eigen::Index>(i)) = config.spectrum[i];
    A = U * sigma.asDiagonal() * V.transpose();
  }

  SignalBundle bundle{DenseMatrix::from_eigen(A),
                      svd(DenseMatrix::from_eigen(A)),
                      {},
                      {},
                      0.0,
                      false};
  // Construction check: the realized singular values must match the config.
  for (std::size_t i = 0; i < r; ++i) {
    if (std::abs(bundle.decomposition.singular_values[i] - config.spectrum[i]) >
        1e-10 * config.spectrum[0]) {
      throw NumericError("build_signal: realized spectrum deviates from config");
    }
  }
  bundle.clustering =
      cluster_spectrum(bundle.decomposition.singular_values, m, n,
                       kDefaultClusterRelTol);
  if (config.cluster_index > bundle.clustering.cluster_count()) {
    throw IndexOutOfRangeError("build_signal: cluster_index exceeds cluster count");
  }
  bundle.projectors = build_projectors(bundle.decomposition, bundle.clustering);

  // Regime check with a fixed 100-replicate norm estimate on its own stream.
  const NoiseModel regime_model(m, n, config.tau,
                                derive_seed(config.master_seed, kStreamRegime));
  constexpr std::size_t kRegimeReplicates = 100;
  std::vector<double> norms(kRegimeReplicates);
  parallel_for(kRegimeReplicates, threads,
               [&](std::size_t begin, std::size_t end) {
                 for (std::size_t i = begin; i < end; ++i) {
                   norms[i] = detail::spectral_norm_gram(
                       sample_noise(regime_model, i).to_eigen());
                 }
               });
  double sum = 0.0;
  for (double v : norms) sum += v;
  bundle.mean_norm_estimate = sum / static_cast<double>(kRegimeReplicates);
  const double gap = bundle.clustering.gaps[config.cluster_index - 1];
  bundle.regime_ok =
      bundle.mean_norm_estimate <= (1.0 - config.gamma) * gap / 2.0;
  return bundle;
}

RunResult run_replicates(const ExperimentConfig& config, std::size_t threads) {
  SignalBundle signal = build_signal(config, threads);
  const std::size_t m = config.m, n = config.n, N = m + n;
  const std::size_t k = config.cluster_index;
  const auto& delta = signal.clustering.index_sets[k - 1];
  const std::size_t nu = delta.size();
  const double mu = signal.clustering.distinct_values[k - 1];
  const double gap = signal.clustering.gaps[k - 1];
  const std::size_t block = *std::max_element(delta.begin(), delta.end());
  const bool theta_columns = (nu == 1);

  const NoiseModel run_model(m, n, config.tau,
                             derive_seed(config.master_seed, kStreamRun));

  std::optional<BiasOracle> oracle;
  if (config.oracle_replicates > 0 && theta_columns) {
    const NoiseModel oracle_model(
        m, n, config.tau, derive_seed(config.master_seed, kStreamOracle));
    oracle = bias_oracle_mc(signal.A, oracle_model, k,
                            config.oracle_replicates, threads);
  }
  const bool has_linf_shrunk = oracle.has_value();
  const double shrink_scale =
      oracle ? std::sqrt(std::max(0.0, 1.0 + oracle->b_hat)) : 1.0;

  const EigenMatrix A = signal.A.to_eigen();
  const EigenMatrix U_sig = signal.decomposition.left_vectors.to_eigen();
  const EigenMatrix V_sig = signal.decomposition.right_vectors.to_eigen();
  const EigenMatrix C = signal.projectors.cluster(k).C.to_eigen();
  const EigenMatrix warm = m >= n
                               ? V_sig.leftCols(static_cast<Eigen::Index>(block))
                               : U_sig.leftCols(static_cast<Eigen::Index>(block));

  EigenMatrix Theta(N, nu);  // signal cluster eigenvectors
  for (std::size_t j = 0; j < nu; ++j) {
    const Eigen::Index col = static_cast<Eigen::Index>(delta[j] - 1);
    Theta.col(static_cast<Eigen::Index>(j)).head(m) = U_sig.col(col);
    Theta.col(static_cast<Eigen::Index>(j)).tail(n) = V_sig.col(col);
  }
  Theta /= std::numbers::sqrt2;
  const EigenVector theta_vec = theta_columns ? EigenVector(Theta.col(0))
                                              : EigenVector();

  const ProbeSet probes = make_probes(config);
  const std::size_t R = config.replicates;

  RunResult result{config,
                   std::move(signal),
                   std::vector<ReplicateRecord>(R),
                   DenseMatrix(N, N),
                   0.0,
                   0.0,
                   oracle,
                   theta_columns,
                   false};
  std::vector<EigenMatrix> theta_blocks(R);
  std::vector<char> fallback(R, 0);

  parallel_for(R, threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const DenseMatrix Xd = sample_noise(run_model, i);
      const EigenMatrix X = Xd.to_eigen();
      const EigenMatrix At = A + X;

      ReplicateRecord rec;
      rec.replicate = i;
      rec.norm_gamma = detail::spectral_norm_gram(X);
      rec.in_regime = rec.norm_gamma < gap / 2.0;

      const detail::TopBlockSvd top = detail::top_block_svd(At, block, warm);
      fallback[i] = top.fallback_used ? 1 : 0;

      EigenMatrix ThetaTilde(N, nu);
      rec.cluster_shifts.resize(nu);
      for (std::size_t j = 0; j < nu; ++j) {
        const Eigen::Index col = static_cast<Eigen::Index>(delta[j] - 1);
        ThetaTilde.col(static_cast<Eigen::Index>(j)).head(m) = top.U.col(col);
        ThetaTilde.col(static_cast<Eigen::Index>(j)).tail(n) = top.V.col(col);
        rec.cluster_shifts[j] = std::abs(top.sigma[delta[j] - 1] - mu);
      }
      ThetaTilde /= std::numbers::sqrt2;

      // Bilinear probe forms <P_tilde x, y> from the cluster block alone.
      rec.bilinear.reserve(probes.canonical * probes.canonical +
                           probes.random_x.size());
      for (std::size_t a = 0; a < probes.canonical; ++a) {
        for (std::size_t b = 0; b < probes.canonical; ++b) {
          double acc = 0.0;
          for (std::size_t j = 0; j < nu; ++j) {
            acc += ThetaTilde(static_cast<Eigen::Index>(a),
                              static_cast<Eigen::Index>(j)) *
                   ThetaTilde(static_cast<Eigen::Index>(b),
                              static_cast<Eigen::Index>(j));
          }
          rec.bilinear.push_back(acc);
        }
      }
      for (std::size_t p = 0; p < probes.random_x.size(); ++p) {
        const EigenVector tx = ThetaTilde.transpose() * probes.random_x[p];
        const EigenVector ty = ThetaTilde.transpose() * probes.random_y[p];
        rec.bilinear.push_back(tx.dot(ty));
      }

      const detail::SplitNorms norms =
          detail::split_norms_lowrank(X, Theta, ThetaTilde, C, m);
      rec.norm_L = norms.norm_L;
      rec.norm_S = norms.norm_S;
      rec.norm_Pdiff = norms.norm_Pdiff;

      if (theta_columns) {
        EigenVector tt = ThetaTilde.col(0);
        if (tt.dot(theta_vec) < 0.0) tt = -tt;  // align against the truth
        rec.dot_theta = tt.dot(theta_vec);
        for (std::size_t a = 0; a < probes.canonical; ++a) {
          rec.linear.push_back(tt(static_cast<Eigen::Index>(a)));
        }
        for (const auto& x : probes.random_x) {
          rec.linear.push_back(tt.dot(x));
        }
        rec.linf_theta = (tt - theta_vec).cwiseAbs().maxCoeff();
        if (has_linf_shrunk) {
          rec.linf_shrunk =
              (tt - shrink_scale * theta_vec).cwiseAbs().maxCoeff();
        }
      }
      result.records[i] = std::move(rec);
      theta_blocks[i] = std::move(ThetaTilde);
    }
  });

  for (char f : fallback) {
    if (f) result.used_fallback_svd = true;
  }

  // Sequential aggregation in replicate order: pooled projector mean in two
  // halves (for a split error bar) and the paired two-sample estimates.
  EigenMatrix sum_first = EigenMatrix::Zero(N, N);
  EigenMatrix sum_second = EigenMatrix::Zero(N, N);
  const std::size_t half = R / 2;
  for (std::size_t i = 0; i < R; ++i) {
    EigenMatrix& target = i < half ? sum_first : sum_second;
    target.noalias() += theta_blocks[i] * theta_blocks[i].transpose();
  }
  const EigenMatrix P_signal = result.signal.projectors.cluster(k).P.to_eigen();
  if (half > 0) {
    result.bias_norm_half_first = operator_norm_symmetric(
        EigenMatrix(sum_first / static_cast<double>(half) - P_signal));
  }
  if (R - half > 0) {
    result.bias_norm_half_second = operator_norm_symmetric(
        EigenMatrix(sum_second / static_cast<double>(R - half) - P_signal));
  }
  result.mean_projector = DenseMatrix::from_eigen(
      (sum_first + sum_second) / static_cast<double>(R));

  if (theta_columns) {
    double last_pair_value = 0.0;
    for (std::size_t i = 0; i + 1 < R; i += 2) {
      std::vector<double> t1(theta_blocks[i].col(0).data(),
                             theta_blocks[i].col(0).data() + N);
      std::vector<double> t2(theta_blocks[i + 1].col(0).data(),
                             theta_blocks[i + 1].col(0).data() + N);
      const BiasEstimate est = estimate_bias_two_sample(t1, t2, config.gamma);
      result.records[i].b_tilde = est.b_tilde;
      result.records[i + 1].b_tilde = est.b_tilde;
      last_pair_value = est.b_tilde;
    }
    if (R % 2 == 1 && R > 1) {
      result.records[R - 1].b_tilde = last_pair_value;
    }
  }
  return result;
}

SummaryReport summarize(const std::vector<ReplicateRecord>& records,
                        const ExperimentConfig& config,
                        const RunResult* result) {
  if (records.size() < 30) {
    throw InsufficientReplicatesError("summarize: need at least 30 records");
  }
  SummaryReport report;
  report.record_count = records.size();
  report.tau = config.tau;

  const bool theta_columns = !records.front().linear.empty() ||
                             records.front().dot_theta != 0.0;
  const bool has_linf_shrunk =
      result ? result->oracle.has_value()
             : std::any_of(records.begin(), records.end(),
                           [](const ReplicateRecord& r) {
                             return r.linf_shrunk != 0.0;
                           });
  const auto labels =
      record_column_labels(config, records.front().cluster_shifts.size(),
                           theta_columns, has_linf_shrunk);

  // Flatten each record into label order (dropping the replicate column).
  auto flatten = [&](const ReplicateRecord& r) {
    std::vector<double> row;
    row.reserve(labels.size());
    row.push_back(r.norm_gamma);
    row.push_back(r.in_regime ? 1.0 : 0.0);
    for (double s : r.cluster_shifts) row.push_back(s);
    for (double b : r.bilinear) row.push_back(b);
    if (theta_columns) {
      for (double l : r.linear) row.push_back(l);
    }
    row.push_back(r.norm_L);
    row.push_back(r.norm_S);
    row.push_back(r.norm_Pdiff);
    if (theta_columns) {
      row.push_back(r.dot_theta);
      row.push_back(r.b_tilde);
      row.push_back(r.linf_theta);
      if (has_linf_shrunk) row.push_back(r.linf_shrunk);
    }
    return row;
  };

  const std::size_t cols = labels.size() - 1;  // minus "replicate"
  std::vector<double> sums(cols, 0.0), sumsq(cols, 0.0);
  std::vector<std::vector<double>> table(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    table[i] = flatten(records[i]);
    if (table[i].size() != cols) {
      throw DimensionMismatchError("summarize: ragged record");
    }
    for (std::size_t c = 0; c < cols; ++c) sums[c] += table[i][c];
  }
  const double R = static_cast<double>(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    for (std::size_t c = 0; c < cols; ++c) {
      const double d = table[i][c] - sums[c] / R;
      sumsq[c] += d * d;
    }
  }
  for (std::size_t c = 0; c < cols; ++c) {
    ColumnStats stats;
    stats.mean = sums[c] / R;
    stats.std_error = std::sqrt(sumsq[c] / (R - 1.0)) / std::sqrt(R);
    report.columns[labels[c + 1]] = stats;
  }

  auto interp_quantile = [](std::vector<double>& values, double p) {
    std::sort(values.begin(), values.end());
    const double pos = p * static_cast<double>(values.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return values[lo] * (1.0 - frac) + values[hi] * frac;
  };

  // Fluctuation quantiles over the bilinear probe columns. The gap comes
  // from the configured spectrum (identical to the realized one to 1e-10),
  // so summaries recomputed from a records CSV normalize the same way.
  const std::size_t bilinear_count = records.front().bilinear.size();
  const std::size_t shift_count = records.front().cluster_shifts.size();
  const std::size_t bilinear_offset = 2 + shift_count;  // after norm, regime, shifts
  const double gap =
      cluster_spectrum(config.spectrum, config.m, config.n,
                       kDefaultClusterRelTol)
          .gaps[config.cluster_index - 1];
  report.gap = gap;
  for (std::size_t b = 0; b < bilinear_count; ++b) {
    const std::string label = labels[1 + bilinear_offset + b];
    const double mean = report.columns[label].mean;
    std::vector<double> dev(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
      dev[i] = std::abs(table[i][bilinear_offset + b] - mean);
    }
    std::vector<double> med_copy = dev;
    report.abs_deviation_medians[label] = interp_quantile(med_copy, 0.5);
    for (double t : config.t_values) {
      const double level = 1.0 - std::exp(-t);
      std::vector<double> copy = dev;
      const double q = interp_quantile(copy, level);
      auto row = std::find_if(report.fluctuation_quantiles.begin(),
                              report.fluctuation_quantiles.end(),
                              [&](const auto& fq) { return fq.t == t; });
      if (row == report.fluctuation_quantiles.end()) {
        report.fluctuation_quantiles.push_back({t, level, {}, {}});
        row = std::prev(report.fluctuation_quantiles.end());
      }
      row->raw[label] = q;
      if (gap > 0.0 && config.tau > 0.0) {
        row->normalized[label] = q / (config.tau * std::sqrt(t) / gap);
      }
    }
  }

  if (theta_columns) {
    std::vector<double> linf(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) linf[i] = records[i].linf_theta;
    report.linf_theta_median = interp_quantile(linf, 0.5);
    if (has_linf_shrunk) {
      for (std::size_t i = 0; i < records.size(); ++i) {
        linf[i] = records[i].linf_shrunk;
      }
      const double med = interp_quantile(linf, 0.5);
      report.linf_shrunk_median = med;
      const double denom = std::sqrt(
          std::log(static_cast<double>(config.m + config.n)) /
          static_cast<double>(std::max(config.m, config.n)));
      report.linf_shrunk_median_normalized = med / denom;
    }
  }

  if (result) {
    const std::size_t k = config.cluster_index;
    const EigenMatrix meanP = result->mean_projector.to_eigen();
    const EigenMatrix P = result->signal.projectors.cluster(k).P.to_eigen();
    const EigenMatrix bias = meanP - P;
    report.bias_norm = operator_norm_symmetric(bias);

    // T_k = bias - P bias P via the cluster eigenvector block.
    const auto& delta = result->signal.clustering.index_sets[k - 1];
    const std::size_t nu = delta.size();
    const std::size_t N = config.m + config.n;
    EigenMatrix Theta(N, nu);
    const EigenMatrix U = result->signal.decomposition.left_vectors.to_eigen();
    const EigenMatrix V = result->signal.decomposition.right_vectors.to_eigen();
    for (std::size_t j = 0; j < nu; ++j) {
      const Eigen::Index col = static_cast<Eigen::Index>(delta[j] - 1);
      Theta.col(static_cast<Eigen::Index>(j)).head(config.m) = U.col(col);
      Theta.col(static_cast<Eigen::Index>(j)).tail(config.n) = V.col(col);
    }
    Theta /= std::numbers::sqrt2;
    const EigenMatrix core = Theta.transpose() * bias * Theta;
    const EigenMatrix T = bias - Theta * core * Theta.transpose();
    report.tk_norm = operator_norm_symmetric(0.5 * (T + T.transpose()));
    if (*report.bias_norm > 0.0) {
      report.tk_ratio = *report.tk_norm / *report.bias_norm;
    }
    report.bias_norm_split_halves_delta = std::abs(
        result->bias_norm_half_first - result->bias_norm_half_second);
    report.oracle = result->oracle;
  }
  return report;
}

SlopeFit scaling_fit(const std::vector<double>& sizes,
                     const std::vector<double>& values) {
  if (sizes.size() != values.size() || sizes.size() < 3) {
    throw std::invalid_argument("scaling_fit: need >= 3 (size, value) points");
  }
  std::vector<double> x(sizes.size()), y(sizes.size());
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    if (!(sizes[i] > 0.0) || !(values[i] > 0.0)) {
      throw std::invalid_argument("scaling_fit: sizes and values must be > 0");
    }
    x[i] = std::log(sizes[i]);
    y[i] = std::log(values[i]);
  }
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx == 0.0) {
    throw DegenerateFitError("scaling_fit: all sizes identical");
  }
  SlopeFit fit;
  fit.slope = sxy / sxx;
  double ss_res = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double pred = my + fit.slope * (x[i] - mx);
    ss_res += (y[i] - pred) * (y[i] - pred);
  }
  const double dof = n - 2.0;
  fit.std_error = dof > 0.0 ? std::sqrt(ss_res / dof / sxx) : 0.0;
  return fit;
}

}  // namespace svperturb
