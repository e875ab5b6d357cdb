#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "cluster_svd.hpp"
#include "svperturb/experiments.hpp"
#include "svperturb/linalg.hpp"
#include "svperturb/perturbation.hpp"

using namespace svperturb;

namespace {

ExperimentConfig small_config() {
  ExperimentConfig config;
  config.m = 12;
  config.n = 9;
  config.tau = 0.2;
  config.spectrum = {6.0, 3.0};
  config.cluster_index = 1;
  config.replicates = 40;
  config.master_seed = 99;
  config.t_values = {1.0, 2.0};
  config.random_probes = 2;
  return config;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

TEST_CASE("config json round-trip and validation") {
  const ExperimentConfig config = small_config();
  const ExperimentConfig back = ExperimentConfig::from_json(config.to_json());
  CHECK(back.m == config.m);
  CHECK(back.spectrum == config.spectrum);
  CHECK(back.random_probes == config.random_probes);

  nlohmann::json bad = config.to_json();
  bad["surprise"] = 1;
  CHECK_THROWS_AS(ExperimentConfig::from_json(bad), UsageError);

  nlohmann::json increasing = config.to_json();
  increasing["spectrum"] = {1.0, 2.0};
  CHECK_THROWS_AS(ExperimentConfig::from_json(increasing),
                  std::invalid_argument);

  nlohmann::json long_spectrum = config.to_json();
  long_spectrum["spectrum"] = std::vector<double>(30, 1.0);
  CHECK_THROWS_AS(ExperimentConfig::from_json(long_spectrum),
                  SpectrumTooLongError);
}

TEST_CASE("build_signal with identity factors embeds the spectrum") {
  ExperimentConfig config;
  config.m = 2;
  config.n = 2;
  config.tau = 0.1;
  config.spectrum = {3.0, 1.0};
  config.replicates = 2;
  const SignalBundle signal = build_signal(config);
  CHECK(signal.A(0, 0) == 3.0);
  CHECK(signal.A(1, 1) == 1.0);
  CHECK(signal.A(0, 1) == 0.0);
  CHECK(signal.clustering.cluster_count() == 2);
}

TEST_CASE("build_signal with random factors realizes the spectrum") {
  ExperimentConfig config = small_config();
  config.factors = FactorKind::kRandomOrthogonal;
  const SignalBundle signal = build_signal(config);
  for (std::size_t i = 0; i < config.spectrum.size(); ++i) {
    CHECK(std::abs(signal.decomposition.singular_values[i] -
                   config.spectrum[i]) < 1e-10 * config.spectrum[0]);
  }
  // Deterministic in the seed.
  const SignalBundle again = build_signal(config);
  CHECK(signal.A == again.A);
}

TEST_CASE("regime flag reflects the mean-norm estimate") {
  ExperimentConfig config = small_config();
  config.tau = 0.05;
  CHECK(build_signal(config).regime_ok);
  config.tau = 5.0;  // noise far beyond the gap: flag false, run proceeds
  const SignalBundle loud = build_signal(config);
  CHECK_FALSE(loud.regime_ok);
  CHECK(loud.mean_norm_estimate > 0.0);
}

TEST_CASE("zero-noise run has zero fluctuations and zero b_tilde") {
  ExperimentConfig config = small_config();
  config.tau = 0.0;
  config.replicates = 2;
  const RunResult run = run_replicates(config);
  for (const auto& rec : run.records) {
    CHECK(rec.norm_gamma == 0.0);
    CHECK(std::abs(rec.b_tilde) < 1e-12);
    CHECK(rec.norm_L < 1e-12);
    CHECK(rec.norm_S < 1e-9);
    CHECK(rec.norm_Pdiff < 1e-9);
  }
  CHECK(max_abs_diff(run.mean_projector,
                     run.signal.projectors.cluster(1).P) < 1e-9);
}

TEST_CASE("records are identical across thread counts") {
  const ExperimentConfig config = small_config();
  const RunResult one = run_replicates(config, 1);
  const RunResult four = run_replicates(config, 4);
  REQUIRE(one.records.size() == four.records.size());
  for (std::size_t i = 0; i < one.records.size(); ++i) {
    CHECK(one.records[i].norm_gamma == four.records[i].norm_gamma);
    CHECK(one.records[i].bilinear == four.records[i].bilinear);
    CHECK(one.records[i].b_tilde == four.records[i].b_tilde);
    CHECK(one.records[i].norm_S == four.records[i].norm_S);
  }
  CHECK(one.mean_projector == four.mean_projector);
}

TEST_CASE("wide signals (m < n) run through the same pipeline") {
  ExperimentConfig config = small_config();
  config.m = 8;
  config.n = 11;
  config.tau = 0.15;
  const RunResult run = run_replicates(config, 2);
  const double gap = run.signal.clustering.gaps[0];
  for (const auto& rec : run.records) {
    CHECK(rec.in_regime);
    CHECK(rec.norm_Pdiff <= 4.0 * rec.norm_gamma / gap + 1e-9);
  }
  const RunResult again = run_replicates(config, 1);
  CHECK(run.mean_projector == again.mean_projector);
}

TEST_CASE("fast replicate norms agree with the dense perturbation path") {
  const ExperimentConfig config = small_config();
  const SignalBundle signal = build_signal(config);
  const DenseMatrix B = dilate(signal.A);
  std::mt19937_64 rng(555);
  std::normal_distribution<double> gauss;

  for (int trial = 0; trial < 5; ++trial) {
    DenseMatrix X(config.m, config.n);
    for (std::size_t i = 0; i < config.m; ++i) {
      for (std::size_t j = 0; j < config.n; ++j) X(i, j) = 0.2 * gauss(rng);
    }
    const PerturbationSplit dense = perturbation_split(
        B, dilate(X), signal.projectors, signal.clustering, 1);

    // Fast route: cluster triples by subspace iteration, then compressed
    // norms on the low-rank span.
    const auto& delta = signal.clustering.index_sets[0];
    const std::size_t nu = delta.size();
    const EigenMatrix At = signal.A.to_eigen() + X.to_eigen();
    const EigenMatrix warm =
        signal.decomposition.right_vectors.to_eigen().leftCols(
            static_cast<Eigen::Index>(delta.back()));
    const detail::TopBlockSvd top =
        detail::top_block_svd(At, delta.back(), warm);
    const std::size_t N = config.m + config.n;
    EigenMatrix Theta(N, nu), ThetaTilde(N, nu);
    for (std::size_t j = 0; j < nu; ++j) {
      const Eigen::Index col = static_cast<Eigen::Index>(delta[j] - 1);
      Theta.col(j).head(config.m) =
          signal.decomposition.left_vectors.to_eigen().col(col);
      Theta.col(j).tail(config.n) =
          signal.decomposition.right_vectors.to_eigen().col(col);
      ThetaTilde.col(j).head(config.m) = top.U.col(col);
      ThetaTilde.col(j).tail(config.n) = top.V.col(col);
    }
    Theta /= std::sqrt(2.0);
    ThetaTilde /= std::sqrt(2.0);
    const detail::SplitNorms fast = detail::split_norms_lowrank(
        X.to_eigen(), Theta, ThetaTilde,
        signal.projectors.cluster(1).C.to_eigen(), config.m);

    CHECK(fast.norm_L == doctest::Approx(operator_norm(dense.L)).epsilon(1e-9));
    CHECK(fast.norm_S == doctest::Approx(operator_norm(dense.S)).epsilon(1e-9));
    const double dense_pdiff = operator_norm(DenseMatrix::from_eigen(
        dense.L.to_eigen() + dense.S.to_eigen()));
    CHECK(fast.norm_Pdiff == doctest::Approx(dense_pdiff).epsilon(1e-9));
  }
}

TEST_CASE("top_block_svd matches the full decomposition") {
  std::mt19937_64 rng(777);
  std::normal_distribution<double> gauss;
  DenseMatrix A(10, 8);
  for (std::size_t i = 0; i < 10; ++i) {
    for (std::size_t j = 0; j < 8; ++j) A(i, j) = gauss(rng);
  }
  const SvdDecomposition full = svd(A);
  EigenMatrix warm(8, 2);  // deliberately cold start: canonical columns
  warm.setZero();
  warm(0, 0) = warm(1, 1) = 1.0;
  const detail::TopBlockSvd top = detail::top_block_svd(A.to_eigen(), 2, warm);
  for (int j = 0; j < 2; ++j) {
    CHECK(top.sigma[j] ==
          doctest::Approx(full.singular_values[j]).epsilon(1e-10));
    const double u_align =
        std::abs(top.U.col(j).dot(full.left_vectors.to_eigen().col(j)));
    CHECK(u_align == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("summarize aggregates, quantiles and bias decomposition") {
  ExperimentConfig config = small_config();
  config.replicates = 200;
  const RunResult run = run_replicates(config, 2);
  const SummaryReport report = summarize(run.records, config, &run);
  CHECK(report.record_count == 200);
  CHECK(report.columns.count("norm_gamma") == 1);
  CHECK(report.columns.at("norm_gamma").mean > 0.0);
  CHECK(report.bias_norm.has_value());
  CHECK(report.tk_norm.has_value());
  REQUIRE(report.fluctuation_quantiles.size() == 2);
  // Quantile levels are 1 - e^{-t}.
  CHECK(report.fluctuation_quantiles[0].level ==
        doctest::Approx(1.0 - std::exp(-1.0)));

  // Normalized quantile ratios across t stay within a modest factor, as the
  // sub-Gaussian sqrt(t) scaling predicts.
  const std::string pair = "bilin_c_1_2";
  std::vector<double> normalized;
  for (const auto& fq : report.fluctuation_quantiles) {
    normalized.push_back(fq.normalized.at(pair));
  }
  const double ratio = normalized[0] / normalized[1];
  CHECK(ratio < 3.0);
  CHECK(ratio > 1.0 / 3.0);

  // Every probe-pair quantile obeys the sub-Gaussian envelope
  // q <= C (tau sqrt(t)/gap) (tau(sqrt(m v n) + sqrt(t))/gap + 1), C <= 10.
  const double gap = report.gap;
  const double root_size =
      std::sqrt(static_cast<double>(std::max(config.m, config.n)));
  for (const auto& fq : report.fluctuation_quantiles) {
    const double envelope =
        config.tau * (root_size + std::sqrt(fq.t)) / gap + 1.0;
    for (const auto& [label, value] : fq.normalized) {
      CHECK(value <= 10.0 * envelope);
    }
  }

  // The off-alignment part of the pooled bias stays below the bias itself
  // whenever the bias is resolved well above its split-half error bar.
  if (*report.bias_norm > 5.0 * *report.bias_norm_split_halves_delta) {
    CHECK(*report.tk_norm < *report.bias_norm);
  }

  CHECK_THROWS_AS(
      summarize(std::vector<ReplicateRecord>(run.records.begin(),
                                             run.records.begin() + 10),
                config, &run),
      InsufficientReplicatesError);
}

TEST_CASE("zero-noise pooled mean equals the signal projector") {
  ExperimentConfig config = small_config();
  config.tau = 0.0;
  config.replicates = 30;
  const RunResult run = run_replicates(config);
  const SummaryReport report = summarize(run.records, config, &run);
  CHECK(*report.bias_norm < 1e-9);
}

TEST_CASE("in-regime fraction is essentially one under the margin condition") {
  ExperimentConfig config;
  config.m = 30;
  config.n = 30;
  config.spectrum = {20.0};
  config.tau = 0.5;  // mean |X| about 5.5 <= 0.75 (1-gamma) gap/2
  config.replicates = 200;
  config.master_seed = 11;
  const SignalBundle signal = build_signal(config);
  CHECK(signal.mean_norm_estimate <=
        0.75 * (1.0 - config.gamma) * signal.clustering.gaps[0] / 2.0);
  const RunResult run = run_replicates(config, 2);
  std::size_t in_regime = 0;
  for (const auto& rec : run.records) {
    if (rec.in_regime) ++in_regime;
  }
  CHECK(static_cast<double>(in_regime) / config.replicates >= 0.99);
}

TEST_CASE("scaling_fit recovers synthetic slopes") {
  const std::vector<double> sizes = {100, 200, 400, 800};
  std::vector<double> half_power, constant;
  for (double s : sizes) {
    half_power.push_back(3.0 / std::sqrt(s));
    constant.push_back(2.0);
  }
  const SlopeFit fit = scaling_fit(sizes, half_power);
  CHECK(fit.slope == doctest::Approx(-0.5).epsilon(1e-12));
  CHECK(fit.std_error < 1e-12);
  CHECK(scaling_fit(sizes, constant).slope == doctest::Approx(0.0));
  CHECK_THROWS_AS(scaling_fit({100, 100, 100}, {1.0, 2.0, 3.0}),
                  DegenerateFitError);
  CHECK_THROWS_AS(scaling_fit({100, 200}, {1.0, 2.0}), std::invalid_argument);
}

TEST_CASE("emitted records round-trip bit-exactly") {
  namespace fs = std::filesystem;
  ExperimentConfig config = small_config();
  config.oracle_replicates = 100;
  const RunResult run = run_replicates(config, 2);
  const SummaryReport report = summarize(run.records, config, &run);
  const std::string dir = "test_emit_roundtrip";
  fs::create_directories(dir);
  emit(run, report,
       {dir + "/records.csv", dir + "/summary.json",
        dir + "/mean_projector.csv", ""});

  const ParsedRecords parsed = parse_records_csv(dir + "/records.csv");
  CHECK(parsed.config.m == config.m);
  CHECK(parsed.theta_columns);
  CHECK(parsed.has_linf_shrunk);
  REQUIRE(parsed.records.size() == run.records.size());
  for (std::size_t i = 0; i < run.records.size(); ++i) {
    CHECK(parsed.records[i].norm_gamma == run.records[i].norm_gamma);
    CHECK(parsed.records[i].bilinear == run.records[i].bilinear);
    CHECK(parsed.records[i].linear == run.records[i].linear);
    CHECK(parsed.records[i].b_tilde == run.records[i].b_tilde);
    CHECK(parsed.records[i].linf_shrunk == run.records[i].linf_shrunk);
  }

  // The summary from the parsed records matches the scalar aggregates.
  const SummaryReport re_report = summarize(parsed.records, parsed.config);
  CHECK(re_report.columns.at("norm_gamma").mean ==
        report.columns.at("norm_gamma").mean);

  // Documented summary schema.
  nlohmann::json j = nlohmann::json::parse(slurp(dir + "/summary.json"));
  for (const char* key :
       {"version", "config", "record_count", "columns",
        "fluctuation_quantiles", "abs_deviation_medians", "bias_decomposition",
        "oracle"}) {
    CHECK(j.contains(key));
  }
  CHECK(j["config"]["m"] == config.m);

  fs::remove_all(dir);
}

TEST_CASE("emit writes a header-only csv for an empty record list") {
  ExperimentConfig config = small_config();
  config.replicates = 2;
  RunResult run = run_replicates(config);
  const SummaryReport report;  // empty summary: only the csv matters here
  run.records.clear();
  const std::string dir = "test_emit_empty";
  std::filesystem::create_directories(dir);
  emit(run, report, {dir + "/records.csv", dir + "/summary.json", "", ""});
  std::ifstream in(dir + "/records.csv");
  std::string line;
  std::size_t lines = 0, data_lines = 0;
  while (std::getline(in, line)) {
    ++lines;
    if (!line.empty() && line[0] != '#' && line.rfind("replicate", 0) != 0) {
      ++data_lines;
    }
  }
  CHECK(lines == 3);  // version, config, header
  CHECK(data_lines == 0);
  std::filesystem::remove_all(dir);
}

TEST_CASE("identical records give zero variance and flat quantiles") {
  ExperimentConfig config = small_config();
  config.tau = 0.0;
  config.replicates = 40;
  const RunResult run = run_replicates(config);
  const SummaryReport report = summarize(run.records, config, &run);
  // Records are identical, so deviations vanish to accumulation rounding.
  for (const auto& fq : report.fluctuation_quantiles) {
    for (const auto& [label, value] : fq.raw) {
      CHECK(value < 1e-14);
    }
  }
  CHECK(report.columns.at("bilin_c_1_1").std_error < 1e-14);
}
