#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "svperturb/dense_matrix.hpp"
#include "svperturb/dilation.hpp"
#include "svperturb/estimator.hpp"
#include "svperturb/noise.hpp"

namespace svperturb {

inline constexpr const char* kVersionString = "svperturb 0.1.0";

enum class FactorKind { kIdentity, kRandomOrthogonal };

struct SizePoint {
  std::size_t m = 0;
  std::size_t n = 0;
  double spectrum_scale = 1.0;
};

/// Declarative Monte Carlo experiment. The signal is A = U diag(spectrum) V^T
/// with identity-embedded or seeded random orthogonal factors; cluster_index
/// selects the monitored cluster of the spectrum.
struct ExperimentConfig {
  std::size_t m = 0;
  std::size_t n = 0;
  double tau = 1.0;
  std::vector<double> spectrum;
  FactorKind factors = FactorKind::kIdentity;
  std::size_t cluster_index = 1;
  std::size_t replicates = 2000;
  std::uint64_t master_seed = 1;
  double gamma = 0.25;
  double c2 = 1.0;
  std::vector<double> t_values = {1.0, 2.0, 4.0};
  std::size_t random_probes = 5;  // seeded random unit pairs
  std::size_t oracle_replicates = 0;  // 0 disables the bias oracle
  std::vector<SizePoint> size_sweep;  // empty: single run at (m, n)

  /// Rejects unknown keys and validates the invariants.
  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig from_json_file(const std::string& path);
  nlohmann::json to_json() const;

  /// The config specialized to one sweep point (scaled spectrum, same seed).
  ExperimentConfig at_size(const SizePoint& point) const;

  void validate() const;

  /// Canonical probe pairs run over (e_i, e_j) with i, j up to this count.
  std::size_t canonical_probe_count() const {
    return std::min<std::size_t>(10, m + n);
  }
};

/// Signal-side artifacts shared by every replicate of a run.
struct SignalBundle {
  DenseMatrix A;
  SvdDecomposition decomposition;
  SpectrumClustering clustering;
  ProjectorSet projectors;
  double mean_norm_estimate = 0.0;  // 100-replicate estimate of E|X|
  bool regime_ok = false;  // mean_norm_estimate <= (1-gamma) * gap / 2
};

SignalBundle build_signal(const ExperimentConfig& config,
                          std::size_t threads = 1);

/// One replicate's measurements. Vector-valued fields follow the probe
/// layout (canonical pairs row-major, then random pairs). Fields that only
/// make sense for multiplicity-1 clusters are NaN-free by construction:
/// they are simply absent from the CSV when nu_k > 1.
struct ReplicateRecord {
  std::size_t replicate = 0;
  double norm_gamma = 0.0;
  bool in_regime = false;
  std::vector<double> cluster_shifts;   // |sigma_tilde_j - mu_k|, j in Delta_k
  std::vector<double> bilinear;         // <P_tilde x, y> per probe pair
  std::vector<double> linear;           // <theta_tilde, x> per probe x (nu=1)
  double norm_L = 0.0;
  double norm_S = 0.0;
  double norm_Pdiff = 0.0;
  double dot_theta = 0.0;   // <theta_tilde, theta>, sign-aligned (nu=1)
  double b_tilde = 0.0;     // two-sample estimate shared by the pair (nu=1)
  double linf_theta = 0.0;  // |theta_tilde - theta|_inf (nu=1)
  double linf_shrunk = 0.0; // |theta_tilde - sqrt(1+b_hat) theta|_inf (oracle)
};

struct RunResult {
  ExperimentConfig config;
  SignalBundle signal;
  std::vector<ReplicateRecord> records;
  DenseMatrix mean_projector;          // pooled mean of P_tilde
  double bias_norm_half_first = 0.0;   // |mean P_tilde - P| on each half,
  double bias_norm_half_second = 0.0;  // for a split-half error bar
  std::optional<BiasOracle> oracle;
  bool theta_columns = false;          // nu_k == 1
  bool used_fallback_svd = false;
};

/// Runs all replicates. Record i is a pure function of (config, i); threads
/// only partition the index range, and every aggregate is reduced in index
/// order, so output is identical at any thread count.
RunResult run_replicates(const ExperimentConfig& config,
                         std::size_t threads = 1);

struct ColumnStats {
  double mean = 0.0;
  double std_error = 0.0;
};

struct SummaryReport {
  std::size_t record_count = 0;
  double tau = 0.0;
  double gap = 0.0;
  std::map<std::string, ColumnStats> columns;
  // For each t: the empirical (1 - e^{-t})-quantile of |b - mean(b)| per
  // probe-pair column, raw and normalized by tau * sqrt(t) / gap.
  struct FluctuationQuantiles {
    double t = 0.0;
    double level = 0.0;
    std::map<std::string, double> raw;
    std::map<std::string, double> normalized;
  };
  std::vector<FluctuationQuantiles> fluctuation_quantiles;
  std::map<std::string, double> abs_deviation_medians;  // per pair column
  // Bias decomposition, available when the pooled projector is at hand.
  std::optional<double> bias_norm;
  std::optional<double> tk_norm;
  std::optional<double> tk_ratio;
  std::optional<double> bias_norm_split_halves_delta;
  std::optional<double> linf_theta_median;
  std::optional<double> linf_shrunk_median;
  std::optional<double> linf_shrunk_median_normalized;
  std::optional<BiasOracle> oracle;

  nlohmann::json to_json(const ExperimentConfig& config) const;
};

/// Aggregates records; InsufficientReplicatesError below 30 records.
/// `result` supplies the pooled projector context when available.
SummaryReport summarize(const std::vector<ReplicateRecord>& records,
                        const ExperimentConfig& config,
                        const RunResult* result = nullptr);

struct SlopeFit {
  double slope = 0.0;
  double std_error = 0.0;
};

/// OLS slope of log(value) against log(size); needs >= 3 distinct sizes.
SlopeFit scaling_fit(const std::vector<double>& sizes,
                     const std::vector<double>& values);

struct EmitPaths {
  std::string records_csv;
  std::string summary_json;
  std::string mean_projector_csv;   // optional; empty skips
  std::string signal_projector_csv; // optional; empty skips
};

/// Writes records (CSV, fixed header, 17 significant digits, config echo and
/// version in comment lines) and the summary (pretty JSON). Byte-stable for
/// identical inputs.
void emit(const RunResult& result, const SummaryReport& report,
          const EmitPaths& paths);

struct ParsedRecords {
  ExperimentConfig config;
  std::vector<ReplicateRecord> records;
  bool theta_columns = false;
  bool has_linf_shrunk = false;
};

ParsedRecords parse_records_csv(const std::string& path);

/// Column labels in CSV order for a given config/record shape; shared by
/// emit, parse and the summary.
std::vector<std::string> record_column_labels(const ExperimentConfig& config,
                                              std::size_t shift_count,
                                              bool theta_columns,
                                              bool has_linf_shrunk);

}  // namespace svperturb
