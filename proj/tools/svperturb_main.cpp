#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <optional>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "svperturb/estimator.hpp"
#include "svperturb/experiments.hpp"
#include "svperturb/linalg.hpp"
#include "svperturb/verify.hpp"

namespace {

using namespace svperturb;

std::size_t resolve_threads(std::size_t cli_threads) {
  // SVPERTURB_THREADS overrides --threads when set.
  if (const char* env = std::getenv("SVPERTURB_THREADS")) {
    const long parsed = std::strtol(env, nullptr, 10);
    if (parsed > 0) return static_cast<std::size_t>(parsed);
  }
  if (cli_threads > 0) return cli_threads;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? hw : 1;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << text;
  if (!out) throw IoError("write failed: " + path);
}

int run_simulate(const std::string& config_path, const std::string& out_dir,
                 std::size_t threads) {
  namespace fs = std::filesystem;
  const ExperimentConfig config = ExperimentConfig::from_json_file(config_path);
  fs::create_directories(out_dir);

  auto run_single = [&](const ExperimentConfig& cfg, const std::string& dir) {
    fs::create_directories(dir);
    const RunResult run = run_replicates(cfg, threads);
    const SummaryReport report = summarize(run.records, cfg, &run);
    emit(run, report,
         {dir + "/records.csv", dir + "/summary.json",
          dir + "/mean_projector.csv", dir + "/signal_projector.csv"});
    return report;
  };

  if (config.size_sweep.empty()) {
    run_single(config, out_dir);
    return 0;
  }

  // Sweep: one subdirectory per size plus slope fits over the tracked
  // medians and bias quantities.
  std::vector<double> sizes, fluct_medians, bias_norms, tk_norms;
  nlohmann::json per_size = nlohmann::json::array();
  for (const SizePoint& point : config.size_sweep) {
    const ExperimentConfig scaled = config.at_size(point);
    const std::string dir =
        out_dir + "/size_" + std::to_string(std::max(point.m, point.n));
    const SummaryReport report = run_single(scaled, dir);
    sizes.push_back(static_cast<double>(std::max(point.m, point.n)));
    const std::string pair_label = "bilin_c_1_2";
    if (report.abs_deviation_medians.count(pair_label)) {
      fluct_medians.push_back(report.abs_deviation_medians.at(pair_label));
    }
    if (report.bias_norm) bias_norms.push_back(*report.bias_norm);
    if (report.tk_norm) tk_norms.push_back(*report.tk_norm);
    nlohmann::json entry;
    entry["size"] = std::max(point.m, point.n);
    entry["dir"] = dir;
    if (report.bias_norm) entry["bias_norm"] = *report.bias_norm;
    if (report.tk_norm) entry["tk_norm"] = *report.tk_norm;
    if (report.tk_ratio) entry["tk_ratio"] = *report.tk_ratio;
    if (report.linf_shrunk_median_normalized) {
      entry["linf_shrunk_median_normalized"] =
          *report.linf_shrunk_median_normalized;
    }
    if (report.abs_deviation_medians.count(pair_label)) {
      entry["fluct_median_12"] = report.abs_deviation_medians.at(pair_label);
    }
    per_size.push_back(entry);
  }

  nlohmann::json sweep;
  sweep["version"] = kVersionString;
  sweep["config"] = config.to_json();
  sweep["per_size"] = per_size;
  auto fit_into = [&](const std::vector<double>& values, const char* key) {
    if (values.size() == sizes.size() && sizes.size() >= 3) {
      const SlopeFit fit = scaling_fit(sizes, values);
      sweep["slopes"][key] = {{"slope", fit.slope},
                              {"std_error", fit.std_error}};
    }
  };
  fit_into(fluct_medians, "fluct_median_12");
  fit_into(bias_norms, "bias_norm");
  fit_into(tk_norms, "tk_norm");
  write_text(out_dir + "/sweep_summary.json", sweep.dump(2) + "\n");
  return 0;
}

int run_verify(const std::string& suite, const std::string& config_path,
               const std::string& out_path, std::size_t threads,
               const std::string& self_path) {
  VerifyOptions options;
  options.threads = threads;
  options.cli_path = self_path;
  options.scratch_dir = std::filesystem::temp_directory_path().string();
  if (!config_path.empty()) {
    // Validated and echoed; the suites themselves pin their parameters.
    ExperimentConfig::from_json_file(config_path);
  }
  const auto results = run_suite(suite, options);
  bool all_passed = true;
  for (const auto& r : results) {
    std::cout << (r.passed ? "[PASS] " : "[FAIL] ") << r.name << ": "
              << r.details << " (" << r.seconds << " s)\n";
    all_passed = all_passed && r.passed;
  }
  if (!out_path.empty()) {
    nlohmann::json j;
    j["version"] = kVersionString;
    j["suite"] = suite;
    j["all_passed"] = all_passed;
    j["results"] = nlohmann::json::array();
    for (const auto& r : results) {
      j["results"].push_back({{"name", r.name},
                              {"passed", r.passed},
                              {"details", r.details},
                              {"seconds", r.seconds}});
    }
    write_text(out_path, j.dump(2) + "\n");
  }
  return all_passed ? 0 : 3;
}

int run_debias_cmd(const std::string& path_a, const std::string& path_b,
                   std::size_t k, double gamma, const std::string& out_path) {
  const DenseMatrix A1 = read_matrix_csv(path_a);
  const DenseMatrix A2 = read_matrix_csv(path_b);
  if (A1.rows() != A2.rows() || A1.cols() != A2.cols()) {
    throw DimensionMismatchError("debias: observation shapes differ");
  }
  const std::size_t m = A1.rows(), n = A1.cols();
  if (k < 1 || k > std::min(m, n)) {
    throw IndexOutOfRangeError("debias: k outside 1..min(m,n)");
  }

  auto theta_at = [&](const DenseMatrix& obs) {
    const SvdDecomposition dec = svd(obs);
    std::vector<double> theta(m + n);
    for (std::size_t i = 0; i < m; ++i) {
      theta[i] = dec.left_vectors(i, k - 1) / std::numbers::sqrt2;
    }
    for (std::size_t j = 0; j < n; ++j) {
      theta[m + j] = dec.right_vectors(j, k - 1) / std::numbers::sqrt2;
    }
    return theta;
  };
  const std::vector<double> theta1 = theta_at(A1);
  const std::vector<double> theta2 = theta_at(A2);
  const BiasEstimate estimate = estimate_bias_two_sample(theta1, theta2, gamma);
  const std::vector<double> debiased = debias(theta1, estimate);

  std::ofstream out(out_path);
  if (!out) throw IoError("cannot write " + out_path);
  out << "name,index,value\n";
  char buf[32];
  auto put = [&](const char* name, std::size_t index, double value) {
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    out << name << "," << index << "," << buf << "\n";
  };
  put("b_tilde", 0, estimate.b_tilde);
  put("gamma", 0, estimate.gamma);
  put("floor_active", 0, estimate.floor_active ? 1.0 : 0.0);
  for (std::size_t i = 0; i < debiased.size(); ++i) {
    put("theta_hat", i + 1, debiased[i]);
  }
  for (std::size_t i = 0; i < theta1.size(); ++i) {
    put("theta_1", i + 1, theta1[i]);
  }
  if (!out) throw IoError("write failed: " + out_path);
  return 0;
}

int run_report(const std::string& records_path, const std::string& out_path) {
  const ParsedRecords parsed = parse_records_csv(records_path);
  const SummaryReport report = summarize(parsed.records, parsed.config, nullptr);
  write_text(out_path, report.to_json(parsed.config).dump(2) + "\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Singular-vector perturbation experiments under Gaussian noise"};
  app.require_subcommand(1);

  std::string config_path, out_dir, suite = "all", out_path;
  std::string matrix_a, matrix_b, records_path;
  std::size_t threads = 0, k = 1;
  double gamma = 0.25;

  auto* simulate = app.add_subcommand("simulate", "Run a Monte Carlo experiment");
  simulate->add_option("--config", config_path, "Experiment config JSON")
      ->required();
  simulate->add_option("--out-dir", out_dir, "Output directory")->required();
  simulate->add_option("--threads", threads, "Worker threads");

  auto* verify = app.add_subcommand("verify", "Run verification suites");
  verify->add_option("--suite", suite, "algebra|bounds|scaling|debias|all");
  verify->add_option("--config", config_path, "Optional config echo");
  verify->add_option("--out", out_path, "Write a JSON report");
  verify->add_option("--threads", threads, "Worker threads");

  auto* debias_cmd = app.add_subcommand("debias", "Two-sample debiasing");
  debias_cmd->add_option("--matrix-a", matrix_a, "First observation CSV")
      ->required();
  debias_cmd->add_option("--matrix-b", matrix_b, "Second observation CSV")
      ->required();
  debias_cmd->add_option("--k", k, "Singular value index (1-based)")
      ->required();
  debias_cmd->add_option("--gamma", gamma, "Floor parameter in (0,1)")
      ->required();
  debias_cmd->add_option("--out", out_path, "Output CSV")->required();

  auto* report = app.add_subcommand("report", "Summarize a records CSV");
  report->add_option("--records", records_path, "records.csv from simulate")
      ->required();
  report->add_option("--out", out_path, "Summary JSON path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (simulate->parsed()) {
      return run_simulate(config_path, out_dir, resolve_threads(threads));
    }
    if (verify->parsed()) {
      return run_verify(suite, config_path, out_path, resolve_threads(threads),
                        argv[0]);
    }
    if (debias_cmd->parsed()) {
      return run_debias_cmd(matrix_a, matrix_b, k, gamma, out_path);
    }
    if (report->parsed()) {
      return run_report(records_path, out_path);
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
