#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "svperturb/experiments.hpp"

namespace svperturb {

std::vector<std::string> record_column_labels(const ExperimentConfig& config,
                                              std::size_t shift_count,
                                              bool theta_columns,
                                              bool has_linf_shrunk) {
  std::vector<std::string> labels{"replicate", "norm_gamma", "in_regime"};
  for (std::size_t j = 1; j <= shift_count; ++j) {
    labels.push_back("shift_" + std::to_string(j));
  }
  const std::size_t c = config.canonical_probe_count();
  for (std::size_t i = 1; i <= c; ++i) {
    for (std::size_t j = 1; j <= c; ++j) {
      labels.push_back("bilin_c_" + std::to_string(i) + "_" + std::to_string(j));
    }
  }
  for (std::size_t p = 1; p <= config.random_probes; ++p) {
    labels.push_back("bilin_r_" + std::to_string(p));
  }
  if (theta_columns) {
    for (std::size_t i = 1; i <= c; ++i) {
      labels.push_back("lin_c_" + std::to_string(i));
    }
    for (std::size_t p = 1; p <= config.random_probes; ++p) {
      labels.push_back("lin_r_" + std::to_string(p));
    }
  }
  labels.push_back("norm_L");
  labels.push_back("norm_S");
  labels.push_back("norm_Pdiff");
  if (theta_columns) {
    labels.push_back("dot_theta");
    labels.push_back("b_tilde");
    labels.push_back("linf_theta");
    if (has_linf_shrunk) labels.push_back("linf_shrunk");
  }
  return labels;
}

namespace {

std::string format17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void emit(const RunResult& result, const SummaryReport& report,
          const EmitPaths& paths) {
  const ExperimentConfig& config = result.config;
  const bool has_linf_shrunk = result.oracle.has_value();
  const std::size_t shift_count =
      result.records.empty() ? 0 : result.records.front().cluster_shifts.size();
  const auto labels = record_column_labels(config, shift_count,
                                           result.theta_columns, has_linf_shrunk);

  {
    std::ofstream out(paths.records_csv);
    if (!out) throw IoError("cannot write " + paths.records_csv);
    out << "# " << kVersionString << "\n";
    out << "# config " << config.to_json().dump() << "\n";
    for (std::size_t c = 0; c < labels.size(); ++c) {
      out << labels[c] << (c + 1 == labels.size() ? "" : ",");
    }
    out << "\n";
    for (const auto& rec : result.records) {
      out << rec.replicate << "," << format17(rec.norm_gamma) << ","
          << (rec.in_regime ? 1 : 0);
      for (double s : rec.cluster_shifts) out << "," << format17(s);
      for (double b : rec.bilinear) out << "," << format17(b);
      if (result.theta_columns) {
        for (double l : rec.linear) out << "," << format17(l);
      }
      out << "," << format17(rec.norm_L) << "," << format17(rec.norm_S) << ","
          << format17(rec.norm_Pdiff);
      if (result.theta_columns) {
        out << "," << format17(rec.dot_theta) << "," << format17(rec.b_tilde)
            << "," << format17(rec.linf_theta);
        if (has_linf_shrunk) out << "," << format17(rec.linf_shrunk);
      }
      out << "\n";
    }
    if (!out) throw IoError("write failed: " + paths.records_csv);
  }

  {
    std::ofstream out(paths.summary_json);
    if (!out) throw IoError("cannot write " + paths.summary_json);
    out << report.to_json(config).dump(2) << "\n";
    if (!out) throw IoError("write failed: " + paths.summary_json);
  }

  if (!paths.mean_projector_csv.empty()) {
    write_matrix_csv(result.mean_projector, paths.mean_projector_csv);
  }
  if (!paths.signal_projector_csv.empty()) {
    write_matrix_csv(result.signal.projectors.cluster(config.cluster_index).P,
                     paths.signal_projector_csv);
  }
}

ParsedRecords parse_records_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string line;
  nlohmann::json config_json;
  std::vector<std::string> labels;
  // Comment preamble, then the header row.
  while (std::getline(in, line)) {
    if (line.rfind("# config ", 0) == 0) {
      config_json = nlohmann::json::parse(line.substr(9));
      continue;
    }
    if (!line.empty() && line[0] == '#') continue;
    if (line.empty()) continue;
    std::istringstream header(line);
    std::string cell;
    while (std::getline(header, cell, ',')) labels.push_back(cell);
    break;
  }
  if (config_json.is_null()) throw IoError(path + ": missing config line");
  if (labels.empty() || labels[0] != "replicate") {
    throw IoError(path + ": missing record header");
  }

  ParsedRecords parsed;
  parsed.config = ExperimentConfig::from_json(config_json);
  parsed.theta_columns =
      std::find(labels.begin(), labels.end(), "dot_theta") != labels.end();
  parsed.has_linf_shrunk =
      std::find(labels.begin(), labels.end(), "linf_shrunk") != labels.end();

  std::size_t shift_count = 0;
  std::size_t bilinear_count = 0;
  std::size_t linear_count = 0;
  for (const auto& label : labels) {
    if (label.rfind("shift_", 0) == 0) ++shift_count;
    if (label.rfind("bilin_", 0) == 0) ++bilinear_count;
    if (label.rfind("lin_", 0) == 0) ++linear_count;
  }

  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream row(line);
    std::string cell;
    std::vector<double> values;
    while (std::getline(row, cell, ',')) values.push_back(std::stod(cell));
    if (values.size() != labels.size()) {
      throw IoError(path + ": row width does not match header");
    }
    ReplicateRecord rec;
    std::size_t at = 0;
    rec.replicate = static_cast<std::size_t>(values[at++]);
    rec.norm_gamma = values[at++];
    rec.in_regime = values[at++] != 0.0;
    rec.cluster_shifts.assign(values.begin() + at,
                              values.begin() + at + shift_count);
    at += shift_count;
    rec.bilinear.assign(values.begin() + at, values.begin() + at + bilinear_count);
    at += bilinear_count;
    if (parsed.theta_columns) {
      rec.linear.assign(values.begin() + at, values.begin() + at + linear_count);
      at += linear_count;
    }
    rec.norm_L = values[at++];
    rec.norm_S = values[at++];
    rec.norm_Pdiff = values[at++];
    if (parsed.theta_columns) {
      rec.dot_theta = values[at++];
      rec.b_tilde = values[at++];
      rec.linf_theta = values[at++];
      if (parsed.has_linf_shrunk) rec.linf_shrunk = values[at++];
    }
    parsed.records.push_back(std::move(rec));
  }
  return parsed;
}

nlohmann::json SummaryReport::to_json(const ExperimentConfig& config) const {
  nlohmann::json j;
  j["version"] = kVersionString;
  j["config"] = config.to_json();
  j["record_count"] = record_count;
  j["gap"] = gap;

  nlohmann::json cols;
  for (const auto& [label, stats] : columns) {
    cols[label] = {{"mean", stats.mean}, {"std_error", stats.std_error}};
  }
  j["columns"] = cols;

  nlohmann::json quantiles = nlohmann::json::array();
  for (const auto& fq : fluctuation_quantiles) {
    nlohmann::json row;
    row["t"] = fq.t;
    row["level"] = fq.level;
    row["raw"] = fq.raw;
    row["normalized"] = fq.normalized;
    quantiles.push_back(row);
  }
  j["fluctuation_quantiles"] = quantiles;
  j["abs_deviation_medians"] = abs_deviation_medians;

  if (bias_norm) {
    nlohmann::json bias;
    bias["bias_norm"] = *bias_norm;
    if (tk_norm) bias["tk_norm"] = *tk_norm;
    if (tk_ratio) bias["tk_ratio"] = *tk_ratio;
    if (bias_norm_split_halves_delta) {
      bias["bias_norm_split_halves_delta"] = *bias_norm_split_halves_delta;
    }
    j["bias_decomposition"] = bias;
  }
  if (linf_theta_median) {
    nlohmann::json linf;
    linf["linf_theta_median"] = *linf_theta_median;
    if (linf_shrunk_median) linf["linf_shrunk_median"] = *linf_shrunk_median;
    if (linf_shrunk_median_normalized) {
      linf["linf_shrunk_median_normalized"] = *linf_shrunk_median_normalized;
    }
    j["linf"] = linf;
  }
  if (oracle) {
    j["oracle"] = {{"b_hat", oracle->b_hat},
                   {"std_error", oracle->std_error},
                   {"replicates", oracle->replicates}};
  }
  return j;
}

}  // namespace svperturb
