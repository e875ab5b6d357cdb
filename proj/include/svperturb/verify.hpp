#pragma once

#include <string>
#include <vector>

namespace svperturb {

struct CriterionResult {
  std::string name;
  bool passed = false;
  std::string details;
  double seconds = 0.0;
};

struct VerifyOptions {
  std::size_t threads = 1;
  std::string scratch_dir = ".";  // working space for the determinism check
  std::string cli_path;           // svperturb binary; empty skips the CLI route
};

/// Runs one verification suite and returns one result per criterion.
/// Suites: "algebra" (projector identities, Riesz oracle), "bounds"
/// (projector perturbation and norm concentration), "scaling" (the size
/// sweep), "debias" (two-sample debiasing), "all" (everything including
/// the determinism check).
std::vector<CriterionResult> run_suite(const std::string& suite,
                                       const VerifyOptions& options);

}  // namespace svperturb
