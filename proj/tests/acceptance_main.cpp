// Acceptance harness: runs every verification criterion at its pinned
// configuration and prints one pass/fail line per criterion.
//
// Usage: acceptance [--cli <path-to-svperturb>] [--threads N]

#include <cstdlib>
#include <iostream>
#include <string>
#include <thread>

#include "svperturb/verify.hpp"

int main(int argc, char** argv) {
  svperturb::VerifyOptions options;
  options.threads = std::max(1u, std::thread::hardware_concurrency());
  options.scratch_dir = ".";
  for (int i = 1; i + 1 < argc; i += 2) {
    const std::string flag = argv[i];
    if (flag == "--cli") {
      options.cli_path = argv[i + 1];
    } else if (flag == "--threads") {
      options.threads = std::strtoul(argv[i + 1], nullptr, 10);
    } else {
      std::cerr << "unknown flag " << flag << "\n";
      return 1;
    }
  }

  bool all_passed = true;
  try {
    const auto results = svperturb::run_suite("all", options);
    for (const auto& r : results) {
      std::cout << (r.passed ? "[PASS] " : "[FAIL] ") << r.name << ": "
                << r.details << " (" << r.seconds << " s)\n";
      all_passed = all_passed && r.passed;
    }
  } catch (const std::exception& e) {
    std::cerr << "acceptance harness error: " << e.what() << "\n";
    return 1;
  }
  std::cout << (all_passed ? "acceptance: all criteria passed\n"
                           : "acceptance: at least one criterion failed\n");
  return all_passed ? 0 : 1;
}
