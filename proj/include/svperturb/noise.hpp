#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "svperturb/dense_matrix.hpp"

namespace svperturb {

/// Counter-based generator: Philox2x64-10 (Salmon et al. constants).
/// A draw is a pure function of (key, counter-pair), so any entry of any
/// replicate's matrix can be produced independently of execution order.
struct Philox2x64 {
  static constexpr std::uint64_t kMultiplier = 0xD2B74407B1CE6E93ull;
  static constexpr std::uint64_t kWeyl = 0x9E3779B97F4A7C15ull;

  /// One 10-round block: two 64-bit words from (key, ctr0, ctr1).
  static void block(std::uint64_t key, std::uint64_t ctr0, std::uint64_t ctr1,
                    std::uint64_t& out0, std::uint64_t& out1);
};

/// i.i.d. Gaussian noise spec: X_ij ~ N(0, tau^2), entries addressed by
/// (master_seed, replicate_index, entry index). The replicate substream is
/// Philox with key = master_seed and counter (replicate_index, draw index);
/// uniforms map to normals via Box-Muller, two entries per block.
struct NoiseModel {
  std::size_t m = 0;
  std::size_t n = 0;
  double tau = 1.0;
  std::uint64_t master_seed = 0;

  NoiseModel(std::size_t m_, std::size_t n_, double tau_, std::uint64_t seed);
};

struct NormStats {
  std::size_t m = 0;
  std::size_t n = 0;
  double tau = 0.0;
  std::uint64_t seed = 0;
  std::size_t replicate_count = 0;
  double mean_norm = 0.0;
  double std_norm = 0.0;
  double normalized_mean = 0.0;  // mean_norm / (tau * sqrt(max(m, n)))
  std::map<double, double> quantiles;

  std::string to_json() const;
};

/// Deterministic m x n Gaussian sample for one replicate.
DenseMatrix sample_noise(const NoiseModel& model, std::uint64_t replicate_index);

/// Standard normal draws for an arbitrary purpose-tagged substream; used by
/// the experiment runner for orthogonal factors and probe vectors. The tag
/// keeps these streams disjoint from replicate noise.
std::vector<double> gaussian_stream(std::uint64_t master_seed,
                                    std::uint64_t stream_tag,
                                    std::size_t count);

/// delta_{n,m}(t) = mean-norm estimate + c2 * tau * sqrt(t).
double deviation_threshold(double mean_norm_estimate, double tau, double t,
                           double c2);

/// Monte Carlo statistics of the spectral norm over `replicates` samples.
/// Aggregation runs in replicate order, so the result is independent of
/// any parallel schedule used to compute the per-replicate norms.
NormStats norm_stats(const NoiseModel& model, std::size_t replicates);

}  // namespace svperturb
