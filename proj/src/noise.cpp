#include "svperturb/noise.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include <nlohmann/json.hpp>

#include "svperturb/linalg.hpp"

namespace svperturb {

void Philox2x64::block(std::uint64_t key, std::uint64_t ctr0,
                       std::uint64_t ctr1, std::uint64_t& out0,
                       std::uint64_t& out1) {
  std::uint64_t x0 = ctr0, x1 = ctr1;
  for (int round = 0; round < 10; ++round) {
    const unsigned __int128 prod =
        static_cast<unsigned __int128>(kMultiplier) * x0;
    const std::uint64_t hi = static_cast<std::uint64_t>(prod >> 64);
    const std::uint64_t lo = static_cast<std::uint64_t>(prod);
    x0 = hi ^ key ^ x1;
    x1 = lo;
    key += kWeyl;
  }
  out0 = x0;
  out1 = x1;
}

namespace {

// (0,1] and [0,1) uniforms from 53 high bits.
inline double uniform_open_closed(std::uint64_t bits) {
  return static_cast<double>((bits >> 11) + 1) * 0x1.0p-53;
}
inline double uniform_closed_open(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

// Box-Muller: one Philox block yields exactly two standard normals, which
// keeps the counter addressing trivial.
inline void normal_pair(std::uint64_t key, std::uint64_t ctr0,
                        std::uint64_t ctr1, double& z0, double& z1) {
  std::uint64_t r0, r1;
  Philox2x64::block(key, ctr0, ctr1, r0, r1);
  const double u1 = uniform_open_closed(r0);
  const double u2 = uniform_closed_open(r1);
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  z0 = radius * std::cos(angle);
  z1 = radius * std::sin(angle);
}

}  // namespace

NoiseModel::NoiseModel(std::size_t m_, std::size_t n_, double tau_,
                       std::uint64_t seed)
    : m(m_), n(n_), tau(tau_), master_seed(seed) {
  if (m == 0 || n == 0) {
    throw DimensionMismatchError("NoiseModel: dimensions must be >= 1");
  }
  // tau = 0 is allowed as the degenerate no-noise model; several
  // zero-noise identities in the test suites rely on it.
  if (!(tau >= 0.0) || !std::isfinite(tau)) {
    throw std::invalid_argument("NoiseModel: tau must be non-negative");
  }
}

DenseMatrix sample_noise(const NoiseModel& model,
                         std::uint64_t replicate_index) {
  const std::size_t total = model.m * model.n;
  std::vector<double> entries(total);
  for (std::size_t k = 0; k < total; k += 2) {
    double z0, z1;
    normal_pair(model.master_seed, replicate_index, k / 2, z0, z1);
    entries[k] = model.tau * z0;
    if (k + 1 < total) entries[k + 1] = model.tau * z1;
  }
  return DenseMatrix(model.m, model.n, std::move(entries));
}

std::vector<double> gaussian_stream(std::uint64_t master_seed,
                                    std::uint64_t stream_tag,
                                    std::size_t count) {
  // Reuses the replicate addressing with the tag's top bit set, so tagged
  // streams can never collide with replicate indices in practice.
  const std::uint64_t ctr0 = stream_tag | (1ull << 63);
  std::vector<double> out(count);
  for (std::size_t k = 0; k < count; k += 2) {
    double z0, z1;
    normal_pair(master_seed, ctr0, k / 2, z0, z1);
    out[k] = z0;
    if (k + 1 < count) out[k + 1] = z1;
  }
  return out;
}

double deviation_threshold(double mean_norm_estimate, double tau, double t,
                           double c2) {
  if (t < 0.0) throw std::invalid_argument("deviation_threshold: t < 0");
  return mean_norm_estimate + c2 * tau * std::sqrt(t);
}

NormStats norm_stats(const NoiseModel& model, std::size_t replicates) {
  if (replicates < 30) {
    throw std::invalid_argument("norm_stats: need at least 30 replicates");
  }
  std::vector<double> norms(replicates);
  for (std::size_t r = 0; r < replicates; ++r) {
    norms[r] = operator_norm(sample_noise(model, r));
  }

  NormStats stats;
  stats.m = model.m;
  stats.n = model.n;
  stats.tau = model.tau;
  stats.seed = model.master_seed;
  stats.replicate_count = replicates;

  double sum = 0.0;
  for (double v : norms) sum += v;
  stats.mean_norm = sum / static_cast<double>(replicates);
  double ss = 0.0;
  for (double v : norms) ss += (v - stats.mean_norm) * (v - stats.mean_norm);
  stats.std_norm = std::sqrt(ss / static_cast<double>(replicates - 1));
  stats.normalized_mean =
      model.tau > 0.0
          ? stats.mean_norm / (model.tau * std::sqrt(static_cast<double>(
                                               std::max(model.m, model.n))))
          : 0.0;

  std::vector<double> sorted = norms;
  std::sort(sorted.begin(), sorted.end());
  // Linearly interpolated empirical quantile (same convention everywhere in
  // the experiment pipeline).
  auto quantile = [&sorted](double p) {
    const double pos = p * static_cast<double>(sorted.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
  };
  for (double p : {0.01, 0.05, 0.25, 0.5, 0.75, 0.95, 0.99}) {
    stats.quantiles[p] = quantile(p);
  }
  return stats;
}

std::string NormStats::to_json() const {
  nlohmann::json j;
  j["m"] = m;
  j["n"] = n;
  j["tau"] = tau;
  j["seed"] = seed;
  j["replicates"] = replicate_count;
  j["mean_norm"] = mean_norm;
  j["std_norm"] = std_norm;
  j["normalized_mean"] = normalized_mean;
  nlohmann::json q;
  for (const auto& [p, v] : quantiles) {
    std::ostringstream key;
    key << p;
    q[key.str()] = v;
  }
  j["quantiles"] = q;
  return j.dump(2);
}

}  // namespace svperturb
