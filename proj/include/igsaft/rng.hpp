#pragma once

#include <cstdint>
#include <limits>
#include <vector>

namespace igsaft {

/// SplitMix64 finalizer; a bijective 64-bit mixer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed of substream `stream` derived from a base seed.
constexpr std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
  return mix64(mix64(seed) ^ mix64(stream + 0x632be59bd9b4e019ULL));
}

/**
 * Counter-based SplitMix64 generator.
 *
 * Draw i is mix64(key + i * golden), so a stream is fully described by its key
 * and position. Normals come from the inverse normal CDF of open-interval
 * uniforms, which keeps every variate a deterministic function of one counter.
 */
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t key) noexcept : key_(key) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
    ++counter_;
    return mix64(key_ + counter_ * 0x9e3779b97f4a7c15ULL);
  }

  /// Uniform on the open interval (0, 1).
  double uniform() noexcept {
    return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  double normal();
  double normal(double mean, double sd) { return mean + sd * normal(); }

  /// Uniform integer in [0, bound).
  std::uint64_t below(std::uint64_t bound) noexcept;

  /// Random subset of size k from {0..n-1}, returned sorted.
  std::vector<int> choose(int n, int k);

  /// Uniformly random permutation of {0..n-1}.
  std::vector<int> permutation(int n);

  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t position() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

/// Standard normal quantile.
double normal_quantile(double p);

/// Standard normal cdf.
double normal_cdf(double x);

/// Upper tail of the chi-squared distribution.
double chi2_sf(double x, double df);

/// Quantile of the chi-squared distribution.
double chi2_quantile(double p, double df);

}  // namespace igsaft
