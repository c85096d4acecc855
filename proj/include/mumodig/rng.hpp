#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace mumodig {

// splitmix64 finalizer; used to derive independent seed streams.
constexpr std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Every consumer of randomness derives its own stream as
// mix_seed(parent_seed, tag, index...). The tags below are fixed so that
// results are reproducible and schedule-independent.
constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  return splitmix64(seed ^ splitmix64(salt));
}
constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return mix_seed(mix_seed(seed, a), b);
}

namespace seed_tag {
inline constexpr std::uint64_t init = 0x11;       // parameter initialization
inline constexpr std::uint64_t shuffle = 0x12;    // per-epoch example order
inline constexpr std::uint64_t example = 0x21;    // per-example attack stream
inline constexpr std::uint64_t iteration = 0x22;  // per-iteration estimator stream
inline constexpr std::uint64_t transform = 0x23;  // per-branch transform sampling
inline constexpr std::uint64_t lbq = 0x24;        // per-branch LBQ divisions
inline constexpr std::uint64_t noise = 0x25;      // noise baselines / noise transform
inline constexpr std::uint64_t synth = 0x31;      // synthetic dataset generation
inline constexpr std::uint64_t channel = 0x32;    // per-channel sub-streams
}  // namespace seed_tag

// mt19937_64 with explicitly-specified draw helpers, so sequences are
// bit-identical across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). Modulo bias is < n / 2^64, irrelevant here.
  std::size_t uniform_index(std::size_t n) {
    return static_cast<std::size_t>(next_u64() % static_cast<std::uint64_t>(n));
  }

  // Standard normal via Box-Muller; two draws per call, no cached state.
  double normal() {
    const double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace mumodig
