#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace ttc {

// Deterministic stream used for every random draw in the project.
//
// The engine is std::mt19937_64, whose output sequence is fixed by the
// standard. Its seed is splitmix64(seed ^ fnv1a64(tag)), so every matrix or
// dataset component gets an independent stream keyed by a stable string tag.
// Real-valued draws use the top 53 bits of one engine output, which avoids
// the implementation-defined std::uniform_real_distribution.
class Rng {
 public:
  Rng(std::uint64_t seed, std::string_view tag);

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). Rejection sampling keeps it unbiased.
  std::uint64_t below(std::uint64_t n);

  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;
std::uint64_t fnv1a64(std::string_view bytes) noexcept;

}  // namespace ttc
