#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace vqdm {

// Seeded generator with platform-independent draws: mt19937_64 output is
// fixed by the standard, and the derived distributions below are written out
// explicitly instead of using the implementation-defined std:: ones.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  // Standard normal via Box-Muller.
  double normal();

  // Index drawn with probability proportional to weights (non-negative).
  std::size_t categorical(std::span<const double> weights);

  // Index drawn from log-weights (need not be normalized).
  std::size_t categorical_log(std::span<const double> log_weights);

  std::uint64_t next() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace vqdm
