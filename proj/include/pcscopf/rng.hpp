#pragma once

#include <cstdint>
#include <random>

namespace pcscopf {

/// Portable seeded generator: std::mt19937_64 (fully specified by the
/// standard) with doubles formed from the top 53 bits. The std
/// distributions are avoided because their algorithms vary by library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  int index(int n) { return static_cast<int>(uniform() * n); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace pcscopf
