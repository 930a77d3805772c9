#pragma once

#include <cmath>
#include <cstdint>

namespace treespec {

// SplitMix64 generator (Steele, Lea & Flood). All randomness in the library
// flows through explicit 64-bit seeds and numbered substreams: substream i of
// seed s starts at mix(s ^ mix(i + gamma)). Sampling uses one substream per
// sample index and probing one per retry attempt, so any part of a run can be
// regenerated in isolation and runs are reproducible end to end.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  static SplitMix64 substream(std::uint64_t seed, std::uint64_t stream) {
    return SplitMix64(mix(seed ^ mix(stream + kGamma)));
  }

  std::uint64_t next_u64() {
    state_ += kGamma;
    return mix(state_);
  }

  // uniform on [0,1) with 53 random bits
  double next_unit() { return double(next_u64() >> 11) * 0x1.0p-53; }

  // standard normal, Box-Muller; consumes exactly two uniforms per call
  double next_gaussian() {
    double u1 = 1.0 - next_unit();  // (0,1], keeps the log finite
    double u2 = next_unit();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
  }

  // index into [0, bound) without modulo bias worth worrying about at
  // desk-scale bounds; bound must be positive
  int next_index(int bound) { return int(next_u64() % std::uint64_t(bound)); }

 private:
  static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ull;
  static constexpr double kPi = 3.14159265358979323846;

  static std::uint64_t mix(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ull;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBull;
    z ^= z >> 31;
    return z;
  }

  std::uint64_t state_;
};

}  // namespace treespec
