#pragma once

#include <cstdint>
#include <random>

namespace cfb {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Seedable, splittable generator passed explicitly to every sampling call.
// Draws go through raw mt19937_64 output rather than std distributions so the
// stream is identical across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(mix(seed)) {}

  // Uniform double in [0, 1) with 53 bits of precision.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Uniform double in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  std::uint64_t next_u64() { return engine_(); }

  // Independent child stream; the parent stream is not advanced.
  Rng split(std::uint64_t stream) const {
    std::uint64_t state = seed_ ^ (0xD1B54A32D192ED03ULL * (stream + 1));
    return Rng(splitmix64(state));
  }

  std::uint64_t seed() const { return seed_; }

 private:
  static std::uint64_t mix(std::uint64_t seed) {
    std::uint64_t state = seed;
    return splitmix64(state);
  }

  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace cfb
