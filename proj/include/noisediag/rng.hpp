#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace noisediag {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Named substream families. A substream is identified by
/// (rng_seed, family, index) and never overlaps another in practice.
enum class Stream : std::uint64_t {
  bootstrap = 1,
  sign_flip = 2,
  synth_prompt = 3,
  synth_scores = 4,
  simulation = 5,
};

/// Portable random source: std::mt19937_64 (its output sequence is fixed by
/// the C++ standard) plus hand-written derived distributions, so identical
/// seeds give identical draws on every conforming toolchain.
///
/// - uniform01: top 53 bits scaled by 2^-53, in [0, 1)
/// - bounded(n): Lemire's multiply-shift with rejection, exactly uniform
/// - normal: Box-Muller on two uniforms, both outputs used in order
class Rng {
public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Independent generator keyed by (seed, family, index). Parallel loops use
  /// one substream per fixed-size work block, so results do not depend on
  /// how blocks are spread over workers.
  static Rng substream(std::uint64_t seed, Stream family, std::uint64_t index) {
    const std::uint64_t key =
        splitmix64(splitmix64(splitmix64(seed) ^ static_cast<std::uint64_t>(family)) ^ splitmix64(index + 1));
    return Rng(key);
  }

  std::uint64_t next_u64() { return engine_(); }

  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  std::uint64_t bounded(std::uint64_t n) {
    unsigned __int128 m = static_cast<unsigned __int128>(engine_()) * n;
    auto low = static_cast<std::uint64_t>(m);
    if (low < n) {
      const std::uint64_t threshold = (0 - n) % n;
      while (low < threshold) {
        m = static_cast<unsigned __int128>(engine_()) * n;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    // u1 in (0, 1] keeps the log finite
    const double u1 = static_cast<double>((engine_() >> 11) + 1) * 0x1.0p-53;
    const double u2 = uniform01();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(theta);
    has_spare_ = true;
    return radius * std::cos(theta);
  }

private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

} // namespace noisediag
