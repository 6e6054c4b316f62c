#pragma once

// Reproducible random streams. Every trial owns a std::mt19937_64 seeded from
// (master seed, stream tag, trial index) through the SplitMix64 finalizer, so
// results never depend on how trials are spread over workers. Only raw 64-bit
// generator outputs are consumed; library distributions are implementation
// defined and are avoided.

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

#include "rdsline/rational.hpp"

namespace rdsline {

inline constexpr std::string_view kGeneratorId = "mt19937_64/splitmix64-seed-v1";

constexpr std::uint64_t splitmix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Stream tags keep unrelated consumers of one master seed apart.
enum class Stream : std::uint64_t {
  Trajectory = 1,
  StopKernel = 2,
  Monster = 3,
  MonsterSeed = 4,
  Generic = 5,
};

constexpr std::uint64_t derive_seed(std::uint64_t master, Stream stream, std::uint64_t index) noexcept {
  return splitmix64(splitmix64(master ^ splitmix64(static_cast<std::uint64_t>(stream))) + index);
}

inline std::mt19937_64 make_engine(std::uint64_t master, Stream stream, std::uint64_t index) {
  return std::mt19937_64(derive_seed(master, stream, index));
}

/// Uniform double in the open interval (0, 1).
inline double uniform_open(std::uint64_t r) noexcept {
  return (static_cast<double>(r >> 12) + 0.5) * 0x1.0p-52;
}

/// Uniform double in [-1, 1].
inline double uniform_symmetric(std::uint64_t r) noexcept {
  return static_cast<double>(r >> 11) * 0x1.0p-52 - 1.0;
}

/// Picks a map index from one raw 64-bit draw against thresholds
/// floor(cumulative probability * 2^64), computed exactly from rationals.
class IndexSampler {
 public:
  IndexSampler() = default;

  explicit IndexSampler(const std::vector<Rational>& probs) {
    Rational cumulative = 0;
    for (std::size_t i = 0; i + 1 < probs.size(); ++i) {
      cumulative += probs[i];
      thresholds_.push_back(scaled_threshold(cumulative));
    }
  }

  std::size_t operator()(std::uint64_t r) const noexcept {
    std::size_t i = 0;
    for (std::uint64_t t : thresholds_) i += static_cast<std::size_t>(r >= t);
    return i;
  }

 private:
  std::vector<std::uint64_t> thresholds_;
};

}  // namespace rdsline
