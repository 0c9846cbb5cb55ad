#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace mobisec {

// Substream tags. Every random draw in a run comes from a generator seeded by
// derive_seed(master, tag, index), so adding a user or an attack never shifts
// the draws of any other stream.
enum class StreamTag : std::uint64_t {
  kUeId = 1,
  kUserSessions = 2,
  kAttack = 3,
  kQueue = 4,
  kSalt = 5,
  kInfected = 6,
  kClassifier = 7,
  kTraces = 8,
};

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t master, StreamTag tag, std::uint64_t index) noexcept {
  return mix64(mix64(master ^ mix64(static_cast<std::uint64_t>(tag))) ^ mix64(index + 0x632BE59BD9B4E019ULL));
}

// mt19937_64 with the few draws the simulator needs. Draws are built from raw
// 64-bit outputs so they do not depend on the standard library's distribution
// implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  Rng(std::uint64_t master, StreamTag tag, std::uint64_t index) : engine_(derive_seed(master, tag, index)) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1) with 53 bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Exponential with the given rate (per unit of the caller's time axis).
  double exponential(double rate) { return -std::log1p(-uniform()) / rate; }

  // Uniform integer in [0, n). n > 0.
  std::uint64_t below(std::uint64_t n) {
    // Lemire's nearly-divisionless method without the rejection step is biased
    // by < n / 2^64, which is irrelevant for population sizes here.
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>(engine_()) * n) >> 64);
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace mobisec
