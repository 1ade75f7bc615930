#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace valcert {

// A reproducible random stream identified by (master seed, stream index).
//
// Every parallel worker owns one stream; the pair fully determines the
// sequence, so results do not depend on how work is scheduled.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t index)
      : seed_(seed), index_(index), engine_(make_engine(seed, index)) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_index() const { return index_; }

  // Uniform on [0, 1).
  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  double normal(double mean, double stddev) {
    return std::normal_distribution<double>(mean, stddev)(engine_);
  }
  // Uniform integer in [0, n).
  std::size_t below(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }
  bool bernoulli(double p) { return uniform() < p; }

  std::mt19937_64& engine() { return engine_; }

 private:
  static std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  static std::mt19937_64 make_engine(std::uint64_t seed, std::uint64_t index) {
    const std::uint64_t a = splitmix64(seed);
    const std::uint64_t b = splitmix64(a ^ splitmix64(index + 0x632be59bd9b4e019ULL));
    std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                      static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
    return std::mt19937_64(seq);
  }

  std::uint64_t seed_;
  std::uint64_t index_;
  std::mt19937_64 engine_;
};

// Stream indices at or above this value are reserved for bookkeeping draws
// (state sampling, bootstrap batches) so they never collide with per-state
// rollout streams, which use the state id directly.
inline constexpr std::uint64_t kReservedStreamBase = 1ULL << 62;
inline constexpr std::uint64_t kStateSamplerStream = kReservedStreamBase + 0;
inline constexpr std::uint64_t kBootstrapStream = kReservedStreamBase + 1;

}  // namespace valcert
