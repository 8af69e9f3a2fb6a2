#pragma once

#include <cstdint>
#include <limits>

namespace aoi {

// SplitMix64 output function (Steele, Lea, Flood 2014). Bijective on 64 bits.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// What a stream is used for inside one replication.
enum class StreamRole : std::uint64_t {
  interarrival = 1,
  source_pick = 2,
  service = 3,
};

/// Counter-based random stream: the n-th output is a pure function of
/// (key, n), so any draw can be reproduced without replaying the stream.
///
/// Satisfies UniformRandomBitGenerator, so it can drive the <random>
/// distributions as well as the inverse-CDF samplers used in this library.
class CounterStream {
 public:
  using result_type = std::uint64_t;

  constexpr explicit CounterStream(std::uint64_t key) noexcept : key_(key) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  constexpr result_type operator()() noexcept {
    ++counter_;
    return mix64(key_ + counter_ * kGolden);
  }

  /// Uniform draw on the open interval (0, 1), 53-bit resolution.
  constexpr double uniform() noexcept {
    return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
  }

  constexpr std::uint64_t key() const noexcept { return key_; }
  constexpr std::uint64_t counter() const noexcept { return counter_; }

 private:
  static constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

/// Derive an independent stream keyed by (global seed, replication, role).
constexpr CounterStream make_stream(std::uint64_t seed, std::uint64_t replication,
                                    StreamRole role) noexcept {
  std::uint64_t key = mix64(seed ^ 0x6a09e667f3bcc909ULL);
  key = mix64(key + 0xbb67ae8584caa73bULL * (replication + 1));
  key = mix64(key + 0x3c6ef372fe94f82bULL * static_cast<std::uint64_t>(role));
  return CounterStream(key);
}

}  // namespace aoi
