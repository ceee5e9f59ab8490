// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <limits>
#include <random>

namespace aies {

namespace detail {

inline constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace detail

/// SplitMix64. Cheap to construct, which matters because every walker
/// update gets a freshly keyed engine. Satisfies UniformRandomBitGenerator.
class SplitMix64 {
 public:
  using result_type = std::uint64_t;

  constexpr explicit SplitMix64(std::uint64_t seed = 0) noexcept : state_(seed) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  constexpr result_type operator()() noexcept {
    state_ += detail::kGolden;
    return detail::mix64(state_);
  }

  constexpr std::uint64_t state() const noexcept { return state_; }

  friend constexpr bool operator==(const SplitMix64&, const SplitMix64&) = default;

 private:
  std::uint64_t state_;
};

using Engine = SplitMix64;

/// Purposes keep streams used for different things disjoint even when
/// walker index and counter coincide.
enum class StreamPurpose : std::uint64_t {
  Init = 1,
  SerialSweep = 2,
  SplitHalf = 3,
  ContinuousTime = 4,
  Metropolis = 5,
  RunSeed = 6,
  Auxiliary = 7,
  Replicate = 8,
};

/// Child stream keyed by (master seed, purpose, stream index, counter).
/// For walker updates the stream index is the walker and the counter the
/// iteration, so results never depend on the order updates execute in.
constexpr Engine substream(std::uint64_t master, StreamPurpose purpose, std::uint64_t stream,
                           std::uint64_t counter) noexcept {
  std::uint64_t key = detail::mix64(master + detail::kGolden);
  key = detail::mix64(key ^ (static_cast<std::uint64_t>(purpose) * 0xd6e8feb86659fd93ULL));
  key = detail::mix64(key ^ (stream + 0x632be59bd9b4e019ULL));
  key = detail::mix64(key ^ (counter * 0x85157af5ULL + 0x9e3779b1ULL));
  return Engine(key);
}

/// Derived 64-bit seed, for handing a child its own master seed.
constexpr std::uint64_t derive_seed(std::uint64_t master, StreamPurpose purpose,
                                    std::uint64_t stream, std::uint64_t counter = 0) noexcept {
  Engine e = substream(master, purpose, stream, counter);
  return e();
}

/// Uniform on [0, 1) with 53 random bits.
inline double uniform01(Engine& e) noexcept {
  return static_cast<double>(e() >> 11) * 0x1.0p-53;
}

/// Uniform index in [0, k). k must be positive.
inline std::size_t uniform_index(Engine& e, std::size_t k) {
  std::uniform_int_distribution<std::size_t> d(0, k - 1);
  return d(e);
}

/// Exponential waiting time with the given rate.
inline double exponential(Engine& e, double rate) {
  std::exponential_distribution<double> d(rate);
  return d(e);
}

}  // namespace aies
