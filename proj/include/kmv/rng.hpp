#pragma once

// Counter-based random numbers: Philox4x32-10 keyed by a 64-bit seed. A draw is
// addressed by (stream, counter), so results do not depend on thread schedule.

#include <array>
#include <cstdint>
#include <string_view>
#include <utility>

namespace kmv {

std::uint64_t splitmix64(std::uint64_t x);

/// Independent seed for a named component: splitmix64(master ^ fnv1a(component)).
std::uint64_t derive_seed(std::uint64_t master, std::string_view component);

using PhiloxBlock = std::array<std::uint32_t, 4>;

/// Philox4x32 with 10 rounds.
PhiloxBlock philox4x32(PhiloxBlock counter, std::array<std::uint32_t, 2> key);

class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed) : seed_(seed) {}
  std::uint64_t seed() const noexcept { return seed_; }
  /// Raw block for counter words (stream, index).
  PhiloxBlock block(std::uint64_t stream, std::uint64_t index) const;
  /// Two uniforms in (0, 1) with 53-bit resolution.
  std::pair<double, double> uniforms(std::uint64_t stream, std::uint64_t index) const;
  /// Two independent standard normals by Box-Muller.
  std::pair<double, double> normals(std::uint64_t stream, std::uint64_t index) const;

 private:
  std::uint64_t seed_;
};

}  // namespace kmv
