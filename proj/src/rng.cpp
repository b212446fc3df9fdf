#include "kmv/rng.hpp"

#include <cmath>

namespace kmv {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t master, std::string_view component) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : component) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return splitmix64(master ^ h);
}

PhiloxBlock philox4x32(PhiloxBlock ctr, std::array<std::uint32_t, 2> key) {
  constexpr std::uint32_t M0 = 0xD2511F53U, M1 = 0xCD9E8D57U;
  constexpr std::uint32_t W0 = 0x9E3779B9U, W1 = 0xBB67AE85U;
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = static_cast<std::uint64_t>(M0) * ctr[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(M1) * ctr[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32), lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32), lo1 = static_cast<std::uint32_t>(p1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += W0;
    key[1] += W1;
  }
  return ctr;
}

PhiloxBlock CounterRng::block(std::uint64_t stream, std::uint64_t index) const {
  const PhiloxBlock ctr{static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                        static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return philox4x32(ctr, {static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32)});
}

std::pair<double, double> CounterRng::uniforms(std::uint64_t stream, std::uint64_t index) const {
  const auto b = block(stream, index);
  const std::uint64_t a = (static_cast<std::uint64_t>(b[0]) << 32) | b[1];
  const std::uint64_t c = (static_cast<std::uint64_t>(b[2]) << 32) | b[3];
  // (k + 0.5) 2^-53 keeps both ends open.
  const double scale = 0x1.0p-53;
  return {(static_cast<double>(a >> 11) + 0.5) * scale, (static_cast<double>(c >> 11) + 0.5) * scale};
}

std::pair<double, double> CounterRng::normals(std::uint64_t stream, std::uint64_t index) const {
  const auto [u1, u2] = uniforms(stream, index);
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double th = 2.0 * 3.14159265358979323846 * u2;
  return {r * std::cos(th), r * std::sin(th)};
}

}  // namespace kmv
