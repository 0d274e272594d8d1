#pragma once

#include <cstdint>
#include <random>

namespace tinyvib::detail {

// splitmix64 finalizer, used to derive independent stream seeds from a key.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  return std::mt19937_64(mix64(mix64(mix64(seed) ^ a) ^ b));
}

}  // namespace tinyvib::detail
