// Deterministic seed derivation. All randomness in an experiment flows from
// one 64-bit seed through named sub-streams so that folds, weight init,
// dropout and sampling can be reproduced independently of each other.
#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace fallcast {

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}
}  // namespace detail

inline std::uint64_t derive_seed(std::uint64_t base, std::string_view stream) {
  std::uint64_t h = detail::splitmix64(base);
  for (unsigned char c : stream) h = detail::splitmix64(h ^ c);
  return h;
}

inline std::uint64_t derive_seed(std::uint64_t base, std::string_view stream,
                                 std::uint64_t index) {
  return detail::splitmix64(derive_seed(base, stream) ^ index);
}

inline std::mt19937_64 make_rng(std::uint64_t base, std::string_view stream) {
  return std::mt19937_64(derive_seed(base, stream));
}

inline std::mt19937_64 make_rng(std::uint64_t base, std::string_view stream,
                                std::uint64_t index) {
  return std::mt19937_64(derive_seed(base, stream, index));
}

}  // namespace fallcast
