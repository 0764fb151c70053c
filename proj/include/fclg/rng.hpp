#pragma once

#include <cstdint>
#include <random>

namespace fclg {

// splitmix64 finalizer; used to turn (seed, stream tags) into well-mixed
// engine seeds so that every client / round / purpose gets an independent
// stream regardless of scheduling order.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t combine_seed(std::uint64_t a) { return mix64(a); }

template <typename... Rest>
std::uint64_t combine_seed(std::uint64_t a, Rest... rest) {
  return mix64(a ^ combine_seed(static_cast<std::uint64_t>(rest)...));
}

template <typename... Tags>
std::mt19937_64 make_rng(std::uint64_t seed, Tags... tags) {
  return std::mt19937_64(combine_seed(seed, static_cast<std::uint64_t>(tags)...));
}

}  // namespace fclg
