#pragma once

#include <cstdint>
#include <random>

namespace fbsde::rng {

// Counter-based seed splitting: one root seed fans out into independent
// substreams keyed by (path index, driver tag). Path p's stream never
// depends on how many other paths were generated or in which order, which
// is what makes serial and OpenMP runs bit-identical.
enum class DriverTag : std::uint64_t {
  brownian = 0x01,
  fbm = 0x02,
  chain = 0x03,
  probe = 0x10,
  perturbation = 0x11,
};

inline std::uint64_t mix64(std::uint64_t x) {
  // splitmix64 finalizer
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t stream_key(std::uint64_t root, std::uint64_t path,
                                DriverTag tag) {
  std::uint64_t k = mix64(root);
  k = mix64(k ^ (0xa0761d6478bd642full * (path + 1)));
  k = mix64(k ^ (0xe7037ed1a0b428dbull * static_cast<std::uint64_t>(tag)));
  return k;
}

inline std::mt19937_64 make_engine(std::uint64_t root, std::uint64_t path,
                                   DriverTag tag) {
  return std::mt19937_64(stream_key(root, path, tag));
}

}  // namespace fbsde::rng
