#include "dcd/rng.hpp"

#include <cmath>
#include <numbers>

namespace dcd {

double Rng::normal() {
  // u1 must stay away from 0 for the log.
  double u1;
  do {
    u1 = uniform();
  } while (u1 <= 1e-300);
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t fnv1a(const void* data, std::size_t len, std::uint64_t seed) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

std::uint64_t fnv1a(std::string_view s, std::uint64_t seed) {
  return fnv1a(s.data(), s.size(), seed);
}

Rng fork_stream(std::uint64_t master_seed, std::string_view purpose, std::uint64_t index) {
  std::uint64_t h = fnv1a(purpose);
  h = fnv1a(&index, sizeof(index), h);
  h = fnv1a(&master_seed, sizeof(master_seed), h);
  // One extra scramble so that nearby (seed, index) pairs land far apart.
  Rng r(h);
  return Rng(r.next_u64());
}

}  // namespace dcd
