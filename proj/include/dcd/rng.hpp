#pragma once

#include <cstdint>
#include <string_view>

namespace dcd {

// Small deterministic generator (splitmix64 core). All randomness in the
// toolkit flows from one master seed; independent streams are forked per
// purpose so that adding a consumer never shifts another consumer's draws.
// The raw std distributions are avoided on purpose: their output is
// implementation-defined, and checkpoint hashes are expected to reproduce.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n). Rejection keeps it unbiased.
  std::uint64_t uniform_below(std::uint64_t n) {
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

  // Standard normal via Box-Muller (cosine branch; two uniforms per draw).
  double normal();

 private:
  std::uint64_t state_;
};

// Stable 64-bit content hash (FNV-1a), used for stream labels and artifact
// fingerprints.
std::uint64_t fnv1a(const void* data, std::size_t len, std::uint64_t seed = 0xcbf29ce484222325ull);
std::uint64_t fnv1a(std::string_view s, std::uint64_t seed = 0xcbf29ce484222325ull);

// Derive an independent stream from (master seed, purpose label, index).
Rng fork_stream(std::uint64_t master_seed, std::string_view purpose, std::uint64_t index = 0);

}  // namespace dcd
