#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace usc {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

/// Derives independent named substreams from one master seed, so adding a
/// consumer of randomness never perturbs the draws seen by another.
class SeedTree {
 public:
  explicit SeedTree(std::uint64_t master) : master_(master) {}

  std::uint64_t master() const { return master_; }
  std::uint64_t seed_for(std::string_view name) const {
    return splitmix64(master_ ^ splitmix64(fnv1a64(name)));
  }
  Rng stream(std::string_view name) const { return Rng(seed_for(name)); }

 private:
  std::uint64_t master_;
};

}  // namespace usc
