#pragma once

// Seed derivation and sampling helpers.
//
// One master seed drives an entire experiment.  Per-path seeds are derived by
// splitmix64-style avalanche mixing of (master, path index), and each path
// splits further into domain-separated streams (Wiener increments vs. jump
// times/marks) so that changing the number of Brownian draws never perturbs
// the jump train and vice versa.

#include <cstdint>
#include <random>

#include "jsde/core.hpp"

namespace jsde {

using Engine = std::mt19937_64;

/// splitmix64 finalizer: full-avalanche 64-bit mix.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

/// Derive a well-separated child seed from a parent seed and an index.
inline std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t index) {
  return mix64(parent ^ mix64(index + 0x632be59bd9b4e019ull));
}

// Stream tags for the per-path domains.
namespace stream {
inline constexpr std::uint64_t kWiener = 0x57494e4552ull;
inline constexpr std::uint64_t kJumps = 0x4a554d5053ull;
inline constexpr std::uint64_t kProbe = 0x50524f4245ull;
}  // namespace stream

/// Uniform sample from the closed ball of given radius (Gaussian direction
/// plus radial inverse-CDF).
inline Vec sample_ball(int dim, double radius, Engine& eng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Vec dir(dim);
  double n2 = 0.0;
  do {
    for (int i = 0; i < dim; ++i) dir[i] = gauss(eng);
    n2 = squared_norm(dir);
  } while (n2 == 0.0);
  const double r = radius * std::pow(unif(eng), 1.0 / dim);
  return dir * (r / std::sqrt(n2));
}

}  // namespace jsde
