#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "eclab/common.hpp"

namespace eclab {

/// Deterministic generator. All randomness in the lab is drawn from one of
/// these, seeded either directly or through a named sub-stream of a global
/// seed so that components stay independently reproducible.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform_(engine_); }
  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_); }

  Vec normal_vec(std::size_t n) {
    Vec v(n);
    for (auto& x : v) x = normal();
    return v;
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

/// Seed of the sub-stream `name` of `global_seed` (splitmix64 over FNV-1a).
std::uint64_t stream_seed(std::uint64_t global_seed, std::string_view name);

inline Rng stream(std::uint64_t global_seed, std::string_view name) {
  return Rng(stream_seed(global_seed, name));
}

/// FNV-1a 64-bit over bytes; used for config hashes as well.
std::uint64_t fnv1a(std::string_view bytes);

}  // namespace eclab
