#pragma once

// Endpoint distributions of the diffusion. The implicit baseline diffuses into
// N(0, I); explicit conditioning diffuses into a diagonal Gaussian whose mean
// and variance are functions of the conditions (context and prompt fused by
// summing means and summing variances).

#include <cstdint>
#include <span>

#include "eclab/common.hpp"
#include "eclab/rng.hpp"
#include "eclab/sched.hpp"

namespace eclab::endpoint {

inline constexpr double kVarFloor = 1e-6;

class DiagGaussian {
 public:
  /// Variances below kVarFloor are raised to it; negative ones are rejected.
  DiagGaussian(Vec mean, Vec var);

  std::size_t dim() const { return mean_.size(); }
  const Vec& mean() const { return mean_; }
  const Vec& var() const { return var_; }

 private:
  Vec mean_;
  Vec var_;
};

struct EndpointSample {
  Vec y;
  Vec eps;
};

DiagGaussian standard_endpoint(std::size_t d);

/// mean = a.mean + b.mean, var = a.var + b.var. Variances add as written
/// rather than being averaged, so the fused endpoint is wider than either part.
DiagGaussian fuse(const DiagGaussian& a, const DiagGaussian& b);

/// y = mean + sqrt(var) * eps with eps drawn from a generator seeded by `seed`.
EndpointSample sample_endpoint(const DiagGaussian& g, std::uint64_t seed);

/// Same as above but draws eps from a caller-owned generator.
EndpointSample sample_endpoint(const DiagGaussian& g, Rng& rng);

/// z_t = alpha_t x + sigma_t y
Vec forward_point(const sched::Schedule& s, double t, std::span<const double> x,
                  std::span<const double> y);

}  // namespace eclab::endpoint
