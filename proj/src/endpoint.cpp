#include "eclab/endpoint.hpp"

#include <algorithm>
#include <cmath>

namespace eclab::endpoint {

DiagGaussian::DiagGaussian(Vec mean, Vec var) : mean_(std::move(mean)), var_(std::move(var)) {
  require(!mean_.empty(), "DiagGaussian: invalid dimension 0");
  require_same_dim(mean_.size(), var_.size(), "DiagGaussian");
  require(all_finite(mean_) && all_finite(var_), "DiagGaussian: non-finite parameters");
  for (auto& v : var_) {
    require(v >= 0.0, "DiagGaussian: negative variance");
    v = std::max(v, kVarFloor);
  }
}

DiagGaussian standard_endpoint(std::size_t d) {
  require(d >= 1, "standard_endpoint: invalid dimension 0");
  return DiagGaussian(Vec(d, 0.0), Vec(d, 1.0));
}

DiagGaussian fuse(const DiagGaussian& a, const DiagGaussian& b) {
  require_same_dim(a.dim(), b.dim(), "fuse");
  Vec mean(a.dim()), var(a.dim());
  for (std::size_t k = 0; k < a.dim(); ++k) {
    mean[k] = a.mean()[k] + b.mean()[k];
    var[k] = a.var()[k] + b.var()[k];
  }
  return DiagGaussian(std::move(mean), std::move(var));
}

EndpointSample sample_endpoint(const DiagGaussian& g, Rng& rng) {
  EndpointSample s{Vec(g.dim()), rng.normal_vec(g.dim())};
  for (std::size_t k = 0; k < g.dim(); ++k) s.y[k] = g.mean()[k] + std::sqrt(g.var()[k]) * s.eps[k];
  return s;
}

EndpointSample sample_endpoint(const DiagGaussian& g, std::uint64_t seed) {
  Rng rng(seed);
  return sample_endpoint(g, rng);
}

Vec forward_point(const sched::Schedule& s, double t, std::span<const double> x,
                  std::span<const double> y) {
  require_same_dim(x.size(), y.size(), "forward_point");
  const auto [alpha, sigma] = sched::alpha_sigma(s, t);
  Vec z(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) z[k] = alpha * x[k] + sigma * y[k];
  return z;
}

}  // namespace eclab::endpoint
