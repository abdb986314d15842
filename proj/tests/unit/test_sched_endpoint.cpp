#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "eclab/endpoint.hpp"
#include "eclab/sched.hpp"

using namespace eclab;
using std::numbers::pi;

TEST(Schedule, AlphaSigmaAtHalfIsSymmetric) {
  const sched::Schedule s;
  const auto [a, sg] = sched::alpha_sigma(s, 0.5);
  EXPECT_NEAR(a, std::sqrt(2.0) / 2.0, 1e-15);
  EXPECT_NEAR(sg, std::sqrt(2.0) / 2.0, 1e-15);
}

TEST(Schedule, AlphaSigmaAtQuarterMatchesDirectEvaluation) {
  const auto [a, sg] = sched::alpha_sigma(sched::Schedule{}, 0.25);
  EXPECT_DOUBLE_EQ(a, std::cos(pi / 8.0));
  EXPECT_DOUBLE_EQ(sg, std::sin(pi / 8.0));
}

TEST(Schedule, EndpointsAreClamped) {
  const sched::Schedule s;
  const auto lo = sched::alpha_sigma(s, 0.0);
  const auto hi = sched::alpha_sigma(s, 1.0);
  EXPECT_GT(lo.alpha, 0.999);
  EXPECT_LT(lo.sigma, 0.01);
  EXPECT_GT(lo.sigma, 0.0);
  EXPECT_LT(hi.alpha, 0.01);
  EXPECT_GT(hi.alpha, 0.0);
  EXPECT_TRUE(std::isfinite(sched::log_snr(s, 0.0)));
  EXPECT_TRUE(std::isfinite(sched::dlogsnr_dt(s, 1.0)));
}

TEST(Schedule, VariancePreservingOnThousandPoints) {
  const sched::Schedule s;
  for (int i = 0; i < 1000; ++i) {
    const double t = s.t_eps + (1.0 - 2.0 * s.t_eps) * (i + 0.5) / 1000.0;
    const auto [a, sg] = sched::alpha_sigma(s, t);
    EXPECT_NEAR(a * a + sg * sg, 1.0, 1e-12);
  }
}

TEST(Schedule, LogSnrValues) {
  const sched::Schedule s;
  EXPECT_NEAR(sched::log_snr(s, 0.5), 0.0, 1e-14);
  EXPECT_NEAR(sched::log_snr(s, 0.25), 2.0 * std::log(1.0 / std::tan(pi / 8.0)), 1e-13);
  EXPECT_GT(sched::log_snr(s, 0.3), sched::log_snr(s, 0.7));
  double prev = sched::log_snr(s, s.t_eps);
  for (int i = 1; i <= 200; ++i) {
    const double t = s.t_eps + (1.0 - 2.0 * s.t_eps) * i / 200.0;
    const double cur = sched::log_snr(s, t);
    EXPECT_LT(cur, prev);
    prev = cur;
  }
}

TEST(Schedule, DerivativeMatchesCentralDifferences) {
  const sched::Schedule s;
  const double h = 1e-6;
  for (double t : {0.05, 0.2, 0.35, 0.5, 0.65, 0.8, 0.95}) {
    const double fd = (sched::log_snr(s, t + h) - sched::log_snr(s, t - h)) / (2.0 * h);
    const double an = sched::dlogsnr_dt(s, t);
    EXPECT_LT(std::abs(an - fd) / std::abs(an), 1e-6) << "t=" << t;
    EXPECT_LT(an, 0.0);
  }
  EXPECT_DOUBLE_EQ(sched::dlogsnr_dt(s, 0.2), sched::dlogsnr_dt(s, 0.8));
}

TEST(Schedule, LossWeight) {
  const sched::Schedule s;
  EXPECT_EQ(sched::loss_weight(s, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(sched::loss_weight(s, 2.0), std::exp(-1.0));
  EXPECT_DOUBLE_EQ(sched::loss_weight(s, -2.0), std::exp(1.0));
}

TEST(Schedule, RejectsBrokenParameters) {
  EXPECT_THROW(sched::Schedule(0.7).validate(), ValidationError);
  EXPECT_THROW(sched::Schedule(1e-3, 2.0, 1.0).validate(), ValidationError);
  EXPECT_NO_THROW(sched::Schedule().validate());
}

// --- endpoint ---

TEST(Endpoint, StandardEndpoint) {
  const auto g = endpoint::standard_endpoint(2);
  EXPECT_EQ(g.mean(), Vec({0.0, 0.0}));
  EXPECT_EQ(g.var(), Vec({1.0, 1.0}));
  EXPECT_THROW(endpoint::standard_endpoint(0), ValidationError);
}

TEST(Endpoint, StandardEndpointMonteCarloMoments) {
  const auto g = endpoint::standard_endpoint(2);
  Rng rng(11);
  const int n = 100000;
  double m[2] = {0, 0}, q[2] = {0, 0};
  for (int i = 0; i < n; ++i) {
    const auto y = endpoint::sample_endpoint(g, rng).y;
    for (int k = 0; k < 2; ++k) {
      m[k] += y[k];
      q[k] += y[k] * y[k];
    }
  }
  for (int k = 0; k < 2; ++k) {
    EXPECT_NEAR(m[k] / n, 0.0, 0.02);
    EXPECT_NEAR(q[k] / n - (m[k] / n) * (m[k] / n), 1.0, 0.03);
  }
}

TEST(Endpoint, FuseAddsMeansAndVariances) {
  const endpoint::DiagGaussian a({1, 0}, {1, 1}), b({0, 1}, {1, 1});
  const auto f = endpoint::fuse(a, b);
  EXPECT_EQ(f.mean(), Vec({1.0, 1.0}));
  EXPECT_EQ(f.var(), Vec({2.0, 2.0}));

  const auto g = endpoint::fuse(a, endpoint::standard_endpoint(2));
  EXPECT_EQ(g.mean(), a.mean());
  EXPECT_EQ(g.var(), Vec({2.0, 2.0}));

  EXPECT_THROW(endpoint::fuse(a, endpoint::standard_endpoint(3)), ValidationError);
}

TEST(Endpoint, FuseCommutativeAndAssociative) {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    auto rnd = [&] {
      Vec m = rng.normal_vec(3), v(3);
      for (auto& x : v) x = rng.uniform(0.01, 3.0);
      return endpoint::DiagGaussian(m, v);
    };
    const auto a = rnd(), b = rnd(), c = rnd();
    const auto ab = endpoint::fuse(a, b), ba = endpoint::fuse(b, a);
    const auto l = endpoint::fuse(ab, c), r = endpoint::fuse(a, endpoint::fuse(b, c));
    for (int k = 0; k < 3; ++k) {
      EXPECT_NEAR(ab.mean()[k], ba.mean()[k], 1e-12);
      EXPECT_NEAR(ab.var()[k], ba.var()[k], 1e-12);
      EXPECT_NEAR(l.mean()[k], r.mean()[k], 1e-12);
      EXPECT_NEAR(l.var()[k], r.var()[k], 1e-12);
    }
  }
}

TEST(Endpoint, VarianceFloorHoldsForRandomConstructions) {
  Rng rng(6);
  for (int trial = 0; trial < 500; ++trial) {
    Vec v(4);
    for (auto& x : v) x = rng.uniform() < 0.3 ? 0.0 : std::exp(rng.uniform(-30.0, 3.0));
    const endpoint::DiagGaussian g(rng.normal_vec(4), v);
    for (double x : g.var()) EXPECT_GE(x, endpoint::kVarFloor);
    const auto f = endpoint::fuse(g, g);
    for (double x : f.var()) EXPECT_GE(x, endpoint::kVarFloor);
  }
  EXPECT_THROW(endpoint::DiagGaussian({0.0}, {-1.0}), ValidationError);
}

TEST(Endpoint, FusedSampleMomentsWithinThreeStandardErrors) {
  const endpoint::DiagGaussian a({1.0, -2.0}, {0.5, 0.02}), b({0.3, 0.4}, {0.25, 1.5});
  const auto f = endpoint::fuse(a, b);
  Rng rng(7);
  const int n = 100000;
  Vec sum(2, 0.0), sq(2, 0.0);
  for (int i = 0; i < n; ++i) {
    const auto y = endpoint::sample_endpoint(f, rng).y;
    for (int k = 0; k < 2; ++k) {
      sum[k] += y[k];
      sq[k] += y[k] * y[k];
    }
  }
  for (int k = 0; k < 2; ++k) {
    const double var_true = a.var()[k] + b.var()[k];
    const double mean = sum[k] / n;
    const double var = (sq[k] - n * mean * mean) / (n - 1);
    EXPECT_LT(std::abs(mean - (a.mean()[k] + b.mean()[k])), 3.0 * std::sqrt(var_true / n));
    EXPECT_LT(std::abs(var - var_true), 3.0 * var_true * std::sqrt(2.0 / (n - 1)));
  }
}

TEST(Endpoint, SampleIsDeterministicPerSeed) {
  const endpoint::DiagGaussian g({1, 2, 3}, {0.1, 0.2, 0.3});
  const auto a = endpoint::sample_endpoint(g, 42), b = endpoint::sample_endpoint(g, 42);
  EXPECT_EQ(a.y, b.y);
  EXPECT_EQ(a.eps, b.eps);
  for (int k = 0; k < 3; ++k) EXPECT_DOUBLE_EQ(a.y[k], g.mean()[k] + std::sqrt(g.var()[k]) * a.eps[k]);
}

TEST(Endpoint, DegenerateVarianceReturnsMean) {
  const endpoint::DiagGaussian g({3.0, -1.0}, {0.0, 0.0});
  const auto s = endpoint::sample_endpoint(g, 1);
  for (int k = 0; k < 2; ++k) EXPECT_LE(std::abs(s.y[k] - g.mean()[k]), std::sqrt(endpoint::kVarFloor) * std::abs(s.eps[k]) + 1e-15);
}

TEST(Endpoint, StandardizedSamplesLookNormal) {
  const endpoint::DiagGaussian g({0.5}, {4.0});
  Rng rng(8);
  const int n = 100000;
  double m1 = 0, m2 = 0, m3 = 0, m4 = 0;
  for (int i = 0; i < n; ++i) {
    const double u = (endpoint::sample_endpoint(g, rng).y[0] - 0.5) / 2.0;
    m1 += u;
    m2 += u * u;
    m3 += u * u * u;
    m4 += u * u * u * u;
  }
  m1 /= n, m2 /= n, m3 /= n, m4 /= n;
  const double var = m2 - m1 * m1;
  const double skew = (m3 - 3 * m1 * m2 + 2 * m1 * m1 * m1) / std::pow(var, 1.5);
  const double kurt = (m4 - 4 * m1 * m3 + 6 * m1 * m1 * m2 - 3 * m1 * m1 * m1 * m1) / (var * var);
  EXPECT_LT(std::abs(skew), 0.05);
  EXPECT_LT(std::abs(kurt - 3.0), 0.1);
}

TEST(Endpoint, ForwardPoint) {
  const sched::Schedule s;
  const Vec x{2.0, 0.0}, y{0.0, 2.0};
  const auto z = endpoint::forward_point(s, 0.5, x, y);
  EXPECT_NEAR(z[0], std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(z[1], std::sqrt(2.0), 1e-15);
  const auto z0 = endpoint::forward_point(s, 0.0, x, y);
  EXPECT_NEAR(z0[0], 2.0, 1e-2);
  const auto z1 = endpoint::forward_point(s, 1.0, x, y);
  EXPECT_NEAR(z1[1], 2.0, 1e-2);
  EXPECT_THROW(endpoint::forward_point(s, 0.5, x, Vec{1.0}), ValidationError);
}

TEST(Endpoint, ForwardPointIsLinear) {
  const sched::Schedule s;
  Rng rng(9);
  const Vec x1 = rng.normal_vec(3), x2 = rng.normal_vec(3), y1 = rng.normal_vec(3), y2 = rng.normal_vec(3);
  Vec xs(3), ys(3);
  for (int k = 0; k < 3; ++k) {
    xs[k] = 2.0 * x1[k] - x2[k];
    ys[k] = 2.0 * y1[k] - y2[k];
  }
  const auto a = endpoint::forward_point(s, 0.37, x1, y1), b = endpoint::forward_point(s, 0.37, x2, y2);
  const auto c = endpoint::forward_point(s, 0.37, xs, ys);
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(c[k], 2.0 * a[k] - b[k], 1e-12);
}
