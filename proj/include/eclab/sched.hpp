#pragma once

// Continuous-time variance-preserving schedule (cosine): alpha_t = cos(pi t/2),
// sigma_t = sin(pi t/2), log-SNR lambda_t = log(alpha_t^2 / sigma_t^2).

namespace eclab::sched {

enum class Kind { cosine };

struct Schedule {
  Kind kind = Kind::cosine;
  double t_eps = 1e-3;
  // log-SNR truncation; defaults to the range induced by the time clamp.
  double lambda_min;
  double lambda_max;

  Schedule();
  explicit Schedule(double t_eps);
  Schedule(double t_eps, double lambda_min, double lambda_max);

  /// Throws ValidationError when the invariants do not hold.
  void validate() const;

  double clamp_t(double t) const;
};

struct AlphaSigma {
  double alpha;
  double sigma;
};

AlphaSigma alpha_sigma(const Schedule& s, double t);

/// 2 ln cot(pi t / 2), truncated to [lambda_min, lambda_max].
double log_snr(const Schedule& s, double t);

/// d lambda / dt = -2 pi / sin(pi t). Always negative.
double dlogsnr_dt(const Schedule& s, double t);

/// w(lambda) = exp(-lambda / 2).
double loss_weight(const Schedule& s, double lambda);

}  // namespace eclab::sched
