#include "eclab/sched.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "eclab/common.hpp"

namespace eclab::sched {
namespace {

double raw_log_snr(double t) {
  const double h = 0.5 * std::numbers::pi * t;
  return 2.0 * (std::log(std::cos(h)) - std::log(std::sin(h)));
}

}  // namespace

Schedule::Schedule() : Schedule(1e-3) {}

Schedule::Schedule(double eps)
    : t_eps(eps), lambda_min(raw_log_snr(1.0 - eps)), lambda_max(raw_log_snr(eps)) {}

Schedule::Schedule(double eps, double lmin, double lmax) : t_eps(eps), lambda_min(lmin), lambda_max(lmax) {}

void Schedule::validate() const {
  require(t_eps > 0.0 && t_eps < 0.5, "schedule: t_eps must lie in (0, 0.5)");
  require(lambda_min < lambda_max, "schedule: lambda_min must be below lambda_max");
}

double Schedule::clamp_t(double t) const { return std::clamp(t, t_eps, 1.0 - t_eps); }

AlphaSigma alpha_sigma(const Schedule& s, double t) {
  const double h = 0.5 * std::numbers::pi * s.clamp_t(t);
  return {std::cos(h), std::sin(h)};
}

double log_snr(const Schedule& s, double t) {
  return std::clamp(raw_log_snr(s.clamp_t(t)), s.lambda_min, s.lambda_max);
}

double dlogsnr_dt(const Schedule& s, double t) {
  return -2.0 * std::numbers::pi / std::sin(std::numbers::pi * s.clamp_t(t));
}

double loss_weight(const Schedule&, double lambda) { return std::exp(-0.5 * lambda); }

}  // namespace eclab::sched
