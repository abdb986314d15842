#pragma once

// Closed-form ground truth for the toy task under the implicit (N(0, I)
// endpoint) forward process: exact marginal mixtures at time t, their scores,
// gamma-powered score combinations, the implicit classifier p(c | z_t), and the
// mollifier bump used to show near-constant densities with unbounded gradients.

#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "eclab/common.hpp"
#include "eclab/data.hpp"
#include "eclab/rng.hpp"
#include "eclab/sched.hpp"

namespace eclab::oracle {

class GaussianMixture {
 public:
  struct Component {
    double weight;
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
  };

  explicit GaussianMixture(std::vector<Component> comps);

  std::size_t dim() const { return static_cast<std::size_t>(comps_.front().mean.size()); }
  std::size_t size() const { return comps_.size(); }
  const Component& component(std::size_t i) const { return comps_[i]; }

  double log_density(std::span<const double> z) const;
  /// Responsibility-weighted component scores, computed in log space.
  Vec score(std::span<const double> z) const;
  Vec sample(Rng& rng) const;

 private:
  struct Factor {
    Eigen::LLT<Eigen::MatrixXd> llt;
    Eigen::MatrixXd chol_l;
    double log_norm;  // -0.5 (d log 2pi + log det)
  };
  std::vector<Component> comps_;
  std::vector<Factor> factors_;
  std::vector<double> log_w_;
  void component_logs(const Eigen::VectorXd& z, std::vector<double>& out) const;
};

/// Which conditions to fix. Absent members are marginalized out.
struct Condition {
  std::optional<Vec> context;
  std::optional<int> prompt;
};

GaussianMixture marginal_at_t(const data::EditTask& task, const sched::Schedule& s, double t,
                              const Condition& cond);

Vec score(const GaussianMixture& gm, std::span<const double> z);

/// (1 - gamma) * score(p(z_t)) + gamma * score(p(z_t | cond)).
Vec gamma_score(const data::EditTask& task, const sched::Schedule& s, double t, std::span<const double> z,
                const Condition& cond, double gamma);

/// Posterior over prompt ids p(c_P | z_t [, c_I]) with uniform prior, one entry
/// per task prompt in task order.
Vec implicit_classifier_all(const data::EditTask& task, const sched::Schedule& s, double t,
                            std::span<const double> z, const std::optional<Vec>& context = std::nullopt);

double implicit_classifier(const data::EditTask& task, const sched::Schedule& s, double t,
                           std::span<const double> z, int prompt_id,
                           const std::optional<Vec>& context = std::nullopt);

/// Unnormalized bump: 0 outside (0, 1), exactly 1 on [delta, 1 - delta], and
/// exp(1 - delta^2 / (delta^2 - (delta - x)^2)) on the left ramp (mirrored on
/// the right). Requires 0 < delta < 0.5.
double mollifier(double delta, double x);

/// Normalized density mollifier(delta, x) / integral.
double mollifier_density(double delta, double x);

/// max |d/dx mollifier| over a 1e5-point grid in (0, delta), by central differences.
double mollifier_grad_sup(double delta);

}  // namespace eclab::oracle
