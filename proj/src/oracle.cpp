#include "eclab/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace eclab::oracle {
namespace {

Eigen::VectorXd to_eigen(std::span<const double> v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Vec to_vec(const Eigen::VectorXd& v) { return Vec(v.data(), v.data() + v.size()); }

Eigen::MatrixXd edit_matrix(const data::PromptEdit& p) {
  const auto n = static_cast<Eigen::Index>(p.a.size());
  Eigen::MatrixXd a(n, n);
  for (Eigen::Index r = 0; r < n; ++r)
    for (Eigen::Index c = 0; c < n; ++c) a(r, c) = p.a[r][c];
  return a;
}

double log_sum_exp(const std::vector<double>& v) {
  const double m = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

}  // namespace

GaussianMixture::GaussianMixture(std::vector<Component> comps) : comps_(std::move(comps)) {
  require(!comps_.empty(), "GaussianMixture: no components");
  const auto d = comps_.front().mean.size();
  double total = 0.0;
  for (const auto& c : comps_) {
    require(c.weight > 0.0, "GaussianMixture: weights must be positive");
    require(c.mean.size() == d && c.cov.rows() == d && c.cov.cols() == d, "GaussianMixture: dimension mismatch");
    total += c.weight;
    Factor f{Eigen::LLT<Eigen::MatrixXd>(c.cov), {}, 0.0};
    require(f.llt.info() == Eigen::Success, "GaussianMixture: covariance not positive definite");
    f.chol_l = f.llt.matrixL();
    const double log_det = 2.0 * f.chol_l.diagonal().array().log().sum();
    f.log_norm = -0.5 * (static_cast<double>(d) * std::log(2.0 * std::numbers::pi) + log_det);
    factors_.push_back(std::move(f));
  }
  require(std::abs(total - 1.0) < 1e-9, "GaussianMixture: weights must sum to 1");
  for (const auto& c : comps_) log_w_.push_back(std::log(c.weight));
}

void GaussianMixture::component_logs(const Eigen::VectorXd& z, std::vector<double>& out) const {
  out.resize(comps_.size());
  for (std::size_t i = 0; i < comps_.size(); ++i) {
    const Eigen::VectorXd u = factors_[i].chol_l.triangularView<Eigen::Lower>().solve(z - comps_[i].mean);
    out[i] = log_w_[i] + factors_[i].log_norm - 0.5 * u.squaredNorm();
  }
}

double GaussianMixture::log_density(std::span<const double> z) const {
  require_same_dim(z.size(), dim(), "GaussianMixture::log_density");
  std::vector<double> logs;
  component_logs(to_eigen(z), logs);
  return log_sum_exp(logs);
}

Vec GaussianMixture::score(std::span<const double> z) const {
  require_same_dim(z.size(), dim(), "GaussianMixture::score");
  const Eigen::VectorXd ze = to_eigen(z);
  std::vector<double> logs;
  component_logs(ze, logs);
  const double lse = log_sum_exp(logs);
  Eigen::VectorXd s = Eigen::VectorXd::Zero(ze.size());
  for (std::size_t i = 0; i < comps_.size(); ++i) {
    const double r = std::exp(logs[i] - lse);
    if (r == 0.0) continue;
    s -= r * factors_[i].llt.solve(ze - comps_[i].mean);
  }
  return to_vec(s);
}

Vec GaussianMixture::sample(Rng& rng) const {
  const double u = rng.uniform();
  std::size_t k = 0;
  double acc = comps_[0].weight;
  while (u >= acc && k + 1 < comps_.size()) acc += comps_[++k].weight;
  Eigen::VectorXd e(comps_[k].mean.size());
  for (Eigen::Index i = 0; i < e.size(); ++i) e(i) = rng.normal();
  return to_vec(comps_[k].mean + factors_[k].chol_l * e);
}

GaussianMixture marginal_at_t(const data::EditTask& task, const sched::Schedule& s, double t,
                              const Condition& cond) {
  const auto [alpha, sigma] = sched::alpha_sigma(s, t);
  const auto d = static_cast<Eigen::Index>(task.dim);
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(d, d);
  const double s2 = task.edit_noise_std * task.edit_noise_std;

  std::vector<const data::PromptEdit*> prompts;
  if (cond.prompt) {
    prompts.push_back(&task.prompt(*cond.prompt));
  } else {
    for (const auto& p : task.prompts) prompts.push_back(&p);
  }
  const double prompt_w = 1.0 / static_cast<double>(prompts.size());
  if (cond.context) require_same_dim(cond.context->size(), task.dim, "marginal_at_t context");

  std::vector<GaussianMixture::Component> comps;
  for (const auto* p : prompts) {
    const Eigen::MatrixXd a = edit_matrix(*p);
    const Eigen::VectorXd b = to_eigen(p->b);
    if (cond.context) {
      const Eigen::VectorXd mean = alpha * (a * to_eigen(*cond.context) + b);
      comps.push_back({prompt_w, mean, (alpha * alpha * s2 + sigma * sigma) * eye});
    } else {
      for (const auto& k : task.context_mixture) {
        const Eigen::VectorXd mean = alpha * (a * to_eigen(k.mean) + b);
        const Eigen::MatrixXd cov = alpha * alpha * (k.var * a * a.transpose() + s2 * eye) + sigma * sigma * eye;
        comps.push_back({prompt_w * k.weight, mean, cov});
      }
    }
  }
  return GaussianMixture(std::move(comps));
}

Vec score(const GaussianMixture& gm, std::span<const double> z) { return gm.score(z); }

Vec gamma_score(const data::EditTask& task, const sched::Schedule& s, double t, std::span<const double> z,
                const Condition& cond, double gamma) {
  const Vec su = marginal_at_t(task, s, t, {}).score(z);
  const Vec sc = marginal_at_t(task, s, t, cond).score(z);
  Vec out(su.size());
  for (std::size_t k = 0; k < su.size(); ++k) out[k] = (1.0 - gamma) * su[k] + gamma * sc[k];
  return out;
}

Vec implicit_classifier_all(const data::EditTask& task, const sched::Schedule& s, double t,
                            std::span<const double> z, const std::optional<Vec>& context) {
  std::vector<double> logs;
  const double log_prior = -std::log(static_cast<double>(task.prompts.size()));
  for (const auto& p : task.prompts)
    logs.push_back(log_prior + marginal_at_t(task, s, t, {context, p.id}).log_density(z));
  const double lse = log_sum_exp(logs);
  Vec post(logs.size());
  for (std::size_t i = 0; i < logs.size(); ++i) post[i] = std::exp(logs[i] - lse);
  return post;
}

double implicit_classifier(const data::EditTask& task, const sched::Schedule& s, double t,
                           std::span<const double> z, int prompt_id, const std::optional<Vec>& context) {
  return implicit_classifier_all(task, s, t, z, context)[task.index_of(prompt_id)];
}

double mollifier(double delta, double x) {
  require(delta > 0.0 && delta < 0.5, "mollifier: delta must lie in (0, 0.5)");
  if (x <= 0.0 || x >= 1.0) return 0.0;
  if (x >= delta && x <= 1.0 - delta) return 1.0;
  const double d2 = delta * delta;
  const double u = x < delta ? delta - x : x + delta - 1.0;
  return std::exp(-d2 / (d2 - u * u) + 1.0);
}

double mollifier_density(double delta, double x) {
  thread_local double cached_delta = -1.0, cached_integral = 0.0;
  if (delta != cached_delta) {
    // Ramps are mirror images; integrate one with composite Simpson.
    constexpr int kPanels = 20000;
    const double h = delta / kPanels;
    double ramp = mollifier(delta, 0.0) + mollifier(delta, delta);
    for (int i = 1; i < kPanels; ++i) ramp += (i % 2 ? 4.0 : 2.0) * mollifier(delta, i * h);
    ramp *= h / 3.0;
    cached_integral = (1.0 - 2.0 * delta) + 2.0 * ramp;
    cached_delta = delta;
  }
  return mollifier(delta, x) / cached_integral;
}

double mollifier_grad_sup(double delta) {
  require(delta > 0.0 && delta < 0.5, "mollifier_grad_sup: delta must lie in (0, 0.5)");
  constexpr int kGrid = 100000;
  const double step = delta / (kGrid + 1);
  const double h = step * 1e-2;
  double sup = 0.0;
  for (int i = 1; i <= kGrid; ++i) {
    const double x = i * step;
    const double g = (mollifier(delta, x + h) - mollifier(delta, x - h)) / (2.0 * h);
    sup = std::max(sup, std::abs(g));
  }
  return sup;
}

}  // namespace eclab::oracle
