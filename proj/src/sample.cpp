#include "eclab/sample.hpp"

#include <cmath>

namespace eclab::sample {

std::string to_string(GuidanceMode m) { return m == GuidanceMode::implicit_cfg ? "implicit_cfg" : "explicit"; }

GuidanceMode guidance_mode_from_string(const std::string& s) {
  if (s == "implicit_cfg") return GuidanceMode::implicit_cfg;
  if (s == "explicit") return GuidanceMode::explicit_endpoint;
  throw ValidationError("unknown guidance mode '" + s + "' (expected implicit_cfg|explicit)");
}

void GuidanceConfig::validate() const {
  require(steps >= 1, "guidance config: steps must be at least 1");
  require(std::isfinite(s_i) && std::isfinite(s_p), "guidance config: scales must be finite");
}

std::size_t passes_per_step(const GuidanceConfig& g) {
  if (g.mode == GuidanceMode::explicit_endpoint) return 1;
  if (g.s_i == 1.0 && g.s_p == 1.0) return 1;
  if (g.s_i == 1.0) return 2;
  return 3;
}

Vec cfg_combine(std::span<const double> e_null_null, std::span<const double> e_ctx_null,
                std::span<const double> e_ctx_prompt, double s_i, double s_p) {
  require_same_dim(e_null_null.size(), e_ctx_null.size(), "cfg_combine");
  require_same_dim(e_ctx_null.size(), e_ctx_prompt.size(), "cfg_combine");
  Vec out(e_null_null.size());
  for (std::size_t k = 0; k < out.size(); ++k)
    out[k] = e_null_null[k] + s_i * (e_ctx_null[k] - e_null_null[k]) + s_p * (e_ctx_prompt[k] - e_ctx_null[k]);
  return out;
}

Vec gamma_combine(std::span<const double> s_uncond, std::span<const double> s_cond, double gamma) {
  require_same_dim(s_uncond.size(), s_cond.size(), "gamma_combine");
  Vec out(s_uncond.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = (1.0 - gamma) * s_uncond[k] + gamma * s_cond[k];
  return out;
}

Vec guided_v(const train::Denoiser& model, const sched::Schedule& s, std::span<const double> z, double t,
             const SampleConditions& cond, const GuidanceConfig& g, std::size_t& calls) {
  if (g.mode == GuidanceMode::explicit_endpoint) {
    require(model.mode == train::Mode::explicit_endpoint, "explicit guidance needs an explicitly conditioned model");
    ++calls;
    return train::predict_v(model, s, z, t, {nullptr, cond.prompt});
  }
  require(model.mode == train::Mode::implicit, "CFG guidance needs an implicitly conditioned model");
  require(cond.context && cond.prompt, "CFG sampling needs both context and prompt");
  switch (passes_per_step(g)) {
    case 1:
      ++calls;
      return train::predict_v(model, s, z, t, {cond.context, cond.prompt});
    case 2: {
      calls += 2;
      const Vec e_cn = train::predict_v(model, s, z, t, {cond.context, nullptr});
      const Vec e_cp = train::predict_v(model, s, z, t, {cond.context, cond.prompt});
      // With s_I = 1 the null-null branch cancels.
      return cfg_combine(e_cn, e_cn, e_cp, 1.0, g.s_p);
    }
    default: {
      calls += 3;
      const Vec e_nn = train::predict_v(model, s, z, t, {nullptr, nullptr});
      const Vec e_cn = train::predict_v(model, s, z, t, {cond.context, nullptr});
      const Vec e_cp = train::predict_v(model, s, z, t, {cond.context, cond.prompt});
      return cfg_combine(e_nn, e_cn, e_cp, g.s_i, g.s_p);
    }
  }
}

SampleResult ddim_sample(const train::Denoiser& model, const sched::Schedule& s, std::span<const double> start,
                         const SampleConditions& cond, const GuidanceConfig& g) {
  g.validate();
  require_same_dim(start.size(), model.data_dim, "ddim_sample start");
  SampleResult res;
  Vec z(start.begin(), start.end());
  res.trajectory.push_back(z);
  const double t_hi = 1.0 - s.t_eps;
  const double dt = (t_hi - s.t_eps) / static_cast<double>(g.steps);
  Vec x_hat(z.size()), y_hat(z.size());
  for (std::size_t k = 0; k < g.steps; ++k) {
    const double t = t_hi - static_cast<double>(k) * dt;
    const auto [a, sg] = sched::alpha_sigma(s, t);
    const Vec v = guided_v(model, s, z, t, cond, g, res.denoiser_calls);
    for (std::size_t i = 0; i < z.size(); ++i) {
      x_hat[i] = a * z[i] - sg * v[i];
      y_hat[i] = sg * z[i] + a * v[i];
    }
    if (k + 1 == g.steps) {
      // Last step lands on clean data.
      z = x_hat;
    } else {
      const auto [a2, s2] = sched::alpha_sigma(s, t - dt);
      for (std::size_t i = 0; i < z.size(); ++i) z[i] = a2 * x_hat[i] + s2 * y_hat[i];
    }
    if (!all_finite(z)) throw NumericalError("ddim_sample: non-finite state at step " + std::to_string(k));
    res.trajectory.push_back(z);
  }
  res.final = z;
  return res;
}

Vec draw_start(const GuidanceConfig& g, const train::Conditioner& cond, std::span<const double> context,
               int prompt_id, Rng& rng) {
  if (g.mode == GuidanceMode::implicit_cfg) return rng.normal_vec(context.size());
  return endpoint::sample_endpoint(cond.explicit_endpoint(context, prompt_id), rng).y;
}

}  // namespace eclab::sample
