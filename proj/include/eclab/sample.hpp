#pragma once

// Deterministic DDIM (eta = 0) over a uniform time grid from 1 - t_eps down to
// t_eps. Implicit models combine up to three denoiser passes per step with
// classifier-free guidance; explicitly conditioned models take one pass.

#include <cstdint>
#include <string>
#include <vector>

#include "eclab/common.hpp"
#include "eclab/sched.hpp"
#include "eclab/train.hpp"

namespace eclab::sample {

enum class GuidanceMode { implicit_cfg, explicit_endpoint };

std::string to_string(GuidanceMode m);
GuidanceMode guidance_mode_from_string(const std::string& s);

struct GuidanceConfig {
  std::string name;  // method label in reports, e.g. "cfg_x3"
  GuidanceMode mode = GuidanceMode::implicit_cfg;
  double s_i = 1.0;
  double s_p = 1.0;
  std::size_t steps = 10;
  std::uint64_t seed = 0;
  // Explicit mode: use the model trained with prompt tokens as extra input.
  bool extra_tokens = true;

  void validate() const;
  bool operator==(const GuidanceConfig&) const = default;
};

/// Denoiser evaluations per DDIM step: 1 in explicit mode; for CFG 1 when
/// s_I = s_P = 1, 2 when s_I = 1, otherwise 3.
std::size_t passes_per_step(const GuidanceConfig& g);

/// e_nn + s_I (e_cn - e_nn) + s_P (e_cp - e_cn)
Vec cfg_combine(std::span<const double> e_null_null, std::span<const double> e_ctx_null,
                std::span<const double> e_ctx_prompt, double s_i, double s_p);

/// (1 - gamma) s_uncond + gamma s_cond
Vec gamma_combine(std::span<const double> s_uncond, std::span<const double> s_cond, double gamma);

/// Condition inputs for one sample. `prompt` is the frozen prompt embedding.
struct SampleConditions {
  const Vec* context = nullptr;
  const Vec* prompt = nullptr;
};

struct SampleResult {
  Vec final;
  std::vector<Vec> trajectory;  // state at each grid time, then the final estimate
  std::size_t denoiser_calls = 0;
};

/// Guided v estimate at (z, t); adds the number of passes used to `calls`.
Vec guided_v(const train::Denoiser& model, const sched::Schedule& s, std::span<const double> z, double t,
             const SampleConditions& cond, const GuidanceConfig& g, std::size_t& calls);

SampleResult ddim_sample(const train::Denoiser& model, const sched::Schedule& s, std::span<const double> start,
                         const SampleConditions& cond, const GuidanceConfig& g);

/// Starting point: N(0, I) for CFG, the fused condition endpoint for explicit.
Vec draw_start(const GuidanceConfig& g, const train::Conditioner& cond, std::span<const double> context,
               int prompt_id, Rng& rng);

}  // namespace eclab::sample
