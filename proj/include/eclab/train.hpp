#pragma once

// Diffusion training in v-parameterization for both conditioning regimes.
//
//  implicit: z_t = a x + s eps, eps ~ N(0, I); the network sees
//            [z_t, emb(lambda_t), context-or-null, prompt-or-null].
//  explicit: z_t = a x + s y, y ~ fused endpoint of (context, prompt); the
//            network sees [z_t, emb(lambda_t)] plus the prompt embedding when
//            extra_tokens is set.
//
// Target v = a * noise - s * x. The weighted loss is
//   w(lambda_t) * (-dlambda/dt) * || noise_hat - noise ||^2,
// with noise_hat = s z_t + a v_hat recovered from the v output.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "eclab/common.hpp"
#include "eclab/data.hpp"
#include "eclab/endpoint.hpp"
#include "eclab/nn.hpp"
#include "eclab/promptvae.hpp"
#include "eclab/sched.hpp"

namespace eclab::train {

enum class Mode { implicit, explicit_endpoint };

std::string to_string(Mode m);
Mode mode_from_string(const std::string& s);

inline constexpr std::size_t kLambdaFeatures = 8;

/// Sinusoidal features of log-SNR.
void lambda_embedding(double lambda, std::span<double> out);

/// Condition slots handed to the denoiser; a null pointer selects the learned
/// null vector (implicit mode) or is ignored (explicit mode).
struct CondInputs {
  const Vec* context = nullptr;
  const Vec* prompt = nullptr;
};

struct Denoiser {
  Mode mode = Mode::implicit;
  bool extra_tokens = false;
  std::size_t data_dim = 0;
  std::size_t embed_dim = 0;
  nn::MlpParams net;
  Vec null_ctx;     // implicit only
  Vec null_prompt;  // implicit only

  static Denoiser init(Mode mode, bool extra_tokens, std::size_t data_dim, std::size_t embed_dim,
                       const std::vector<std::size_t>& hidden, Rng& rng);

  std::size_t input_dim() const;
  bool takes_context() const { return mode == Mode::implicit; }
  bool takes_prompt() const { return mode == Mode::implicit || extra_tokens; }

  void build_input(std::span<const double> z, double lambda, const CondInputs& c, std::span<double> out) const;

  bool operator==(const Denoiser&) const = default;
};

/// v_hat for state z at time t.
Vec predict_v(const Denoiser& m, const sched::Schedule& s, std::span<const double> z, double t,
              const CondInputs& c);

/// Supplies condition-derived quantities: prompt embeddings for the network
/// and, for explicit conditioning, the fused endpoint Gaussian.
struct Conditioner {
  const promptvae::PromptTable* table = nullptr;
  const promptvae::PromptVae* vae = nullptr;  // explicit mode only
  double ctx_std = 0.05;

  const Vec& prompt_vec(int prompt_id) const { return table->at(prompt_id).vec; }
  /// N(c_I, ctx_std^2 I) fused with encode_prompt(c_P).
  endpoint::DiagGaussian explicit_endpoint(std::span<const double> context, int prompt_id) const;
};

struct TrainConfig {
  Mode mode = Mode::implicit;
  bool extra_tokens = false;
  std::size_t steps = 20000;
  std::size_t batch = 128;
  double lr = 1e-3;
  double drop_ctx = 0.05;
  double drop_prompt = 0.05;
  double drop_both = 0.05;  // forced both-null share, on top of independent drops
  std::vector<std::size_t> hidden{128, 128, 128};
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

/// Per-element randomness of one loss evaluation.
struct NoiseDraw {
  Vec eps;  // standard normal; in explicit mode y = mean + sqrt(var) * eps
  bool drop_ctx = false;
  bool drop_prompt = false;
};

struct LossGrad {
  double loss = 0.0;
  Vec net_grad;
  Vec null_ctx_grad;
  Vec null_prompt_grad;
};

LossGrad training_loss(const Denoiser& model, const sched::Schedule& s, const data::EditTriple& triple, double t,
                       const NoiseDraw& draw, const Conditioner& cond);

/// Loss value only (no gradients); same arithmetic as training_loss.
double training_loss_value(const Denoiser& model, const sched::Schedule& s, const data::EditTriple& triple,
                           double t, const NoiseDraw& draw, const Conditioner& cond);

/// Draws the per-element randomness the training loop uses.
NoiseDraw draw_noise(const TrainConfig& cfg, std::size_t dim, Rng& rng);

struct LossPoint {
  std::size_t step;
  double loss;
};

struct TrainResult {
  Denoiser model;
  std::vector<LossPoint> trace;
  /// Parameter snapshots at the requested fractions of training.
  std::vector<std::pair<double, Denoiser>> snapshots;
};

TrainResult train_diffusion(const std::vector<data::EditTriple>& dataset, const TrainConfig& cfg,
                            const sched::Schedule& s, const Conditioner& cond,
                            const std::vector<double>& snapshot_fractions = {});

nlohmann::json to_json(const Denoiser& m);
Denoiser denoiser_from_json(const nlohmann::json& j);

}  // namespace eclab::train
