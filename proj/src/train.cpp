#include "eclab/train.hpp"

#include <algorithm>
#include <cmath>

namespace eclab::train {

std::string to_string(Mode m) { return m == Mode::implicit ? "implicit" : "explicit"; }

Mode mode_from_string(const std::string& s) {
  if (s == "implicit") return Mode::implicit;
  if (s == "explicit") return Mode::explicit_endpoint;
  throw ValidationError("unknown training mode '" + s + "' (expected implicit|explicit)");
}

void lambda_embedding(double lambda, std::span<double> out) {
  static constexpr double kFreq[kLambdaFeatures / 2] = {0.05, 0.1, 0.2, 0.4};
  for (std::size_t i = 0; i < kLambdaFeatures / 2; ++i) {
    out[2 * i] = std::sin(kFreq[i] * lambda);
    out[2 * i + 1] = std::cos(kFreq[i] * lambda);
  }
}

Denoiser Denoiser::init(Mode mode, bool extra_tokens, std::size_t data_dim, std::size_t embed_dim,
                        const std::vector<std::size_t>& hidden, Rng& rng) {
  Denoiser m;
  m.mode = mode;
  m.extra_tokens = mode == Mode::explicit_endpoint && extra_tokens;
  m.data_dim = data_dim;
  m.embed_dim = embed_dim;
  std::vector<std::size_t> widths{m.input_dim()};
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(data_dim);
  m.net = nn::MlpParams::random(widths, rng, 1, 1.0);
  if (mode == Mode::implicit) {
    m.null_ctx = rng.normal_vec(data_dim);
    m.null_prompt = rng.normal_vec(embed_dim);
  }
  return m;
}

std::size_t Denoiser::input_dim() const {
  return data_dim + kLambdaFeatures + (takes_context() ? data_dim : 0) + (takes_prompt() ? embed_dim : 0);
}

void Denoiser::build_input(std::span<const double> z, double lambda, const CondInputs& c,
                           std::span<double> out) const {
  require_same_dim(z.size(), data_dim, "denoiser state");
  require_same_dim(out.size(), input_dim(), "denoiser input");
  auto it = std::copy(z.begin(), z.end(), out.begin());
  lambda_embedding(lambda, std::span<double>(it, kLambdaFeatures));
  it += kLambdaFeatures;
  if (takes_context()) {
    const Vec& ctx = c.context ? *c.context : null_ctx;
    require_same_dim(ctx.size(), data_dim, "denoiser context");
    it = std::copy(ctx.begin(), ctx.end(), it);
  }
  if (takes_prompt()) {
    const Vec* p = c.prompt;
    if (!p) {
      require(mode == Mode::implicit, "explicit denoiser with extra tokens needs a prompt embedding");
      p = &null_prompt;
    }
    require_same_dim(p->size(), embed_dim, "denoiser prompt");
    std::copy(p->begin(), p->end(), it);
  }
}

Vec predict_v(const Denoiser& m, const sched::Schedule& s, std::span<const double> z, double t,
              const CondInputs& c) {
  Vec in(m.input_dim());
  m.build_input(z, sched::log_snr(s, t), c, in);
  return nn::predict(m.net, in);
}

endpoint::DiagGaussian Conditioner::explicit_endpoint(std::span<const double> context, int prompt_id) const {
  require(vae != nullptr && table != nullptr, "explicit conditioning needs a prompt VAE and prompt table");
  const endpoint::DiagGaussian ctx(Vec(context.begin(), context.end()),
                                   Vec(context.size(), ctx_std * ctx_std));
  return endpoint::fuse(ctx, promptvae::encode_prompt(*vae, table->at(prompt_id)));
}

void TrainConfig::validate() const {
  require(steps >= 1 && batch >= 1, "train config: steps and batch must be at least 1");
  require(lr >= 0.0, "train config: lr must be non-negative");
  for (double p : {drop_ctx, drop_prompt, drop_both})
    require(p >= 0.0 && p <= 1.0, "train config: dropout rates must lie in [0, 1]");
  require(!hidden.empty(), "train config: need at least one hidden layer");
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"mode", to_string(c.mode)}, {"extra_tokens", c.extra_tokens}, {"steps", c.steps},
          {"batch", c.batch},          {"lr", c.lr},                     {"drop_ctx", c.drop_ctx},
          {"drop_prompt", c.drop_prompt}, {"drop_both", c.drop_both},    {"hidden", c.hidden},
          {"seed", c.seed}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    c.mode = mode_from_string(j.value("mode", to_string(c.mode)));
    c.extra_tokens = j.value("extra_tokens", c.extra_tokens);
    c.steps = j.value("steps", c.steps);
    c.batch = j.value("batch", c.batch);
    c.lr = j.value("lr", c.lr);
    c.drop_ctx = j.value("drop_ctx", c.drop_ctx);
    c.drop_prompt = j.value("drop_prompt", c.drop_prompt);
    c.drop_both = j.value("drop_both", c.drop_both);
    c.hidden = j.value("hidden", c.hidden);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

NoiseDraw draw_noise(const TrainConfig& cfg, std::size_t dim, Rng& rng) {
  NoiseDraw d;
  d.eps = rng.normal_vec(dim);
  if (cfg.mode == Mode::implicit) {
    const double both = rng.uniform();
    const double uc = rng.uniform();
    const double up = rng.uniform();
    d.drop_ctx = both < cfg.drop_both || uc < cfg.drop_ctx;
    d.drop_prompt = both < cfg.drop_both || up < cfg.drop_prompt;
  }
  return d;
}

namespace {

struct Workspace {
  Vec noise, z, input, out_grad, in_grad;
  nn::ForwardTape tape;
  std::vector<Vec> scratch;
};

// Shared by the value-only and gradient paths so both follow the same arithmetic.
// Returns the loss; when `grad` is non-null accumulates gradients into it.
double loss_impl(const Denoiser& model, const sched::Schedule& s, const data::EditTriple& triple, double t,
                 const NoiseDraw& draw, const Conditioner& cond, Workspace& ws, LossGrad* grad) {
  const std::size_t d = model.data_dim;
  require_same_dim(triple.target.size(), d, "training triple target");
  require_same_dim(draw.eps.size(), d, "noise draw");
  const auto [alpha, sigma] = sched::alpha_sigma(s, t);
  const double lambda = sched::log_snr(s, t);
  const double weight = sched::loss_weight(s, lambda) * -sched::dlogsnr_dt(s, t);

  ws.noise.resize(d);
  if (model.mode == Mode::implicit) {
    std::copy(draw.eps.begin(), draw.eps.end(), ws.noise.begin());
  } else {
    const auto g = cond.explicit_endpoint(triple.context, triple.prompt_id);
    for (std::size_t k = 0; k < d; ++k) ws.noise[k] = g.mean()[k] + std::sqrt(g.var()[k]) * draw.eps[k];
  }
  ws.z.resize(d);
  for (std::size_t k = 0; k < d; ++k) ws.z[k] = alpha * triple.target[k] + sigma * ws.noise[k];

  CondInputs ci;
  if (model.takes_context() && !draw.drop_ctx) ci.context = &triple.context;
  if (model.takes_prompt() && !(model.mode == Mode::implicit && draw.drop_prompt))
    ci.prompt = &cond.prompt_vec(triple.prompt_id);
  ws.input.resize(model.input_dim());
  model.build_input(ws.z, lambda, ci, ws.input);
  nn::forward_into(model.net, ws.input, ws.tape);
  const Vec& v_hat = ws.tape.output;

  // noise_hat - noise = alpha * (v_hat - v)
  double loss = 0.0;
  ws.out_grad.resize(d);
  for (std::size_t k = 0; k < d; ++k) {
    const double v = alpha * ws.noise[k] - sigma * triple.target[k];
    const double r = alpha * (v_hat[k] - v);
    loss += r * r;
    ws.out_grad[k] = 2.0 * weight * alpha * r;
  }
  loss *= weight;
  if (!std::isfinite(loss)) throw NumericalError("training_loss: non-finite loss at t=" + std::to_string(t));

  if (grad) {
    ws.in_grad.resize(model.input_dim());
    nn::backward_accumulate(model.net, ws.tape, ws.out_grad, grad->net_grad, ws.in_grad, ws.scratch);
    std::size_t off = d + kLambdaFeatures;
    if (model.takes_context()) {
      if (!ci.context)
        for (std::size_t k = 0; k < d; ++k) grad->null_ctx_grad[k] += ws.in_grad[off + k];
      off += d;
    }
    if (model.mode == Mode::implicit && !ci.prompt)
      for (std::size_t k = 0; k < model.embed_dim; ++k) grad->null_prompt_grad[k] += ws.in_grad[off + k];
  }
  return loss;
}

LossGrad zero_grad(const Denoiser& m) {
  return {0.0, Vec(m.net.size(), 0.0), Vec(m.null_ctx.size(), 0.0), Vec(m.null_prompt.size(), 0.0)};
}

}  // namespace

LossGrad training_loss(const Denoiser& model, const sched::Schedule& s, const data::EditTriple& triple, double t,
                       const NoiseDraw& draw, const Conditioner& cond) {
  Workspace ws;
  LossGrad g = zero_grad(model);
  g.loss = loss_impl(model, s, triple, t, draw, cond, ws, &g);
  return g;
}

double training_loss_value(const Denoiser& model, const sched::Schedule& s, const data::EditTriple& triple,
                           double t, const NoiseDraw& draw, const Conditioner& cond) {
  Workspace ws;
  return loss_impl(model, s, triple, t, draw, cond, ws, nullptr);
}

TrainResult train_diffusion(const std::vector<data::EditTriple>& dataset, const TrainConfig& cfg,
                            const sched::Schedule& s, const Conditioner& cond,
                            const std::vector<double>& snapshot_fractions) {
  require(!dataset.empty(), "train_diffusion: empty dataset");
  cfg.validate();
  s.validate();
  require(cond.table != nullptr, "train_diffusion: missing prompt table");
  if (cfg.mode == Mode::explicit_endpoint) require(cond.vae != nullptr, "train_diffusion: explicit mode needs a prompt VAE");

  Rng rng(cfg.seed);
  const std::size_t d = dataset.front().target.size();
  TrainResult res;
  res.model = Denoiser::init(cfg.mode, cfg.extra_tokens, d, cond.table->embed_dim(), cfg.hidden, rng);
  Denoiser& model = res.model;
  nn::Adam net_opt(model.net.size()), ctx_opt(model.null_ctx.size()), prompt_opt(model.null_prompt.size());

  std::vector<std::size_t> snap_steps;
  for (double f : snapshot_fractions)
    snap_steps.push_back(std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(f * cfg.steps)), 1, cfg.steps));

  Workspace ws;
  LossGrad g = zero_grad(model);
  const double inv_b = 1.0 / static_cast<double>(cfg.batch);
  res.trace.reserve(cfg.steps);
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    std::fill(g.net_grad.begin(), g.net_grad.end(), 0.0);
    std::fill(g.null_ctx_grad.begin(), g.null_ctx_grad.end(), 0.0);
    std::fill(g.null_prompt_grad.begin(), g.null_prompt_grad.end(), 0.0);
    double batch_loss = 0.0;
    for (std::size_t b = 0; b < cfg.batch; ++b) {
      const auto& triple = dataset[rng.index(dataset.size())];
      const double t = rng.uniform(s.t_eps, 1.0 - s.t_eps);
      const NoiseDraw draw = draw_noise(cfg, d, rng);
      batch_loss += loss_impl(model, s, triple, t, draw, cond, ws, &g);
    }
    batch_loss *= inv_b;
    if (batch_loss > 1e6) throw NumericalError("train_diffusion: diverged at step " + std::to_string(step));
    for (auto& x : g.net_grad) x *= inv_b;
    for (auto& x : g.null_ctx_grad) x *= inv_b;
    for (auto& x : g.null_prompt_grad) x *= inv_b;
    net_opt.step(model.net.values(), g.net_grad, cfg.lr);
    if (model.mode == Mode::implicit) {
      ctx_opt.step(model.null_ctx, g.null_ctx_grad, cfg.lr);
      prompt_opt.step(model.null_prompt, g.null_prompt_grad, cfg.lr);
    }
    res.trace.push_back({step, batch_loss});
    for (std::size_t i = 0; i < snap_steps.size(); ++i)
      if (snap_steps[i] == step + 1) res.snapshots.emplace_back(snapshot_fractions[i], model);
  }
  return res;
}

nlohmann::json to_json(const Denoiser& m) {
  return {{"format", "eclab-denoiser-v1"},
          {"mode", to_string(m.mode)},
          {"extra_tokens", m.extra_tokens},
          {"data_dim", m.data_dim},
          {"embed_dim", m.embed_dim},
          {"null_ctx", m.null_ctx},
          {"null_prompt", m.null_prompt},
          {"net", nn::to_json(m.net)}};
}

Denoiser denoiser_from_json(const nlohmann::json& j) {
  try {
    require(j.at("format").get<std::string>() == "eclab-denoiser-v1", "checkpoint: not a denoiser");
    Denoiser m;
    m.mode = mode_from_string(j.at("mode").get<std::string>());
    m.extra_tokens = j.at("extra_tokens").get<bool>();
    m.data_dim = j.at("data_dim").get<std::size_t>();
    m.embed_dim = j.at("embed_dim").get<std::size_t>();
    m.null_ctx = j.at("null_ctx").get<Vec>();
    m.null_prompt = j.at("null_prompt").get<Vec>();
    m.net = nn::mlp_from_json(j.at("net"));
    require(m.net.input_dim() == m.input_dim() && m.net.output_dim() == m.data_dim,
            "checkpoint: denoiser network shape does not match its mode");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("checkpoint: malformed denoiser: ") + e.what());
  }
}

}  // namespace eclab::train
