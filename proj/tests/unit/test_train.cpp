#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "eclab/train.hpp"

using namespace eclab;
using train::Mode;

namespace {

struct Fixture {
  data::EditTask task = data::default_task();
  promptvae::PromptTable table = promptvae::PromptTable::random({0, 1, 2, 3}, 16, 1);
  promptvae::PromptVae vae;
  sched::Schedule s;
  train::Conditioner cond;

  Fixture() {
    Rng rng(2);
    vae = promptvae::PromptVae::init(16, 32, 2, rng);
    cond = {&table, &vae, 0.05};
  }

  train::Denoiser model(Mode mode, bool tokens, std::uint64_t seed, std::vector<std::size_t> hidden = {16, 16}) const {
    Rng rng(seed);
    return train::Denoiser::init(mode, tokens, 2, 16, hidden, rng);
  }
};

// Zero weights and a chosen bias: the network returns `bias` for every input.
void make_constant(train::Denoiser& m, const Vec& bias) {
  for (auto& v : m.net.values()) v = 0.0;
  const std::size_t last = m.net.num_layers() - 1;
  std::copy(bias.begin(), bias.end(), m.net.bias(last).begin());
}

double sq_dist(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
  return s;
}

}  // namespace

TEST(Train, PerfectPredictionGivesZeroLoss) {
  Fixture f;
  auto m = f.model(Mode::implicit, false, 3);
  const Vec b{0.4, -1.1};
  make_constant(m, b);
  const double t = 0.37;
  const auto [a, s] = sched::alpha_sigma(f.s, t);
  // x = 0 and eps = b / alpha make the target v = alpha eps - sigma x equal b.
  train::NoiseDraw draw{{b[0] / a, b[1] / a}, false, false};
  const data::EditTriple tr{{0.2, 0.3}, 1, {0.0, 0.0}};
  const auto lg = train::training_loss(m, f.s, tr, t, draw, f.cond);
  EXPECT_NEAR(lg.loss, 0.0, 1e-24);
  for (double g : lg.net_grad) EXPECT_NEAR(g, 0.0, 1e-12);
  (void)s;
}

TEST(Train, ImplicitLossMatchesIndependentFormula) {
  Fixture f;
  const auto m = f.model(Mode::implicit, false, 4);
  Rng rng(5);
  for (int i = 0; i < 50; ++i) {
    const double t = rng.uniform(0.01, 0.99);
    const data::EditTriple tr{rng.normal_vec(2), static_cast<int>(rng.index(4)), rng.normal_vec(2)};
    const train::NoiseDraw draw{rng.normal_vec(2), rng.uniform() < 0.3, rng.uniform() < 0.3};
    const auto [a, s] = sched::alpha_sigma(f.s, t);
    Vec z(2), v(2);
    for (int k = 0; k < 2; ++k) {
      z[k] = a * tr.target[k] + s * draw.eps[k];
      v[k] = a * draw.eps[k] - s * tr.target[k];
    }
    const Vec& p = f.table.at(tr.prompt_id).vec;
    const Vec v_hat = train::predict_v(m, f.s, z, t, {draw.drop_ctx ? nullptr : &tr.context, draw.drop_prompt ? nullptr : &p});
    const double w = sched::loss_weight(f.s, sched::log_snr(f.s, t)) * -sched::dlogsnr_dt(f.s, t);
    const double expect = w * a * a * sq_dist(v_hat, v);
    const double got = train::training_loss_value(m, f.s, tr, t, draw, f.cond);
    EXPECT_NEAR(got, expect, 1e-12 * (1.0 + expect));
    // The weighted v residual has a constant total weight of pi.
    EXPECT_NEAR(got, std::numbers::pi * sq_dist(v_hat, v), 1e-9 * (1.0 + expect));
  }
}

TEST(Train, LossScalesLinearlyWithWeightAtFixedError) {
  Fixture f;
  auto m = f.model(Mode::implicit, false, 6);
  make_constant(m, {0.0, 0.0});
  const data::EditTriple tr{{0.0, 0.0}, 0, {0.0, 0.0}};
  for (double t : {0.1, 0.3, 0.5, 0.8}) {
    const auto [a, s] = sched::alpha_sigma(f.s, t);
    // eps = e / alpha^2 keeps alpha * (v_hat - v) = -e fixed across t.
    const Vec e{0.3, -0.2};
    const train::NoiseDraw draw{{e[0] / (a * a), e[1] / (a * a)}, false, false};
    const double w = sched::loss_weight(f.s, sched::log_snr(f.s, t)) * -sched::dlogsnr_dt(f.s, t);
    EXPECT_NEAR(train::training_loss_value(m, f.s, tr, t, draw, f.cond), w * 0.13, 1e-12 * w);
    (void)s;
  }
}

TEST(Train, ExplicitLossUsesFusedEndpointNoise) {
  Fixture f;
  auto m = f.model(Mode::explicit_endpoint, false, 7);
  const Vec b{0.25, 0.5};
  make_constant(m, b);
  Rng rng(8);
  for (int i = 0; i < 20; ++i) {
    const double t = rng.uniform(0.05, 0.95);
    const data::EditTriple tr{rng.normal_vec(2), static_cast<int>(rng.index(4)), rng.normal_vec(2)};
    const train::NoiseDraw draw{rng.normal_vec(2), false, false};
    const auto g = f.cond.explicit_endpoint(tr.context, tr.prompt_id);
    // Zero-head VAE: prompt part is N(0, I), so var = 1 + 0.05^2.
    EXPECT_NEAR(g.var()[0], 1.0025, 1e-15);
    const auto [a, s] = sched::alpha_sigma(f.s, t);
    Vec v(2);
    for (int k = 0; k < 2; ++k) {
      const double y = tr.context[k] + std::sqrt(1.0025) * draw.eps[k];
      v[k] = a * y - s * tr.target[k];
    }
    EXPECT_NEAR(train::training_loss_value(m, f.s, tr, t, draw, f.cond), std::numbers::pi * sq_dist(b, v), 1e-9);
  }
}

TEST(Train, MonteCarloLossIsStableUnderReassociation) {
  Fixture f;
  const auto m = f.model(Mode::implicit, false, 9);
  train::TrainConfig cfg;
  Rng rng(10);
  const auto ds = data::gen_dataset(f.task, 256, 11);
  struct Draw {
    std::size_t idx;
    double t;
    train::NoiseDraw nd;
  };
  std::vector<Draw> draws;
  for (int i = 0; i < 10000; ++i) {
    const std::size_t idx = rng.index(ds.size());
    const double t = rng.uniform(f.s.t_eps, 1.0 - f.s.t_eps);
    draws.push_back({idx, t, train::draw_noise(cfg, 2, rng)});
  }
  double forward_sum = 0.0;
  for (const auto& d : draws) forward_sum += train::training_loss_value(m, f.s, ds[d.idx], d.t, d.nd, f.cond);

  // Independent recomputation, summed backwards in long double.
  long double backward_sum = 0.0L;
  for (auto it = draws.rbegin(); it != draws.rend(); ++it) {
    const auto& tr = ds[it->idx];
    const auto [a, s] = sched::alpha_sigma(f.s, it->t);
    Vec z(2), v(2);
    for (int k = 0; k < 2; ++k) {
      z[k] = a * tr.target[k] + s * it->nd.eps[k];
      v[k] = a * it->nd.eps[k] - s * tr.target[k];
    }
    const Vec& p = f.table.at(tr.prompt_id).vec;
    const Vec v_hat = train::predict_v(m, f.s, z, it->t,
                                       {it->nd.drop_ctx ? nullptr : &tr.context, it->nd.drop_prompt ? nullptr : &p});
    const double w = sched::loss_weight(f.s, sched::log_snr(f.s, it->t)) * -sched::dlogsnr_dt(f.s, it->t);
    backward_sum += static_cast<long double>(w * a * a * sq_dist(v_hat, v));
  }
  const double mean_a = forward_sum / 1e4, mean_b = static_cast<double>(backward_sum) / 1e4;
  EXPECT_LT(std::abs(mean_a - mean_b) / std::abs(mean_b), 1e-6);
}

TEST(Train, GradientsMatchFiniteDifferences) {
  Fixture f;
  for (Mode mode : {Mode::implicit, Mode::explicit_endpoint}) {
    const auto base = f.model(mode, true, 12, {8, 8});
    Rng rng(13);
    const data::EditTriple tr{rng.normal_vec(2), 2, rng.normal_vec(2)};
    // Both slots dropped so the null vectors receive gradient in implicit mode.
    const train::NoiseDraw draw{rng.normal_vec(2), true, true};
    const double t = 0.42, h = 1e-5;

    // Network input at this draw, rebuilt outside the loss.
    const auto [a, s] = sched::alpha_sigma(f.s, t);
    Vec noise = draw.eps;
    if (mode == Mode::explicit_endpoint) {
      const auto g = f.cond.explicit_endpoint(tr.context, tr.prompt_id);
      for (int k = 0; k < 2; ++k) noise[k] = g.mean()[k] + std::sqrt(g.var()[k]) * draw.eps[k];
    }
    Vec z(2);
    for (int k = 0; k < 2; ++k) z[k] = a * tr.target[k] + s * noise[k];
    train::CondInputs ci;
    if (mode == Mode::explicit_endpoint) ci.prompt = &f.table.at(tr.prompt_id).vec;
    const auto signs = [&](const train::Denoiser& m) {
      Vec in(m.input_dim());
      m.build_input(z, sched::log_snr(f.s, t), ci, in);
      const auto r = nn::forward(m.net, in);
      std::vector<bool> out;
      for (std::size_t l = 0; l + 1 < m.net.num_layers(); ++l)
        for (double v : r.tape.layers[l].pre) out.push_back(v > 0.0);
      return out;
    };

    const auto lg = train::training_loss(base, f.s, tr, t, draw, f.cond);
    const auto base_signs = signs(base);
    auto m = base;
    double worst = 0.0;
    std::size_t checked = 0;
    for (std::size_t i = 0; i < m.net.size(); ++i) {
      const double orig = m.net.values()[i];
      m.net.values()[i] = orig + h;
      const double lp = train::training_loss_value(m, f.s, tr, t, draw, f.cond);
      const bool kink_p = signs(m) != base_signs;
      m.net.values()[i] = orig - h;
      const double lm = train::training_loss_value(m, f.s, tr, t, draw, f.cond);
      const bool kink_m = signs(m) != base_signs;
      m.net.values()[i] = orig;
      if (kink_p || kink_m) continue;
      const double fd = (lp - lm) / (2 * h);
      worst = std::max(worst, std::abs(fd - lg.net_grad[i]) / std::max({std::abs(fd), std::abs(lg.net_grad[i]), 1e-4}));
      ++checked;
    }
    EXPECT_GT(checked, m.net.size() * 9 / 10) << train::to_string(mode);
    EXPECT_LT(worst, 1e-4) << train::to_string(mode);
    if (mode == Mode::implicit) {
      for (std::size_t k = 0; k < m.null_ctx.size(); ++k) {
        auto q = base;
        q.null_ctx[k] += h;
        const double lp = train::training_loss_value(q, f.s, tr, t, draw, f.cond);
        q.null_ctx[k] -= 2 * h;
        const double lm = train::training_loss_value(q, f.s, tr, t, draw, f.cond);
        EXPECT_NEAR(lg.null_ctx_grad[k], (lp - lm) / (2 * h), 1e-5 * (1 + std::abs(lg.null_ctx_grad[k])));
      }
    } else {
      for (double g : lg.null_ctx_grad) EXPECT_EQ(g, 0.0);
    }
  }
}

TEST(Train, FullDropoutMakesOutputConditionInvariant) {
  Fixture f;
  const auto m = f.model(Mode::implicit, false, 14);
  train::TrainConfig cfg;
  cfg.drop_ctx = cfg.drop_prompt = 1.0;
  Rng rng(15);
  for (int i = 0; i < 20; ++i) {
    const auto d = train::draw_noise(cfg, 2, rng);
    ASSERT_TRUE(d.drop_ctx && d.drop_prompt);
    const Vec x = rng.normal_vec(2);
    const data::EditTriple a{rng.normal_vec(2), 0, x}, b{rng.normal_vec(2), 3, x};
    EXPECT_EQ(train::training_loss_value(m, f.s, a, 0.5, d, f.cond),
              train::training_loss_value(m, f.s, b, 0.5, d, f.cond));
  }
}

TEST(Train, VTargetIdentitiesRecoverInputs) {
  sched::Schedule s;
  Rng rng(16);
  for (int i = 0; i < 1000; ++i) {
    const double t = rng.uniform(s.t_eps, 1 - s.t_eps);
    const auto [a, sg] = sched::alpha_sigma(s, t);
    const double x = rng.normal() * 3, n = rng.normal();
    const double z = a * x + sg * n, v = a * n - sg * x;
    EXPECT_NEAR(a * z - sg * v, x, 1e-10);
    EXPECT_NEAR(sg * z + a * v, n, 1e-10);
  }
}

TEST(Train, DeterministicGivenSeedAndMakesProgress) {
  Fixture f;
  const auto ds = data::gen_dataset(f.task, 2000, 17);
  train::TrainConfig cfg;
  cfg.steps = 400;
  cfg.batch = 32;
  cfg.hidden = {32, 32};
  cfg.seed = 18;
  const auto r1 = train::train_diffusion(ds, cfg, f.s, f.cond, {0.5, 1.0});
  const auto r2 = train::train_diffusion(ds, cfg, f.s, f.cond);
  EXPECT_EQ(r1.model, r2.model);
  ASSERT_EQ(r1.trace.size(), 400u);
  ASSERT_EQ(r1.snapshots.size(), 2u);
  EXPECT_EQ(r1.snapshots[1].second, r1.model);
  double first = 0.0, last = 0.0;
  for (std::size_t i = 0; i < 40; ++i) {
    first += r1.trace[i].loss;
    last += r1.trace[360 + i].loss;
  }
  EXPECT_LT(last, first);
}

TEST(Train, ExplicitTrainingMakesProgress) {
  Fixture f;
  const auto ds = data::gen_dataset(f.task, 2000, 19);
  train::TrainConfig cfg;
  cfg.mode = Mode::explicit_endpoint;
  cfg.extra_tokens = true;
  cfg.steps = 300;
  cfg.batch = 32;
  cfg.hidden = {32, 32};
  const auto r = train::train_diffusion(ds, cfg, f.s, f.cond);
  double first = 0.0, last = 0.0;
  for (std::size_t i = 0; i < 30; ++i) {
    first += r.trace[i].loss;
    last += r.trace[270 + i].loss;
  }
  EXPECT_LT(last, first);
  EXPECT_TRUE(r.model.null_ctx.empty() || r.model.mode == Mode::explicit_endpoint);
}

TEST(Train, DivergenceAborts) {
  Fixture f;
  std::vector<data::EditTriple> ds{{{0.0, 0.0}, 0, {1e5, -1e5}}};
  train::TrainConfig cfg;
  cfg.steps = 5;
  cfg.batch = 4;
  EXPECT_THROW(train::train_diffusion(ds, cfg, f.s, f.cond), NumericalError);
}

TEST(Train, RejectsBadConfigAndInputs) {
  Fixture f;
  train::TrainConfig cfg;
  cfg.drop_ctx = 1.5;
  EXPECT_THROW(cfg.validate(), ValidationError);
  cfg = {};
  EXPECT_THROW(train::train_diffusion({}, cfg, f.s, f.cond), ValidationError);
  cfg.mode = Mode::explicit_endpoint;
  train::Conditioner no_vae{&f.table, nullptr, 0.05};
  EXPECT_THROW(train::train_diffusion(data::gen_dataset(f.task, 10, 0), cfg, f.s, no_vae), ValidationError);
  EXPECT_THROW(train::mode_from_string("sideways"), ValidationError);
}

TEST(Train, CheckpointRoundTrip) {
  Fixture f;
  for (auto [mode, tokens] : std::vector<std::pair<Mode, bool>>{
           {Mode::implicit, false}, {Mode::explicit_endpoint, true}, {Mode::explicit_endpoint, false}}) {
    const auto m = f.model(mode, tokens, 20);
    EXPECT_EQ(train::denoiser_from_json(nlohmann::json::parse(train::to_json(m).dump())), m);
  }
  train::TrainConfig cfg;
  cfg.hidden = {7, 9};
  cfg.seed = 123;
  EXPECT_EQ(train::train_config_from_json(train::to_json(cfg)), cfg);
}

TEST(Train, InputLayoutFollowsMode) {
  Fixture f;
  EXPECT_EQ(f.model(Mode::implicit, false, 1).input_dim(), 2 + train::kLambdaFeatures + 2 + 16);
  EXPECT_EQ(f.model(Mode::explicit_endpoint, true, 1).input_dim(), 2 + train::kLambdaFeatures + 16);
  EXPECT_EQ(f.model(Mode::explicit_endpoint, false, 1).input_dim(), 2 + train::kLambdaFeatures);
}
