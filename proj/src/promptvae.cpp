#include "eclab/promptvae.hpp"

#include <algorithm>
#include <cmath>

#include "eclab/kernels.hpp"

namespace eclab::promptvae {

PromptTable::PromptTable(std::vector<PromptEmbedding> rows) : rows_(std::move(rows)) {
  for (const auto& r : rows_) {
    require(!r.vec.empty(), "PromptTable: empty embedding");
    require_same_dim(r.vec.size(), rows_.front().vec.size(), "PromptTable embedding");
    double n2 = 0.0;
    for (double v : r.vec) n2 += v * v;
    require(std::abs(std::sqrt(n2) - 1.0) < 1e-9, "PromptTable: embeddings must be unit norm");
  }
}

PromptTable PromptTable::random(const std::vector<int>& ids, std::size_t embed_dim, std::uint64_t seed) {
  require(embed_dim >= 1, "PromptTable: embed_dim must be positive");
  Rng rng(seed);
  std::vector<PromptEmbedding> rows;
  for (int id : ids) {
    Vec v = rng.normal_vec(embed_dim);
    double n = 0.0;
    for (double x : v) n += x * x;
    n = std::sqrt(n);
    for (auto& x : v) x /= n;
    rows.push_back({id, std::move(v)});
  }
  return PromptTable(std::move(rows));
}

const PromptEmbedding& PromptTable::at(int prompt_id) const {
  for (const auto& r : rows_)
    if (r.prompt_id == prompt_id) return r;
  throw ValidationError("PromptTable: unknown prompt id " + std::to_string(prompt_id));
}

PromptVae PromptVae::init(std::size_t embed_dim, std::size_t hidden, std::size_t data_dim, Rng& rng) {
  PromptVae v;
  v.data_dim = data_dim;
  v.embed_dim = embed_dim;
  // Head layer standardizes the trunk output (instance-style norm) and starts at zero.
  v.encoder = nn::MlpParams::random({embed_dim, hidden, 2 * data_dim}, rng, 1, 0.0);
  v.decoder = nn::MlpParams::random({data_dim, hidden, embed_dim}, rng, 1, 1.0);
  return v;
}

namespace {

struct Posterior {
  Vec mean;
  Vec logvar;
  Vec var;
  std::vector<int> clamped;  // -1 below kLogVarMin, +1 above kLogVarMax, else 0
};

Posterior posterior_from_head(std::span<const double> head, std::size_t d) {
  Posterior p{Vec(d), Vec(d), Vec(d), std::vector<int>(d)};
  for (std::size_t k = 0; k < d; ++k) {
    p.mean[k] = head[k];
    const double raw = head[d + k];
    p.logvar[k] = std::clamp(raw, kLogVarMin, kLogVarMax);
    p.clamped[k] = raw < kLogVarMin ? -1 : (raw > kLogVarMax ? 1 : 0);
    p.var[k] = std::max(std::exp(p.logvar[k]), endpoint::kVarFloor);
  }
  return p;
}

constexpr std::size_t kProbeSamples = 32;

VaeLossPoint probe_objective(const PromptVae& v, const std::vector<PromptEmbedding>& prompts,
                             const std::vector<Vec>& probe_eps, double beta_kl, std::size_t step) {
  const std::size_t d = v.data_dim;
  double rec = 0.0, kl = 0.0;
  Vec latent(d);
  for (std::size_t pi = 0; pi < prompts.size(); ++pi) {
    const auto& p = prompts[pi];
    const Posterior post = posterior_from_head(nn::predict(v.encoder, p.vec), d);
    kl += kl_to_standard(post.mean, post.var);
    for (std::size_t j = 0; j < kProbeSamples; ++j) {
      const Vec& eps = probe_eps[pi * kProbeSamples + j];
      for (std::size_t k = 0; k < d; ++k) latent[k] = post.mean[k] + std::sqrt(post.var[k]) * eps[k];
      const Vec out = nn::predict(v.decoder, latent);
      for (std::size_t i = 0; i < out.size(); ++i) rec += (out[i] - p.vec[i]) * (out[i] - p.vec[i]);
    }
  }
  rec /= static_cast<double>(prompts.size() * kProbeSamples);
  kl /= static_cast<double>(prompts.size());
  return {step, rec + beta_kl * kl, rec, kl};
}

}  // namespace

endpoint::DiagGaussian encode_prompt(const PromptVae& v, const PromptEmbedding& p) {
  const Vec head = nn::predict(v.encoder, p.vec);
  Posterior post = posterior_from_head(head, v.data_dim);
  return endpoint::DiagGaussian(std::move(post.mean), std::move(post.var));
}

double kl_to_standard(std::span<const double> mean, std::span<const double> var) {
  require_same_dim(mean.size(), var.size(), "kl_to_standard");
  double kl = 0.0;
  for (std::size_t k = 0; k < mean.size(); ++k)
    kl += 0.5 * (var[k] + mean[k] * mean[k] - 1.0 - std::log(var[k]));
  return kl;
}

VaeTrainResult train_prompt_vae(const std::vector<PromptEmbedding>& prompts, std::size_t data_dim,
                                const VaeTrainConfig& cfg) {
  require(prompts.size() >= 2, "train_prompt_vae: need at least 2 prompts");
  require(cfg.steps >= 1 && cfg.samples_per_prompt >= 1, "train_prompt_vae: steps and samples must be positive");
  const std::size_t E = prompts.front().vec.size();
  Rng rng(cfg.seed);
  VaeTrainResult res{PromptVae::init(E, cfg.hidden, data_dim, rng), {}};
  PromptVae& vae = res.vae;
  nn::Adam enc_opt(vae.encoder.size()), dec_opt(vae.decoder.size());

  const std::size_t d = data_dim;
  const double inv_b = 1.0 / static_cast<double>(prompts.size() * cfg.samples_per_prompt);
  Vec enc_grad(vae.encoder.size()), dec_grad(vae.decoder.size());
  Vec eps(d), head_grad(2 * d), latent(d), latent_grad(d), rec_grad(E), enc_in_grad(E);
  nn::ForwardTape enc_tape, dec_tape;
  std::vector<Vec> scratch;

  // The recorded curve is the objective under one fixed set of noise draws,
  // so successive entries differ only through the parameters.
  Rng probe_rng = stream(cfg.seed, "vae-probe");
  std::vector<Vec> probe_eps;
  for (std::size_t i = 0; i < prompts.size() * kProbeSamples; ++i) probe_eps.push_back(probe_rng.normal_vec(d));

  for (std::size_t step = 0; step < cfg.steps; ++step) {
    std::fill(enc_grad.begin(), enc_grad.end(), 0.0);
    std::fill(dec_grad.begin(), dec_grad.end(), 0.0);
    double rec_sum = 0.0, kl_sum = 0.0;
    for (const auto& p : prompts) {
      nn::forward_into(vae.encoder, p.vec, enc_tape);
      const Posterior post = posterior_from_head(enc_tape.output, d);
      const double kl = kl_to_standard(post.mean, post.var);
      std::fill(head_grad.begin(), head_grad.end(), 0.0);
      for (std::size_t s = 0; s < cfg.samples_per_prompt; ++s) {
        // Antithetic pairs: odd samples reuse the previous draw negated.
        if (s % 2 == 0) eps = rng.normal_vec(d);
        else
          for (auto& e : eps) e = -e;
        for (std::size_t k = 0; k < d; ++k) latent[k] = post.mean[k] + std::sqrt(post.var[k]) * eps[k];
        nn::forward_into(vae.decoder, latent, dec_tape);
        double rec = 0.0;
        for (std::size_t i = 0; i < E; ++i) {
          const double diff = dec_tape.output[i] - p.vec[i];
          rec += diff * diff;
          rec_grad[i] = 2.0 * diff * inv_b;
        }
        rec_sum += rec;
        kl_sum += kl;
        nn::backward_accumulate(vae.decoder, dec_tape, rec_grad, dec_grad, latent_grad, scratch);
        for (std::size_t k = 0; k < d; ++k) {
          head_grad[k] += latent_grad[k] + cfg.beta_kl * inv_b * post.mean[k];
          const double g = latent_grad[k] * eps[k] * 0.5 * std::sqrt(post.var[k]) +
                           cfg.beta_kl * inv_b * 0.5 * (post.var[k] - 1.0);
          // At a clamp bound, only let through steps that head back inside.
          if (post.clamped[k] == 0 || (post.clamped[k] > 0) == (g > 0.0)) head_grad[d + k] += g;
        }
      }
      nn::backward_accumulate(vae.encoder, enc_tape, head_grad, enc_grad, enc_in_grad, scratch);
    }
    const double loss = (rec_sum + cfg.beta_kl * kl_sum) * inv_b;
    if (!std::isfinite(loss)) throw NumericalError("train_prompt_vae: non-finite loss at step " + std::to_string(step));
    res.trace.push_back(probe_objective(vae, prompts, probe_eps, cfg.beta_kl, step));
    // Cosine decay to zero over the run.
    const double lr = 0.5 * cfg.lr * (1.0 + std::cos(M_PI * static_cast<double>(step) / static_cast<double>(cfg.steps)));
    enc_opt.step(vae.encoder.values(), enc_grad, lr);
    dec_opt.step(vae.decoder.values(), dec_grad, lr);
  }
  return res;
}

double mean_decode_error(const PromptVae& v, const std::vector<PromptEmbedding>& prompts) {
  double total = 0.0;
  for (const auto& p : prompts) {
    const auto g = encode_prompt(v, p);
    const Vec rec = nn::predict(v.decoder, g.mean());
    for (std::size_t i = 0; i < rec.size(); ++i) total += (rec[i] - p.vec[i]) * (rec[i] - p.vec[i]);
  }
  return total / static_cast<double>(prompts.size());
}

Tensor3 pixel_shuffle(const Tensor3& in, std::size_t r) {
  require(r >= 1 && in.c % (r * r) == 0, "pixel_shuffle: channels must be divisible by r^2");
  Tensor3 out{in.c / (r * r), in.h * r, in.w * r, Vec(in.data.size())};
  for (std::size_t c = 0; c < out.c; ++c)
    for (std::size_t y = 0; y < in.h; ++y)
      for (std::size_t x = 0; x < in.w; ++x)
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < r; ++j) out.at(c, y * r + i, x * r + j) = in.at(c * r * r + i * r + j, y, x);
  return out;
}

Tensor3 pixel_unshuffle(const Tensor3& in, std::size_t r) {
  require(r >= 1 && in.h % r == 0 && in.w % r == 0, "pixel_unshuffle: spatial dims must be divisible by r");
  Tensor3 out{in.c * r * r, in.h / r, in.w / r, Vec(in.data.size())};
  for (std::size_t c = 0; c < in.c; ++c)
    for (std::size_t y = 0; y < out.h; ++y)
      for (std::size_t x = 0; x < out.w; ++x)
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < r; ++j) out.at(c * r * r + i * r + j, y, x) = in.at(c, y * r + i, x * r + j);
  return out;
}

bool ShapeReport::all_pass() const {
  return !stages.empty() && std::all_of(stages.begin(), stages.end(), [](const StageCheck& s) { return s.pass; });
}

namespace {

void leaky_and_norm(std::span<double> v) {
  for (auto& x : v) x = x > 0.0 ? x : nn::kLeakySlope * x;
  double mean = 0.0, var = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  for (double x : v) var += (x - mean) * (x - mean);
  var /= static_cast<double>(v.size());
  const double inv = 1.0 / std::sqrt(var + nn::kNormEps);
  for (auto& x : v) x = (x - mean) * inv;
}

// LeakyReLU then per-channel instance normalization over the spatial extent.
void leaky_and_instance_norm(Tensor3& t) {
  for (std::size_t c = 0; c < t.c; ++c)
    leaky_and_norm(std::span<double>(t.data).subspan(c * t.h * t.w, t.h * t.w));
}

// 1x1 convolution: out[o] = sum_i W[o][i] * in[i] + b[o], per pixel.
Tensor3 conv1x1(const Tensor3& in, std::size_t out_c, Rng& rng) {
  Vec w = rng.normal_vec(out_c * in.c);
  Vec b = rng.normal_vec(out_c);
  Tensor3 out{out_c, in.h, in.w, Vec(out_c * in.h * in.w, 0.0)};
  const std::size_t hw = in.h * in.w;
  for (std::size_t o = 0; o < out_c; ++o)
    for (std::size_t p = 0; p < hw; ++p) {
      double acc = b[o];
      for (std::size_t i = 0; i < in.c; ++i) acc += w[o * in.c + i] * in.data[i * hw + p];
      out.data[o * hw + p] = acc;
    }
  return out;
}

Vec linear(std::span<const double> in, std::size_t out_dim, Rng& rng) {
  Vec w = rng.normal_vec(out_dim * in.size());
  const double scale = 1.0 / std::sqrt(static_cast<double>(in.size()));
  for (auto& x : w) x *= scale;
  Vec out(out_dim);
  kernels::active().gemv({w.data(), out_dim, in.size()}, in.data(), nullptr, out.data());
  return out;
}

std::string shape_str(const Tensor3& t) {
  return std::to_string(t.c) + "x" + std::to_string(t.h) + "x" + std::to_string(t.w);
}

}  // namespace

ShapeReport shape_check_image_mode(std::uint64_t seed) {
  constexpr std::size_t kClip = 768, kProj = 1024, kSide = 32, kWide = 16, kLatentC = 4, kLatentSide = 64;
  constexpr std::size_t kLatent = kLatentC * kLatentSide * kLatentSide;
  Rng rng(seed);
  ShapeReport rep;
  auto check = [&](std::string stage, std::string expected, std::size_t want, std::size_t got) {
    rep.stages.push_back({std::move(stage), std::move(expected), want, got, want == got});
  };

  const Vec pooled = rng.normal_vec(kClip);
  check("input", "768", kClip, pooled.size());

  Vec proj = linear(pooled, kProj, rng);
  leaky_and_norm(proj);
  check("linear", "1024", kProj, proj.size());

  Tensor3 img{1, kSide, kSide, proj};
  check("reshape", "1x32x32", kSide * kSide, img.c * img.h * img.w);

  Tensor3 wide = conv1x1(img, kWide, rng);
  leaky_and_instance_norm(wide);
  check("conv1x1 expand", "16x32x32", kWide * kSide * kSide, wide.data.size());

  Tensor3 up = pixel_shuffle(wide, 2);
  check("pixel_shuffle", "4x64x64 (" + shape_str(up) + ")", kLatent,
        up.c == kLatentC && up.h == kLatentSide && up.w == kLatentSide ? up.data.size() : 0);

  const Tensor3 mean = conv1x1(up, kLatentC, rng);
  const Tensor3 logvar = conv1x1(up, kLatentC, rng);
  check("mean head", "4x64x64", kLatent, mean.data.size());
  check("log-variance head", "4x64x64", kLatent, logvar.data.size());

  // Decoder mirrors the encoder.
  Tensor3 down = pixel_unshuffle(mean, 2);
  check("decoder pixel_unshuffle", "16x32x32", kWide * kSide * kSide, down.data.size());
  Tensor3 narrow = conv1x1(down, 1, rng);
  leaky_and_instance_norm(narrow);
  check("decoder conv1x1 reduce", "1x32x32", kSide * kSide, narrow.data.size());
  const Vec back = linear(narrow.data, kClip, rng);
  check("decoder linear", "768", kClip, back.size());
  return rep;
}

nlohmann::json to_json(const PromptVae& v, const PromptTable& table) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : table.rows()) rows.push_back({{"prompt_id", r.prompt_id}, {"vec", r.vec}});
  return {{"format", "eclab-prompt-vae-v1"},
          {"data_dim", v.data_dim},
          {"embed_dim", v.embed_dim},
          {"encoder", nn::to_json(v.encoder)},
          {"decoder", nn::to_json(v.decoder)},
          {"prompt_table", rows}};
}

PromptVae vae_from_json(const nlohmann::json& j) {
  try {
    require(j.at("format").get<std::string>() == "eclab-prompt-vae-v1", "checkpoint: not a prompt VAE");
    PromptVae v;
    v.data_dim = j.at("data_dim").get<std::size_t>();
    v.embed_dim = j.at("embed_dim").get<std::size_t>();
    v.encoder = nn::mlp_from_json(j.at("encoder"));
    v.decoder = nn::mlp_from_json(j.at("decoder"));
    require(v.encoder.input_dim() == v.embed_dim && v.encoder.output_dim() == 2 * v.data_dim,
            "checkpoint: prompt VAE encoder shape mismatch");
    return v;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("checkpoint: malformed prompt VAE: ") + e.what());
  }
}

PromptTable table_from_json(const nlohmann::json& j) {
  try {
    std::vector<PromptEmbedding> rows;
    for (const auto& r : j.at("prompt_table")) rows.push_back({r.at("prompt_id").get<int>(), r.at("vec").get<Vec>()});
    return PromptTable(std::move(rows));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("checkpoint: malformed prompt table: ") + e.what());
  }
}

}  // namespace eclab::promptvae
