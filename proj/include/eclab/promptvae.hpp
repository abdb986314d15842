#pragma once

// Prompt VAE: maps a frozen prompt embedding to a diagonal Gaussian in data
// space. Only the encoder is consumed downstream; the decoder exists for the
// reconstruction loss.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "eclab/common.hpp"
#include "eclab/endpoint.hpp"
#include "eclab/nn.hpp"

namespace eclab::promptvae {

inline constexpr double kLogVarMin = -10.0;
inline constexpr double kLogVarMax = 4.0;

struct PromptEmbedding {
  int prompt_id;
  Vec vec;  // unit norm
};

/// Frozen lookup table prompt id -> embedding.
class PromptTable {
 public:
  PromptTable() = default;
  explicit PromptTable(std::vector<PromptEmbedding> rows);

  /// Seeded random unit vectors of dimension `embed_dim`, one per id.
  static PromptTable random(const std::vector<int>& ids, std::size_t embed_dim, std::uint64_t seed);

  const PromptEmbedding& at(int prompt_id) const;
  const std::vector<PromptEmbedding>& rows() const { return rows_; }
  std::size_t embed_dim() const { return rows_.empty() ? 0 : rows_.front().vec.size(); }

 private:
  std::vector<PromptEmbedding> rows_;
};

struct PromptVae {
  nn::MlpParams encoder;  // E -> hidden -> 2d (mean head, log-variance head)
  nn::MlpParams decoder;  // d -> hidden -> E
  std::size_t data_dim = 0;
  std::size_t embed_dim = 0;

  /// Random trunk, zeroed heads (so an untrained encoder yields N(0, I)).
  static PromptVae init(std::size_t embed_dim, std::size_t hidden, std::size_t data_dim, Rng& rng);
};

endpoint::DiagGaussian encode_prompt(const PromptVae& v, const PromptEmbedding& p);

/// KL(N(mean, var) || N(0, I)) summed over coordinates.
double kl_to_standard(std::span<const double> mean, std::span<const double> var);

struct VaeTrainConfig {
  std::size_t hidden = 64;
  std::size_t steps = 2000;
  std::size_t samples_per_prompt = 32;
  double lr = 2e-3;  // peak; cosine-decayed to zero
  double beta_kl = 1e-2;
  std::uint64_t seed = 0;
};

/// One entry per step: the objective at the current parameters, evaluated on a
/// fixed set of latent noise draws.
struct VaeLossPoint {
  std::size_t step;
  double loss;
  double reconstruction;
  double kl;
};

struct VaeTrainResult {
  PromptVae vae;
  std::vector<VaeLossPoint> trace;
};

VaeTrainResult train_prompt_vae(const std::vector<PromptEmbedding>& prompts, std::size_t data_dim,
                                const VaeTrainConfig& cfg);

/// Mean squared decode error of decode(encode(p).mean) for each prompt.
double mean_decode_error(const PromptVae& v, const std::vector<PromptEmbedding>& prompts);

// --- image-scale shape pipeline (random parameters, no training) ---

struct Tensor3 {
  std::size_t c = 0, h = 0, w = 0;
  Vec data;  // index (ci * h + y) * w + x
  double& at(std::size_t ci, std::size_t y, std::size_t x) { return data[(ci * h + y) * w + x]; }
  double at(std::size_t ci, std::size_t y, std::size_t x) const { return data[(ci * h + y) * w + x]; }
};

/// Sub-pixel rearrangement: (C*r*r, H, W) -> (C, H*r, W*r).
Tensor3 pixel_shuffle(const Tensor3& in, std::size_t r);
/// Inverse of pixel_shuffle.
Tensor3 pixel_unshuffle(const Tensor3& in, std::size_t r);

struct StageCheck {
  std::string stage;
  std::string expected;
  std::size_t expected_elems;
  std::size_t actual_elems;
  bool pass;
};

struct ShapeReport {
  std::vector<StageCheck> stages;
  bool all_pass() const;
};

/// Builds the 768 -> 1024 -> 1x32x32 -> 16x32x32 -> 4x64x64 encoder (and the
/// mirrored decoder) with random weights, runs one input through it, and
/// checks every intermediate size.
ShapeReport shape_check_image_mode(std::uint64_t seed = 0);

nlohmann::json to_json(const PromptVae& v, const PromptTable& table);
PromptVae vae_from_json(const nlohmann::json& j);
PromptTable table_from_json(const nlohmann::json& j);

}  // namespace eclab::promptvae
