#pragma once

// Small dense MLP with reverse-mode gradients. Parameters live in one flat
// buffer (per layer: row-major weight out x in, then bias) so the optimizer and
// the gradient checker can treat them as a single vector.
//
// Layer l computes  out = act(W * (normalize ? standardize(x) : x) + b)
// where standardize subtracts the per-sample mean across features and divides
// by sqrt(var + kNormEps) (instance-style normalization of a vector).

#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "eclab/common.hpp"
#include "eclab/rng.hpp"

namespace eclab::nn {

enum class Activation { leaky_relu, identity };

inline constexpr double kLeakySlope = 0.01;
inline constexpr double kNormEps = 1e-5;

struct LayerSpec {
  std::size_t in;
  std::size_t out;
  Activation act;
  bool normalize;

  std::size_t param_count() const { return out * in + out; }
  bool operator==(const LayerSpec&) const = default;
};

class MlpParams {
 public:
  MlpParams() = default;
  /// Zero-initialized parameters for the given layer stack.
  explicit MlpParams(std::vector<LayerSpec> layers);

  /// He-style random init: hidden layers leaky ReLU, last layer identity.
  /// `normalize_from` is the first layer index that standardizes its input.
  /// The last layer is scaled by `out_scale` (0 gives a zero head).
  static MlpParams random(const std::vector<std::size_t>& widths, Rng& rng,
                          std::size_t normalize_from = 1, double out_scale = 1.0);

  const std::vector<LayerSpec>& layers() const { return layers_; }
  std::size_t num_layers() const { return layers_.size(); }
  std::size_t input_dim() const { return layers_.front().in; }
  std::size_t output_dim() const { return layers_.back().out; }
  std::size_t size() const { return values_.size(); }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  std::span<const double> weight(std::size_t l) const;
  std::span<const double> bias(std::size_t l) const;
  std::span<double> weight(std::size_t l);
  std::span<double> bias(std::size_t l);
  std::size_t offset(std::size_t l) const { return offsets_[l]; }

  /// Throws ValidationError on incompatible dims or non-finite entries.
  void validate() const;

  bool operator==(const MlpParams&) const = default;

 private:
  std::vector<LayerSpec> layers_;
  std::vector<std::size_t> offsets_;
  Vec values_;
};

struct LayerRecord {
  Vec input;
  Vec normed;  // empty unless the layer normalizes
  double inv_std = 1.0;
  Vec pre;  // pre-activation
};

/// Activations recorded during forward(); enough to replay the backward pass.
struct ForwardTape {
  std::vector<LayerRecord> layers;
  Vec output;
};

struct ForwardResult {
  Vec output;
  ForwardTape tape;
};

ForwardResult forward(const MlpParams& p, std::span<const double> input);

/// Allocation-reusing variant for inner loops; output is tape.output.
void forward_into(const MlpParams& p, std::span<const double> input, ForwardTape& tape);

/// Output only.
Vec predict(const MlpParams& p, std::span<const double> input);

struct Gradients {
  Vec params;  // same layout as MlpParams::values()
  Vec input;
};

/// Gradients of <output_grad, output> w.r.t. parameters and input.
Gradients backward(const MlpParams& p, const ForwardTape& tape, std::span<const double> output_grad);

/// Accumulating variant: param_grads += d/dparams, input_grad = d/dinput.
/// `scratch` is reused between calls.
void backward_accumulate(const MlpParams& p, const ForwardTape& tape,
                         std::span<const double> output_grad, std::span<double> param_grads,
                         std::span<double> input_grad, std::vector<Vec>& scratch);

class Adam {
 public:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;

  explicit Adam(std::size_t n) : m_(n, 0.0), v_(n, 0.0) {}

  /// In-place update. Throws NumericalError on non-finite gradients.
  void step(std::span<double> params, std::span<const double> grads, double lr);

  std::size_t steps_taken() const { return t_; }

 private:
  Vec m_;
  Vec v_;
  std::size_t t_ = 0;
};

/// Adam step returning a new snapshot; `p` is left untouched.
MlpParams sgd_step(const MlpParams& p, std::span<const double> grads, double lr, Adam& state);

nlohmann::json to_json(const MlpParams& p);
MlpParams mlp_from_json(const nlohmann::json& j);

}  // namespace eclab::nn
