#include "eclab/nn.hpp"

#include <cmath>

#include "eclab/kernels.hpp"

namespace eclab::nn {

MlpParams::MlpParams(std::vector<LayerSpec> layers) : layers_(std::move(layers)) {
  require(!layers_.empty(), "MlpParams: no layers");
  std::size_t total = 0;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    require(layers_[l].in >= 1 && layers_[l].out >= 1, "MlpParams: zero-width layer");
    if (l > 0) require_same_dim(layers_[l - 1].out, layers_[l].in, "MlpParams layer chain");
    offsets_.push_back(total);
    total += layers_[l].param_count();
  }
  values_.assign(total, 0.0);
}

MlpParams MlpParams::random(const std::vector<std::size_t>& widths, Rng& rng,
                            std::size_t normalize_from, double out_scale) {
  require(widths.size() >= 2, "MlpParams::random: need at least input and output widths");
  std::vector<LayerSpec> specs;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const bool last = l + 2 == widths.size();
    specs.push_back({widths[l], widths[l + 1], last ? Activation::identity : Activation::leaky_relu,
                     l >= normalize_from});
  }
  MlpParams p(std::move(specs));
  for (std::size_t l = 0; l < p.num_layers(); ++l) {
    const double scale = std::sqrt(2.0 / static_cast<double>(p.layers_[l].in)) *
                         (l + 1 == p.num_layers() ? out_scale : 1.0);
    for (auto& w : p.weight(l)) w = scale * rng.normal();
  }
  return p;
}

std::span<const double> MlpParams::weight(std::size_t l) const {
  return std::span<const double>(values_).subspan(offsets_[l], layers_[l].out * layers_[l].in);
}
std::span<const double> MlpParams::bias(std::size_t l) const {
  return std::span<const double>(values_).subspan(offsets_[l] + layers_[l].out * layers_[l].in,
                                                  layers_[l].out);
}
std::span<double> MlpParams::weight(std::size_t l) {
  return std::span<double>(values_).subspan(offsets_[l], layers_[l].out * layers_[l].in);
}
std::span<double> MlpParams::bias(std::size_t l) {
  return std::span<double>(values_).subspan(offsets_[l] + layers_[l].out * layers_[l].in, layers_[l].out);
}

void MlpParams::validate() const {
  require(!layers_.empty(), "MlpParams: no layers");
  for (std::size_t l = 1; l < layers_.size(); ++l)
    require_same_dim(layers_[l - 1].out, layers_[l].in, "MlpParams layer chain");
  require(all_finite(values_), "MlpParams: non-finite parameter");
}

void forward_into(const MlpParams& p, std::span<const double> input, ForwardTape& tape) {
  require_same_dim(input.size(), p.input_dim(), "nn::forward input");
  if (!all_finite(input)) throw ValidationError("nn::forward: non-finite input");
  const auto& kt = kernels::active();
  tape.layers.resize(p.num_layers());
  std::span<const double> x = input;
  for (std::size_t l = 0; l < p.num_layers(); ++l) {
    const LayerSpec& spec = p.layers()[l];
    LayerRecord& rec = tape.layers[l];
    rec.input.assign(x.begin(), x.end());
    const double* eff = rec.input.data();
    if (spec.normalize) {
      const double n = static_cast<double>(spec.in);
      double mean = 0.0;
      for (double v : rec.input) mean += v;
      mean /= n;
      double var = 0.0;
      for (double v : rec.input) var += (v - mean) * (v - mean);
      var /= n;
      rec.inv_std = 1.0 / std::sqrt(var + kNormEps);
      rec.normed.resize(spec.in);
      for (std::size_t i = 0; i < spec.in; ++i) rec.normed[i] = (rec.input[i] - mean) * rec.inv_std;
      eff = rec.normed.data();
    } else {
      rec.normed.clear();
      rec.inv_std = 1.0;
    }
    rec.pre.resize(spec.out);
    kt.gemv({p.weight(l).data(), spec.out, spec.in}, eff, p.bias(l).data(), rec.pre.data());
    // The next layer copies its input out of tape.output before it is overwritten.
    Vec& out = tape.output;
    out.resize(spec.out);
    if (spec.act == Activation::leaky_relu) {
      for (std::size_t o = 0; o < spec.out; ++o) out[o] = rec.pre[o] > 0.0 ? rec.pre[o] : kLeakySlope * rec.pre[o];
    } else {
      std::copy(rec.pre.begin(), rec.pre.end(), out.begin());
    }
    x = out;
  }
}

ForwardResult forward(const MlpParams& p, std::span<const double> input) {
  ForwardResult r;
  forward_into(p, input, r.tape);
  r.output = r.tape.output;
  return r;
}

Vec predict(const MlpParams& p, std::span<const double> input) {
  ForwardTape tape;
  forward_into(p, input, tape);
  return std::move(tape.output);
}

void backward_accumulate(const MlpParams& p, const ForwardTape& tape,
                         std::span<const double> output_grad, std::span<double> param_grads,
                         std::span<double> input_grad, std::vector<Vec>& scratch) {
  if (tape.layers.size() != p.num_layers() || tape.output.size() != p.output_dim())
    throw ValidationError("nn::backward: tape does not match parameters");
  for (std::size_t l = 0; l < p.num_layers(); ++l)
    if (tape.layers[l].input.size() != p.layers()[l].in || tape.layers[l].pre.size() != p.layers()[l].out)
      throw ValidationError("nn::backward: tape does not match parameters");
  require_same_dim(output_grad.size(), p.output_dim(), "nn::backward output_grad");
  require_same_dim(param_grads.size(), p.size(), "nn::backward param_grads");
  require_same_dim(input_grad.size(), p.input_dim(), "nn::backward input_grad");

  const auto& kt = kernels::active();
  scratch.resize(2);
  Vec& g = scratch[0];
  Vec& gin = scratch[1];
  g.assign(output_grad.begin(), output_grad.end());

  for (std::size_t li = p.num_layers(); li-- > 0;) {
    const LayerSpec& spec = p.layers()[li];
    const LayerRecord& rec = tape.layers[li];
    if (spec.act == Activation::leaky_relu)
      for (std::size_t o = 0; o < spec.out; ++o)
        if (rec.pre[o] <= 0.0) g[o] *= kLeakySlope;

    const double* eff = spec.normalize ? rec.normed.data() : rec.input.data();
    const std::size_t off = p.offset(li);
    kt.ger({param_grads.data() + off, spec.out, spec.in}, g.data(), eff);
    double* db = param_grads.data() + off + spec.out * spec.in;
    for (std::size_t o = 0; o < spec.out; ++o) db[o] += g[o];

    gin.assign(spec.in, 0.0);
    kt.gemv_t({p.weight(li).data(), spec.out, spec.in}, g.data(), gin.data());
    if (spec.normalize) {
      const double n = static_cast<double>(spec.in);
      double mg = 0.0, mgx = 0.0;
      for (std::size_t i = 0; i < spec.in; ++i) {
        mg += gin[i];
        mgx += gin[i] * rec.normed[i];
      }
      mg /= n;
      mgx /= n;
      for (std::size_t i = 0; i < spec.in; ++i) gin[i] = rec.inv_std * (gin[i] - mg - rec.normed[i] * mgx);
    }
    std::swap(g, gin);
  }
  std::copy(g.begin(), g.end(), input_grad.begin());
}

Gradients backward(const MlpParams& p, const ForwardTape& tape, std::span<const double> output_grad) {
  Gradients grads{Vec(p.size(), 0.0), Vec(p.input_dim(), 0.0)};
  std::vector<Vec> scratch;
  backward_accumulate(p, tape, output_grad, grads.params, grads.input, scratch);
  return grads;
}

void Adam::step(std::span<double> params, std::span<const double> grads, double lr) {
  require_same_dim(params.size(), m_.size(), "Adam params");
  require_same_dim(grads.size(), m_.size(), "Adam grads");
  if (!all_finite(grads)) throw NumericalError("Adam: non-finite gradient at step " + std::to_string(t_ + 1));
  ++t_;
  const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = kBeta1 * m_[i] + (1.0 - kBeta1) * grads[i];
    v_[i] = kBeta2 * v_[i] + (1.0 - kBeta2) * grads[i] * grads[i];
    params[i] -= lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + kEps);
  }
}

MlpParams sgd_step(const MlpParams& p, std::span<const double> grads, double lr, Adam& state) {
  MlpParams next = p;
  state.step(next.values(), grads, lr);
  return next;
}

namespace {
const char* act_name(Activation a) { return a == Activation::leaky_relu ? "leaky_relu" : "identity"; }
Activation act_from(const std::string& s) {
  if (s == "leaky_relu") return Activation::leaky_relu;
  if (s == "identity") return Activation::identity;
  throw ValidationError("unknown activation '" + s + "'");
}
}  // namespace

nlohmann::json to_json(const MlpParams& p) {
  nlohmann::json layers = nlohmann::json::array();
  for (std::size_t l = 0; l < p.num_layers(); ++l) {
    const auto& s = p.layers()[l];
    auto w = p.weight(l);
    auto b = p.bias(l);
    layers.push_back({{"in", s.in},
                      {"out", s.out},
                      {"activation", act_name(s.act)},
                      {"normalize", s.normalize},
                      {"weight", std::vector<double>(w.begin(), w.end())},
                      {"bias", std::vector<double>(b.begin(), b.end())}});
  }
  return {{"format", "eclab-mlp-v1"}, {"layers", std::move(layers)}};
}

MlpParams mlp_from_json(const nlohmann::json& j) {
  try {
    require(j.at("format").get<std::string>() == "eclab-mlp-v1", "checkpoint: unknown MLP format");
    std::vector<LayerSpec> specs;
    for (const auto& L : j.at("layers"))
      specs.push_back({L.at("in").get<std::size_t>(), L.at("out").get<std::size_t>(),
                       act_from(L.at("activation").get<std::string>()), L.at("normalize").get<bool>()});
    MlpParams p(std::move(specs));
    std::size_t l = 0;
    for (const auto& L : j.at("layers")) {
      auto w = L.at("weight").get<std::vector<double>>();
      auto b = L.at("bias").get<std::vector<double>>();
      require_same_dim(w.size(), p.weight(l).size(), "checkpoint weight");
      require_same_dim(b.size(), p.bias(l).size(), "checkpoint bias");
      std::copy(w.begin(), w.end(), p.weight(l).begin());
      std::copy(b.begin(), b.end(), p.bias(l).begin());
      ++l;
    }
    p.validate();
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("checkpoint: malformed MLP: ") + e.what());
  }
}

}  // namespace eclab::nn
