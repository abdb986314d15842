#include <gtest/gtest.h>

#include <cmath>

#include "eclab/promptvae.hpp"

using namespace eclab;
using namespace eclab::promptvae;

namespace {

std::vector<PromptEmbedding> task_prompts(std::size_t count, std::uint64_t seed) {
  std::vector<int> ids;
  for (std::size_t i = 0; i < count; ++i) ids.push_back(static_cast<int>(i));
  return PromptTable::random(ids, 16, seed).rows();
}

const VaeTrainResult& default_run() {
  static const VaeTrainResult r = [] {
    VaeTrainConfig cfg;
    cfg.seed = 17;
    return train_prompt_vae(task_prompts(4, 3), 2, cfg);
  }();
  return r;
}

}  // namespace

TEST(PromptVae, TableRowsAreUnitNorm) {
  const auto t = PromptTable::random({0, 1, 2, 5}, 16, 4);
  EXPECT_EQ(t.embed_dim(), 16u);
  for (const auto& r : t.rows()) {
    double n = 0.0;
    for (double v : r.vec) n += v * v;
    EXPECT_NEAR(std::sqrt(n), 1.0, 1e-9);
  }
  EXPECT_EQ(t.at(5).prompt_id, 5);
  EXPECT_THROW(t.at(3), ValidationError);
}

TEST(PromptVae, ZeroHeadsEncodeToStandardNormal) {
  Rng rng(1);
  const auto vae = PromptVae::init(16, 64, 2, rng);
  const auto prompts = task_prompts(3, 2);
  for (const auto& p : prompts) {
    const auto g = encode_prompt(vae, p);
    EXPECT_EQ(g.mean(), Vec({0.0, 0.0}));
    EXPECT_EQ(g.var(), Vec({1.0, 1.0}));
  }
}

TEST(PromptVae, EncodingIsDeterministic) {
  const auto& r = default_run();
  const auto p = task_prompts(4, 3)[2];
  const auto a = encode_prompt(r.vae, p), b = encode_prompt(r.vae, p);
  EXPECT_EQ(a.mean(), b.mean());
  EXPECT_EQ(a.var(), b.var());
}

TEST(PromptVae, KlClosedForm) {
  EXPECT_DOUBLE_EQ(kl_to_standard(Vec{0.0, 0.0}, Vec{1.0, 1.0}), 0.0);
  EXPECT_DOUBLE_EQ(kl_to_standard(Vec{1.0}, Vec{1.0}), 0.5);
  const double m = -0.7, v = 0.3;
  EXPECT_NEAR(kl_to_standard(Vec{m, m}, Vec{v, v}), 2.0 * 0.5 * (v + m * m - 1.0 - std::log(v)), 1e-15);
}

TEST(PromptVae, PlainAutoencoderReconstructsTwoPrompts) {
  VaeTrainConfig cfg;
  cfg.beta_kl = 0.0;
  cfg.steps = 2000;
  cfg.seed = 5;
  const auto prompts = task_prompts(2, 6);
  const auto r = train_prompt_vae(prompts, 2, cfg);
  ASSERT_EQ(r.trace.size(), 2000u);
  EXPECT_LT(r.trace.back().reconstruction, 1e-2);
  EXPECT_EQ(r.vae.encoder.num_layers(), 2u);
}

TEST(PromptVae, RequiresTwoPrompts) {
  EXPECT_THROW(train_prompt_vae(task_prompts(1, 0), 2, VaeTrainConfig{}), ValidationError);
}

TEST(PromptVae, TrainedLatentMeansAreSeparated) {
  const auto& r = default_run();
  const auto prompts = task_prompts(4, 3);
  double min_dist = 1e300;
  for (std::size_t i = 0; i < prompts.size(); ++i)
    for (std::size_t j = 0; j < i; ++j) {
      const auto a = encode_prompt(r.vae, prompts[i]), b = encode_prompt(r.vae, prompts[j]);
      min_dist = std::min(min_dist, std::hypot(a.mean()[0] - b.mean()[0], a.mean()[1] - b.mean()[1]));
    }
  EXPECT_GT(min_dist, mean_decode_error(r.vae, prompts));
}

TEST(PromptVae, ReconstructionEndsBelowStart) {
  const auto& tr = default_run().trace;
  ASSERT_EQ(tr.size(), 2000u);
  EXPECT_LT(tr.back().reconstruction, tr.front().reconstruction);
  for (const auto& p : tr) EXPECT_NEAR(p.loss, p.reconstruction + 1e-2 * p.kl, 1e-12);
}

TEST(PromptVae, LossWindowsMostlyNonIncreasing) {
  const auto& tr = default_run().trace;
  std::vector<double> windows;
  for (std::size_t s = 0; s + 100 <= tr.size(); s += 100) {
    double m = 0.0;
    for (std::size_t i = s; i < s + 100; ++i) m += tr[i].loss;
    windows.push_back(m / 100.0);
  }
  std::size_t violations = 0;
  for (std::size_t i = 1; i < windows.size(); ++i) violations += windows[i] > windows[i - 1];
  EXPECT_LE(static_cast<double>(violations), 0.05 * static_cast<double>(windows.size() - 1));
}

TEST(PromptVae, EncodedVarianceRespectsFloor) {
  const auto& r = default_run();
  Rng rng(8);
  for (int i = 0; i < 200; ++i) {
    Vec v = rng.normal_vec(16);
    double n = 0.0;
    for (double x : v) n += x * x;
    for (auto& x : v) x /= std::sqrt(n);
    const auto g = encode_prompt(r.vae, PromptEmbedding{0, v});
    for (double x : g.var()) EXPECT_GE(x, endpoint::kVarFloor);
  }
}

TEST(PromptVae, JsonRoundTrip) {
  const auto& r = default_run();
  const auto table = PromptTable::random({0, 1, 2, 3}, 16, 3);
  const auto j = nlohmann::json::parse(to_json(r.vae, table).dump());
  const auto back = vae_from_json(j);
  EXPECT_EQ(back.encoder, r.vae.encoder);
  EXPECT_EQ(back.decoder, r.vae.decoder);
  const auto t2 = table_from_json(j);
  for (const auto& row : table.rows()) EXPECT_EQ(t2.at(row.prompt_id).vec, row.vec);
}

TEST(PixelShuffle, IsABijectionOnIndices) {
  Tensor3 t{16, 32, 32, Vec(16 * 32 * 32)};
  for (std::size_t i = 0; i < t.data.size(); ++i) t.data[i] = static_cast<double>(i);
  const auto s = pixel_shuffle(t, 2);
  EXPECT_EQ(s.c, 4u);
  EXPECT_EQ(s.h, 64u);
  EXPECT_EQ(s.w, 64u);
  std::vector<char> seen(t.data.size(), 0);
  for (double v : s.data) seen[static_cast<std::size_t>(v)] = 1;
  EXPECT_EQ(std::count(seen.begin(), seen.end(), 1), static_cast<long>(t.data.size()));
  EXPECT_EQ(pixel_unshuffle(s, 2).data, t.data);
}

TEST(PixelShuffle, ChannelGroupsBecomeSpatialBlocks) {
  Tensor3 t{16, 32, 32, Vec(16 * 32 * 32)};
  for (std::size_t c = 0; c < 16; ++c)
    for (std::size_t y = 0; y < 32; ++y)
      for (std::size_t x = 0; x < 32; ++x) t.at(c, y, x) = static_cast<double>(c);
  const auto s = pixel_shuffle(t, 2);
  for (std::size_t c = 0; c < 4; ++c)
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t j = 0; j < 2; ++j) EXPECT_EQ(s.at(c, 10 + i, 20 + j), static_cast<double>(c * 4 + i * 2 + j));
  EXPECT_THROW(pixel_shuffle(Tensor3{3, 2, 2, Vec(12)}, 2), ValidationError);
}

TEST(PromptVae, ImageModeShapeCheckPasses) {
  const auto rep = shape_check_image_mode(0);
  EXPECT_TRUE(rep.all_pass());
  bool saw_head = false;
  for (const auto& st : rep.stages) {
    EXPECT_EQ(st.expected_elems, st.actual_elems) << st.stage;
    if (st.actual_elems == 16384u) saw_head = true;
  }
  EXPECT_TRUE(saw_head);
  EXPECT_EQ(16u * 32 * 32, 4u * 64 * 64);
}
