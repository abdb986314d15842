#include "eclab/pipeline.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "eclab/oracle.hpp"

namespace eclab::pipeline {
namespace fs = std::filesystem;

namespace {

void say(const Log& log, const std::string& msg) {
  if (log) log(msg);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write '" + path + "'");
  return out;
}

std::string join(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

void write_outputs(const config::RunConfig& c, const std::string& dir, ReproResult& r) {
  const std::string header = config::artifact_header(c);
  r.results_path = join(dir, kResultsFile);
  eval::write_results_csv(r.results_path, r.bench.rows, header);
  eval::write_timing_csv(join(dir, kTimingFile), r.bench.timing, header);
  eval::write_points_csv(join(dir, kSamplesFile), r.bench.points, c.task.dim, header);
  r.summary = eval::summarize(r.bench, c.eval.bootstrap_resamples, component_seed(c, "bootstrap"));
  r.summary["config_hash"] = config::config_hash(c);
  r.summary["run_id"] = c.run_id;
  write_json(join(dir, kSummaryFile), r.summary);
}

}  // namespace

std::string model_name(train::Mode mode, bool extra_tokens) {
  if (mode == train::Mode::implicit) return "implicit";
  return extra_tokens ? "explicit" : "explicit_notokens";
}

std::string model_file(const std::string& name) { return "model_" + name + ".json"; }
std::string loss_file(const std::string& name) { return "loss_" + name + ".csv"; }

std::uint64_t component_seed(const config::RunConfig& c, const std::string& name) {
  return stream_seed(c.seed, name);
}

std::vector<data::EditTriple> make_dataset(const config::RunConfig& c) {
  return data::gen_dataset(c.task, c.n_train, component_seed(c, "data"));
}

promptvae::PromptTable make_prompt_table(const config::RunConfig& c) {
  std::vector<int> ids;
  for (const auto& p : c.task.prompts) ids.push_back(p.id);
  return promptvae::PromptTable::random(ids, c.embed_dim, component_seed(c, "prompt-table"));
}

promptvae::VaeTrainResult fit_prompt_vae(const config::RunConfig& c, const promptvae::PromptTable& table) {
  promptvae::VaeTrainConfig vc = c.vae;
  vc.seed = component_seed(c, "prompt-vae");
  return promptvae::train_prompt_vae(table.rows(), c.task.dim, vc);
}

train::TrainResult fit_denoiser(const config::RunConfig& c, train::Mode mode, bool extra_tokens,
                                const std::vector<data::EditTriple>& dataset, const train::Conditioner& cond) {
  train::TrainConfig tc = mode == train::Mode::implicit ? c.train_implicit : c.train_explicit;
  tc.mode = mode;
  tc.extra_tokens = mode == train::Mode::explicit_endpoint && extra_tokens;
  const std::string name = model_name(mode, tc.extra_tokens);
  tc.seed = component_seed(c, "train-" + name);
  return train::train_diffusion(dataset, tc, c.schedule, cond);
}

eval::FeatureMaps make_features(const config::RunConfig& c) {
  std::vector<int> ids;
  for (const auto& p : c.task.prompts) ids.push_back(p.id);
  return eval::FeatureMaps::make(c.task.dim, ids, c.eval.feature_dim, component_seed(c, "features"));
}

eval::BenchmarkConfig benchmark_config(const config::RunConfig& c) {
  eval::BenchmarkConfig bc;
  bc.run_id = c.run_id;
  bc.n_eval = c.eval.n_eval;
  bc.seeds.clear();
  for (std::size_t k = 0; k < c.eval.n_seeds; ++k)
    bc.seeds.push_back(component_seed(c, "sample-" + std::to_string(k)));
  return bc;
}

std::vector<std::pair<train::Mode, bool>> required_models(const config::RunConfig& c) {
  bool imp = false, tok = false, plain = false;
  for (const auto& g : c.guidance) {
    if (g.mode == sample::GuidanceMode::implicit_cfg) {
      imp = true;
    } else if (g.extra_tokens) {
      tok = true;
    } else {
      plain = true;
    }
  }
  std::vector<std::pair<train::Mode, bool>> out;
  if (imp) out.emplace_back(train::Mode::implicit, false);
  if (tok) out.emplace_back(train::Mode::explicit_endpoint, true);
  if (plain) out.emplace_back(train::Mode::explicit_endpoint, false);
  return out;
}

eval::Models TrainedModels::view() const {
  return {implicit ? &*implicit : nullptr, explicit_tokens ? &*explicit_tokens : nullptr,
          explicit_plain ? &*explicit_plain : nullptr};
}

void TrainedModels::set(train::Mode mode, bool extra_tokens, train::Denoiser m) {
  if (mode == train::Mode::implicit) {
    implicit = std::move(m);
  } else if (extra_tokens) {
    explicit_tokens = std::move(m);
  } else {
    explicit_plain = std::move(m);
  }
}

ReproResult repro(const config::RunConfig& c, const std::string& out_dir, const Log& log) {
  c.validate();
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir)) throw ValidationError("cannot create output directory '" + out_dir + "'");
  const std::string header = config::artifact_header(c);
  config::save_run_config(join(out_dir, kConfigFile), c);

  say(log, "generating " + std::to_string(c.n_train) + " training triples");
  const auto dataset = make_dataset(c);
  data::write_csv(join(out_dir, kDatasetFile), dataset, c.task.dim, header);

  say(log, "training prompt VAE");
  const auto table = make_prompt_table(c);
  const auto vae = fit_prompt_vae(c, table);
  write_json(join(out_dir, kVaeFile), promptvae::to_json(vae.vae, table));
  write_vae_loss_csv(join(out_dir, kVaeLossFile), vae.trace, header);

  const train::Conditioner cond{&table, &vae.vae, c.ctx_std};
  TrainedModels models;
  for (const auto& [mode, tokens] : required_models(c)) {
    const std::string name = model_name(mode, tokens);
    say(log, "training denoiser '" + name + "'");
    auto res = fit_denoiser(c, mode, tokens, dataset, cond);
    write_json(join(out_dir, model_file(name)), train::to_json(res.model));
    write_loss_csv(join(out_dir, loss_file(name)), res.trace, mode, component_seed(c, "train-" + name), header);
    models.set(mode, tokens, std::move(res.model));
  }

  say(log, "running benchmark");
  ReproResult r;
  r.bench = eval::run_benchmark(models.view(), cond, c.task, c.schedule, make_features(c), c.guidance,
                                benchmark_config(c));
  write_outputs(c, out_dir, r);
  write_mollifier_csv(join(out_dir, kMollifierFile), {0.2, 0.1, 0.05, 0.02, 0.01}, header);
  return r;
}

ReproResult evaluate_dir(const config::RunConfig& c, const std::string& dir, const Log& log) {
  c.validate();
  const std::string vae_path = join(dir, kVaeFile);
  if (!fs::exists(vae_path)) throw ValidationError("missing prompt VAE checkpoint '" + vae_path + "'");
  const nlohmann::json vj = read_json(vae_path);
  const auto table = promptvae::table_from_json(vj);
  const auto vae = promptvae::vae_from_json(vj);
  const train::Conditioner cond{&table, &vae, c.ctx_std};

  TrainedModels models;
  for (const auto& [mode, tokens] : required_models(c)) {
    const std::string path = join(dir, model_file(model_name(mode, tokens)));
    if (!fs::exists(path)) throw ValidationError("missing model checkpoint '" + path + "'");
    models.set(mode, tokens, train::denoiser_from_json(read_json(path)));
  }
  say(log, "running benchmark");
  ReproResult r;
  r.bench = eval::run_benchmark(models.view(), cond, c.task, c.schedule, make_features(c), c.guidance,
                                benchmark_config(c));
  write_outputs(c, dir, r);
  return r;
}

void write_loss_csv(const std::string& path, const std::vector<train::LossPoint>& trace, train::Mode mode,
                    std::uint64_t seed, const std::string& header_comment) {
  auto out = open_out(path);
  out << "# " << header_comment << "\n";
  out << "step,loss,mode,seed\n";
  for (const auto& p : trace) out << p.step << ',' << fmt(p.loss) << ',' << train::to_string(mode) << ',' << seed << '\n';
}

void write_vae_loss_csv(const std::string& path, const std::vector<promptvae::VaeLossPoint>& trace,
                        const std::string& header_comment) {
  auto out = open_out(path);
  out << "# " << header_comment << "\n";
  out << "step,loss,reconstruction,kl\n";
  for (const auto& p : trace)
    out << p.step << ',' << fmt(p.loss) << ',' << fmt(p.reconstruction) << ',' << fmt(p.kl) << '\n';
}

void write_mollifier_csv(const std::string& path, const std::vector<double>& deltas,
                         const std::string& header_comment) {
  auto out = open_out(path);
  out << "# " << header_comment << "\n";
  out << "delta,grad_sup\n";
  for (double d : deltas) out << fmt(d) << ',' << fmt(oracle::mollifier_grad_sup(d)) << '\n';
}

void write_json(const std::string& path, const nlohmann::json& j) {
  auto out = open_out(path);
  out << j.dump(2) << '\n';
}

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("'" + path + "': " + e.what());
  }
}

}  // namespace eclab::pipeline
