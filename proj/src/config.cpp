#include "eclab/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>

#include "eclab/rng.hpp"

namespace eclab::config {
namespace {

template <typename T>
void read_opt(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

RunConfig RunConfig::defaults() {
  RunConfig c;
  c.train_implicit.mode = train::Mode::implicit;
  c.train_implicit.steps = 6000;
  c.train_implicit.hidden = {128, 128};
  c.train_explicit = c.train_implicit;
  c.train_explicit.mode = train::Mode::explicit_endpoint;
  c.train_explicit.extra_tokens = true;

  using sample::GuidanceMode;
  c.guidance = {
      {"cfg_x1", GuidanceMode::implicit_cfg, 1.0, 1.0, 10, 0, false},
      {"cfg_x2", GuidanceMode::implicit_cfg, 1.0, 7.5, 10, 0, false},
      {"cfg_x3", GuidanceMode::implicit_cfg, 1.6, 7.5, 10, 0, false},
      {"ec_x1", GuidanceMode::explicit_endpoint, 1.0, 1.0, 10, 0, true},
      {"ec_x1_notokens", GuidanceMode::explicit_endpoint, 1.0, 1.0, 10, 0, false},
  };
  return c;
}

void RunConfig::validate() const {
  require(!run_id.empty() && run_id.find(',') == std::string::npos, "config: run_id must be non-empty without commas");
  task.validate();
  schedule.validate();
  require(n_train >= 1, "config: n_train must be at least 1");
  require(embed_dim >= 1, "config: embed_dim must be at least 1");
  require(ctx_std > 0.0, "config: ctx_std must be positive");
  require(vae.steps >= 1 && vae.hidden >= 1 && vae.samples_per_prompt >= 1, "config: invalid prompt VAE settings");
  train_implicit.validate();
  train_explicit.validate();
  require(train_implicit.mode == train::Mode::implicit, "config: train_implicit.mode must be implicit");
  require(train_explicit.mode == train::Mode::explicit_endpoint, "config: train_explicit.mode must be explicit");
  require(!guidance.empty(), "config: no guidance configs");
  std::set<std::string> names;
  for (const auto& g : guidance) {
    g.validate();
    require(!g.name.empty() && g.name.find(',') == std::string::npos,
            "config: guidance names must be non-empty without commas");
    require(names.insert(g.name).second, "config: duplicate guidance name '" + g.name + "'");
  }
  require(eval.n_eval >= 1 && eval.n_seeds >= 1, "config: eval needs n_eval and n_seeds >= 1");
  require(eval.feature_dim >= task.dim, "config: eval.feature_dim must be at least the data dimension");
  require(eval.bootstrap_resamples >= 1, "config: bootstrap_resamples must be at least 1");
}

nlohmann::json to_json(const sched::Schedule& s) {
  return {{"kind", "cosine"}, {"t_eps", s.t_eps}, {"lambda_min", s.lambda_min}, {"lambda_max", s.lambda_max}};
}

sched::Schedule schedule_from_json(const nlohmann::json& j) {
  const std::string kind = j.value("kind", std::string("cosine"));
  require(kind == "cosine", "schedule: unknown kind '" + kind + "'");
  const double t_eps = j.value("t_eps", 1e-3);
  sched::Schedule s = (j.contains("lambda_min") || j.contains("lambda_max"))
                          ? sched::Schedule(t_eps, j.value("lambda_min", sched::Schedule(t_eps).lambda_min),
                                            j.value("lambda_max", sched::Schedule(t_eps).lambda_max))
                          : sched::Schedule(t_eps);
  s.validate();
  return s;
}

nlohmann::json to_json(const promptvae::VaeTrainConfig& c) {
  return {{"hidden", c.hidden}, {"steps", c.steps},     {"samples_per_prompt", c.samples_per_prompt},
          {"lr", c.lr},         {"beta_kl", c.beta_kl}};
}

promptvae::VaeTrainConfig vae_config_from_json(const nlohmann::json& j) {
  promptvae::VaeTrainConfig c;
  read_opt(j, "hidden", c.hidden);
  read_opt(j, "steps", c.steps);
  read_opt(j, "samples_per_prompt", c.samples_per_prompt);
  read_opt(j, "lr", c.lr);
  read_opt(j, "beta_kl", c.beta_kl);
  return c;
}

nlohmann::json to_json(const sample::GuidanceConfig& g) {
  return {{"name", g.name}, {"mode", sample::to_string(g.mode)}, {"s_i", g.s_i}, {"s_p", g.s_p},
          {"steps", g.steps}, {"seed", g.seed}, {"extra_tokens", g.extra_tokens}};
}

sample::GuidanceConfig guidance_from_json(const nlohmann::json& j) {
  sample::GuidanceConfig g;
  g.name = j.at("name").get<std::string>();
  g.mode = sample::guidance_mode_from_string(j.value("mode", std::string("implicit_cfg")));
  read_opt(j, "s_i", g.s_i);
  read_opt(j, "s_p", g.s_p);
  read_opt(j, "steps", g.steps);
  read_opt(j, "seed", g.seed);
  read_opt(j, "extra_tokens", g.extra_tokens);
  g.validate();
  return g;
}

nlohmann::json to_json(const RunConfig& c) {
  auto strip_seed = [](nlohmann::json j) {
    j.erase("seed");
    return j;
  };
  nlohmann::json guidance = nlohmann::json::array();
  for (const auto& g : c.guidance) guidance.push_back(to_json(g));
  return {{"run_id", c.run_id},
          {"seed", c.seed},
          {"output_dir", c.output_dir},
          {"task", data::to_json(c.task)},
          {"n_train", c.n_train},
          {"schedule", to_json(c.schedule)},
          {"embed_dim", c.embed_dim},
          {"ctx_std", c.ctx_std},
          {"prompt_vae", to_json(c.vae)},
          {"train_implicit", strip_seed(train::to_json(c.train_implicit))},
          {"train_explicit", strip_seed(train::to_json(c.train_explicit))},
          {"guidance", guidance},
          {"eval",
           {{"n_eval", c.eval.n_eval},
            {"n_seeds", c.eval.n_seeds},
            {"feature_dim", c.eval.feature_dim},
            {"bootstrap_resamples", c.eval.bootstrap_resamples}}}};
}

RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig c = RunConfig::defaults();
  try {
    require(j.is_object(), "config: top level must be an object");
    read_opt(j, "run_id", c.run_id);
    read_opt(j, "seed", c.seed);
    read_opt(j, "output_dir", c.output_dir);
    if (j.contains("task")) c.task = data::task_from_json(j.at("task"));
    read_opt(j, "n_train", c.n_train);
    if (j.contains("schedule")) c.schedule = schedule_from_json(j.at("schedule"));
    read_opt(j, "embed_dim", c.embed_dim);
    read_opt(j, "ctx_std", c.ctx_std);
    if (j.contains("prompt_vae")) c.vae = vae_config_from_json(j.at("prompt_vae"));
    if (j.contains("train_implicit")) c.train_implicit = train::train_config_from_json(j.at("train_implicit"));
    if (j.contains("train_explicit")) c.train_explicit = train::train_config_from_json(j.at("train_explicit"));
    if (j.contains("guidance")) {
      c.guidance.clear();
      for (const auto& g : j.at("guidance")) c.guidance.push_back(guidance_from_json(g));
    }
    if (j.contains("eval")) {
      const auto& e = j.at("eval");
      read_opt(e, "n_eval", c.eval.n_eval);
      read_opt(e, "n_seeds", c.eval.n_seeds);
      read_opt(e, "feature_dim", c.eval.feature_dim);
      read_opt(e, "bootstrap_resamples", c.eval.bootstrap_resamples);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read config file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("config file '" + path + "': " + e.what());
  }
  return run_config_from_json(j);
}

void save_run_config(const std::string& path, const RunConfig& c) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write '" + path + "'");
  out << to_json(c).dump(2) << '\n';
}

std::string config_hash(const RunConfig& c) {
  char buf[17];
  nlohmann::json j = to_json(c);
  j.erase("output_dir");  // where results go does not change what they are
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(j.dump())));
  return buf;
}

std::string artifact_header(const RunConfig& c) {
  return "config_hash=" + config_hash(c) + " seed=" + std::to_string(c.seed);
}

const sample::GuidanceConfig& find_guidance(const RunConfig& c, const std::string& name) {
  for (const auto& g : c.guidance)
    if (g.name == name) return g;
  throw ValidationError("no guidance config named '" + name + "'");
}

}  // namespace eclab::config
