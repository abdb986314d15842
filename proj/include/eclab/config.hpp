#pragma once

// Run configuration: everything `repro` needs, loadable from one JSON file.
// Component seeds are not stored; they are derived from the global seed via
// named sub-streams when the pipeline runs.

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "eclab/data.hpp"
#include "eclab/promptvae.hpp"
#include "eclab/sample.hpp"
#include "eclab/sched.hpp"
#include "eclab/train.hpp"

namespace eclab::config {

struct EvalParams {
  std::size_t n_eval = 512;
  std::size_t n_seeds = 5;
  std::size_t feature_dim = 8;
  std::size_t bootstrap_resamples = 1000;

  bool operator==(const EvalParams&) const = default;
};

struct RunConfig {
  std::string run_id = "default";
  std::uint64_t seed = 0;
  std::string output_dir = "out";

  data::EditTask task = data::default_task();
  std::size_t n_train = 20000;
  sched::Schedule schedule;

  std::size_t embed_dim = 16;
  double ctx_std = 0.05;
  promptvae::VaeTrainConfig vae;

  train::TrainConfig train_implicit;
  /// extra_tokens is taken from each explicit guidance config; one explicit
  /// model is trained per variant in use.
  train::TrainConfig train_explicit;

  std::vector<sample::GuidanceConfig> guidance;
  EvalParams eval;

  static RunConfig defaults();
  void validate() const;
};

nlohmann::json to_json(const sched::Schedule& s);
sched::Schedule schedule_from_json(const nlohmann::json& j);
nlohmann::json to_json(const promptvae::VaeTrainConfig& c);
promptvae::VaeTrainConfig vae_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const sample::GuidanceConfig& g);
sample::GuidanceConfig guidance_from_json(const nlohmann::json& j);

nlohmann::json to_json(const RunConfig& c);
/// Missing keys keep their defaults.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);
void save_run_config(const std::string& path, const RunConfig& c);

/// FNV-1a of the canonical JSON without output_dir, as 16 hex digits.
std::string config_hash(const RunConfig& c);
/// "config_hash=<hash> seed=<seed>", the first-line comment of every artifact.
std::string artifact_header(const RunConfig& c);

const sample::GuidanceConfig& find_guidance(const RunConfig& c, const std::string& name);

}  // namespace eclab::config
