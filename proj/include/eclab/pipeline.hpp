#pragma once

// End-to-end orchestration: data -> prompt VAE -> diffusion trainings ->
// benchmark, with every artifact written under one output directory.

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "eclab/config.hpp"
#include "eclab/eval.hpp"

namespace eclab::pipeline {

/// Progress messages; may be empty.
using Log = std::function<void(const std::string&)>;

// Artifact file names inside an output directory.
inline constexpr const char* kConfigFile = "config.json";
inline constexpr const char* kDatasetFile = "dataset.csv";
inline constexpr const char* kVaeFile = "prompt_vae.json";
inline constexpr const char* kVaeLossFile = "loss_prompt_vae.csv";
inline constexpr const char* kResultsFile = "results.csv";
inline constexpr const char* kTimingFile = "timing.csv";
inline constexpr const char* kSummaryFile = "summary.json";
inline constexpr const char* kSamplesFile = "samples.csv";
inline constexpr const char* kMollifierFile = "mollifier.csv";

/// Model variant name used in file names: implicit, explicit, explicit_notokens.
std::string model_name(train::Mode mode, bool extra_tokens);
std::string model_file(const std::string& name);
std::string loss_file(const std::string& name);

/// Seed of the named component stream for this run.
std::uint64_t component_seed(const config::RunConfig& c, const std::string& name);

std::vector<data::EditTriple> make_dataset(const config::RunConfig& c);
promptvae::PromptTable make_prompt_table(const config::RunConfig& c);
promptvae::VaeTrainResult fit_prompt_vae(const config::RunConfig& c, const promptvae::PromptTable& table);
train::TrainResult fit_denoiser(const config::RunConfig& c, train::Mode mode, bool extra_tokens,
                                const std::vector<data::EditTriple>& dataset, const train::Conditioner& cond);
eval::FeatureMaps make_features(const config::RunConfig& c);
eval::BenchmarkConfig benchmark_config(const config::RunConfig& c);

/// Model variants the guidance list needs, as (mode, extra_tokens).
std::vector<std::pair<train::Mode, bool>> required_models(const config::RunConfig& c);

struct TrainedModels {
  std::optional<train::Denoiser> implicit;
  std::optional<train::Denoiser> explicit_tokens;
  std::optional<train::Denoiser> explicit_plain;

  eval::Models view() const;
  void set(train::Mode mode, bool extra_tokens, train::Denoiser m);
};

struct ReproResult {
  eval::BenchmarkResult bench;
  nlohmann::json summary;
  std::string results_path;
};

/// Runs the whole chain and writes all artifacts to `out_dir`.
ReproResult repro(const config::RunConfig& c, const std::string& out_dir, const Log& log = {});

/// Benchmark on models already stored in `dir`; writes results, timing,
/// summary and samples there. Missing model files are validation errors.
ReproResult evaluate_dir(const config::RunConfig& c, const std::string& dir, const Log& log = {});

// Artifact writers shared by the CLI.
void write_loss_csv(const std::string& path, const std::vector<train::LossPoint>& trace, train::Mode mode,
                    std::uint64_t seed, const std::string& header_comment);
void write_vae_loss_csv(const std::string& path, const std::vector<promptvae::VaeLossPoint>& trace,
                        const std::string& header_comment);
void write_mollifier_csv(const std::string& path, const std::vector<double>& deltas,
                         const std::string& header_comment);
void write_json(const std::string& path, const nlohmann::json& j);
nlohmann::json read_json(const std::string& path);

}  // namespace eclab::pipeline
