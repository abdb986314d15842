#pragma once

// Edit-quality metrics and the benchmark harness.
//
// DCS and DVS are cosine similarities of difference vectors in a fixed
// feature space: E_V embeds data points, E_T embeds prompt ids. Distribution
// quality is measured against the known ground truth with sliced W1 and
// RBF-MMD.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "eclab/common.hpp"
#include "eclab/data.hpp"
#include "eclab/endpoint.hpp"
#include "eclab/oracle.hpp"
#include "eclab/sample.hpp"
#include "eclab/train.hpp"

namespace eclab::eval {

inline constexpr std::size_t kFeatureDim = 8;
inline constexpr std::size_t kSliceDirections = 64;
inline constexpr std::size_t kTruthDraws = 10000;
inline constexpr std::size_t kMinSamples = 100;

class FeatureMaps {
 public:
  /// E_V: d -> F with orthonormal columns (an isometric embedding, since
  /// d < F). E_T: one seeded unit vector per prompt id plus `unchanged_id`.
  static FeatureMaps make(std::size_t data_dim, const std::vector<int>& prompt_ids, std::size_t feature_dim,
                          std::uint64_t seed);

  Vec visual(std::span<const double> x) const;
  const Vec& text(int prompt_id) const;

  std::size_t data_dim() const { return data_dim_; }
  std::size_t feature_dim() const { return feature_dim_; }
  /// Caption id for "no edit applied".
  int unchanged_id() const { return unchanged_id_; }
  /// Row-major F x d.
  const Vec& ev() const { return ev_; }

  /// Replaces E_V by R E_V for an F x F row-major matrix R.
  FeatureMaps rotated(std::span<const double> r) const;

 private:
  std::size_t data_dim_ = 0;
  std::size_t feature_dim_ = 0;
  int unchanged_id_ = -1;
  Vec ev_;
  std::vector<int> text_ids_;
  std::vector<Vec> text_;
};

struct Similarity {
  double value = 0.0;
  bool degenerate = false;
};

/// Cosine similarity; 0 with the degenerate flag if either norm is < 1e-9.
Similarity cosine(std::span<const double> a, std::span<const double> b);

/// cos(E_V(i) - E_V(o), E_T(c_i) - E_T(c_e))
Similarity dcs(const FeatureMaps& fm, std::span<const double> i, std::span<const double> o, int c_i, int c_e);

/// cos(E_V(i) - E_V(o), E_V(i) - E_V(e))
Similarity dvs(const FeatureMaps& fm, std::span<const double> i, std::span<const double> o,
               std::span<const double> e);

struct Distance {
  double w1_sliced = 0.0;
  double mmd = 0.0;
};

/// Exact W1 between two empirical 1D distributions (sorted in place).
double wasserstein_1d(std::vector<double>& a, std::vector<double>& b);

/// Unit directions in R^d, seeded.
std::vector<Vec> slice_directions(std::size_t d, std::size_t count, std::uint64_t seed);

double sliced_w1(const std::vector<Vec>& xs, const std::vector<Vec>& ys, const std::vector<Vec>& directions);

/// Biased RBF-MMD (square root of MMD^2) with bandwidth = median pairwise
/// distance of the pooled set.
double mmd(const std::vector<Vec>& xs, const std::vector<Vec>& ys);

using TruthSampler = std::function<Vec(Rng&)>;

/// Sliced W1 against kTruthDraws truth draws and MMD against a truth subsample
/// of the same size as `samples`. Needs at least kMinSamples samples.
Distance dist_to_truth(const std::vector<Vec>& samples, const TruthSampler& truth, std::uint64_t seed);
Distance dist_to_truth(const std::vector<Vec>& samples, const endpoint::DiagGaussian& truth, std::uint64_t seed);
Distance dist_to_truth(const std::vector<Vec>& samples, const oracle::GaussianMixture& truth, std::uint64_t seed);

/// Cosine similarity between the implicit model's conditional score,
/// -(sigma z + alpha v_hat) / sigma, and the exact score of p(z_t | c_I, c_P),
/// at `n_probes` points drawn from that conditional for random pairs.
std::vector<double> oracle_agreement(const train::Denoiser& model, const promptvae::PromptTable& table,
                                     const data::EditTask& task, const sched::Schedule& s, double t,
                                     std::size_t n_probes, std::uint64_t seed);

struct EvalRow {
  std::string run_id;
  std::string method;
  std::size_t passes = 1;
  std::string metric;  // dcs | dvs | w1_sliced | mmd | denoiser_calls
  double value = 0.0;
  std::uint64_t seed = 0;
};

struct TimingRow {
  std::string run_id;
  std::string method;
  std::uint64_t seed = 0;
  std::size_t samples = 0;
  double wall_time_us = 0.0;  // mean per sample
};

/// Trained models available to the benchmark. Any pointer may be null; a
/// config needing a missing model is a validation error.
struct Models {
  const train::Denoiser* implicit = nullptr;
  const train::Denoiser* explicit_tokens = nullptr;
  const train::Denoiser* explicit_plain = nullptr;

  const train::Denoiser& for_config(const sample::GuidanceConfig& g) const;
};

struct BenchmarkConfig {
  std::string run_id = "run";
  std::size_t n_eval = 512;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
};

/// Per-triple values kept for bootstrap intervals.
struct MethodSamples {
  std::string method;
  std::vector<double> dcs;
  std::vector<double> dvs;
  std::vector<double> w1_sliced;  // one per seed
  std::vector<double> mmd;        // one per seed
  std::size_t degenerate = 0;
};

struct BenchmarkResult {
  std::vector<EvalRow> rows;
  std::vector<TimingRow> timing;
  std::vector<MethodSamples> per_method;
  /// Sampled points of the first seed, for plotting.
  struct Point {
    std::string method;
    std::size_t sample_id;
    int prompt_id;
    Vec context;
    Vec output;
  };
  std::vector<Point> points;
};

BenchmarkResult run_benchmark(const Models& models, const train::Conditioner& cond, const data::EditTask& task,
                              const sched::Schedule& s, const FeatureMaps& fm,
                              const std::vector<sample::GuidanceConfig>& configs, const BenchmarkConfig& bc);

/// Mean of `metric` over all rows of `method`.
double mean_metric(const std::vector<EvalRow>& rows, const std::string& method, const std::string& metric);

/// Per-method means with 95% percentile bootstrap intervals.
nlohmann::json summarize(const BenchmarkResult& r, std::size_t resamples, std::uint64_t seed);

void write_results_csv(const std::string& path, const std::vector<EvalRow>& rows, const std::string& header_comment);
std::vector<EvalRow> read_results_csv(const std::string& path);
void write_timing_csv(const std::string& path, const std::vector<TimingRow>& rows, const std::string& header_comment);
void write_points_csv(const std::string& path, const std::vector<BenchmarkResult::Point>& pts, std::size_t dim,
                      const std::string& header_comment);

}  // namespace eclab::eval
