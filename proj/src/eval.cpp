#include "eclab/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace eclab::eval {
namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

Vec random_unit(std::size_t n, Rng& rng) {
  Vec v = rng.normal_vec(n);
  const double norm = std::sqrt(dot(v, v));
  for (auto& x : v) x /= norm;
  return v;
}

Vec diff(std::span<const double> a, std::span<const double> b) {
  Vec out(a.size());
  for (std::size_t k = 0; k < a.size(); ++k) out[k] = a[k] - b[k];
  return out;
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

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

}  // namespace

FeatureMaps FeatureMaps::make(std::size_t data_dim, const std::vector<int>& prompt_ids, std::size_t feature_dim,
                              std::uint64_t seed) {
  require(data_dim >= 1 && feature_dim >= data_dim, "FeatureMaps: need 1 <= data_dim <= feature_dim");
  require(!prompt_ids.empty(), "FeatureMaps: no prompt ids");
  Rng rng(seed);
  FeatureMaps fm;
  fm.data_dim_ = data_dim;
  fm.feature_dim_ = feature_dim;

  // Gram-Schmidt on random columns.
  std::vector<Vec> cols;
  while (cols.size() < data_dim) {
    Vec c = rng.normal_vec(feature_dim);
    for (const auto& q : cols) {
      const double p = dot(c, q);
      for (std::size_t k = 0; k < feature_dim; ++k) c[k] -= p * q[k];
    }
    const double norm = std::sqrt(dot(c, c));
    if (norm < 1e-6) continue;
    for (auto& x : c) x /= norm;
    cols.push_back(std::move(c));
  }
  fm.ev_.assign(feature_dim * data_dim, 0.0);
  for (std::size_t r = 0; r < feature_dim; ++r)
    for (std::size_t c = 0; c < data_dim; ++c) fm.ev_[r * data_dim + c] = cols[c][r];

  fm.unchanged_id_ = *std::max_element(prompt_ids.begin(), prompt_ids.end()) + 1;
  fm.text_ids_ = prompt_ids;
  fm.text_ids_.push_back(fm.unchanged_id_);
  for (std::size_t i = 0; i < fm.text_ids_.size(); ++i) fm.text_.push_back(random_unit(feature_dim, rng));
  return fm;
}

Vec FeatureMaps::visual(std::span<const double> x) const {
  require_same_dim(x.size(), data_dim_, "FeatureMaps::visual");
  Vec out(feature_dim_, 0.0);
  for (std::size_t r = 0; r < feature_dim_; ++r)
    for (std::size_t c = 0; c < data_dim_; ++c) out[r] += ev_[r * data_dim_ + c] * x[c];
  return out;
}

const Vec& FeatureMaps::text(int prompt_id) const {
  for (std::size_t i = 0; i < text_ids_.size(); ++i)
    if (text_ids_[i] == prompt_id) return text_[i];
  throw ValidationError("FeatureMaps: unknown prompt id " + std::to_string(prompt_id));
}

FeatureMaps FeatureMaps::rotated(std::span<const double> r) const {
  require_same_dim(r.size(), feature_dim_ * feature_dim_, "FeatureMaps::rotated");
  FeatureMaps out = *this;
  for (std::size_t i = 0; i < feature_dim_; ++i)
    for (std::size_t c = 0; c < data_dim_; ++c) {
      double s = 0.0;
      for (std::size_t k = 0; k < feature_dim_; ++k) s += r[i * feature_dim_ + k] * ev_[k * data_dim_ + c];
      out.ev_[i * data_dim_ + c] = s;
    }
  return out;
}

Similarity cosine(std::span<const double> a, std::span<const double> b) {
  require_same_dim(a.size(), b.size(), "cosine");
  const double na = std::sqrt(dot(a, a));
  const double nb = std::sqrt(dot(b, b));
  if (na < 1e-9 || nb < 1e-9) return {0.0, true};
  return {dot(a, b) / (na * nb), false};
}

Similarity dcs(const FeatureMaps& fm, std::span<const double> i, std::span<const double> o, int c_i, int c_e) {
  return cosine(diff(fm.visual(i), fm.visual(o)), diff(fm.text(c_i), fm.text(c_e)));
}

Similarity dvs(const FeatureMaps& fm, std::span<const double> i, std::span<const double> o,
               std::span<const double> e) {
  const Vec vi = fm.visual(i);
  return cosine(diff(vi, fm.visual(o)), diff(vi, fm.visual(e)));
}

double wasserstein_1d(std::vector<double>& a, std::vector<double>& b) {
  require(!a.empty() && !b.empty(), "wasserstein_1d: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  // Sweep the merged support; between breakpoints both CDFs are constant.
  std::size_t ia = 0, ib = 0;
  double x = std::min(a[0], b[0]);
  double total = 0.0;
  while (ia < a.size() || ib < b.size()) {
    double next;
    if (ib == b.size() || (ia < a.size() && a[ia] <= b[ib])) {
      next = a[ia];
    } else {
      next = b[ib];
    }
    total += std::abs(ia / na - ib / nb) * (next - x);
    x = next;
    while (ia < a.size() && a[ia] == x) ++ia;
    while (ib < b.size() && b[ib] == x) ++ib;
  }
  return total;
}

std::vector<Vec> slice_directions(std::size_t d, std::size_t count, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Vec> dirs;
  dirs.reserve(count);
  for (std::size_t i = 0; i < count; ++i) dirs.push_back(random_unit(d, rng));
  return dirs;
}

double sliced_w1(const std::vector<Vec>& xs, const std::vector<Vec>& ys, const std::vector<Vec>& directions) {
  std::vector<double> pa(xs.size()), pb(ys.size());
  double total = 0.0;
  for (const auto& th : directions) {
    for (std::size_t i = 0; i < xs.size(); ++i) pa[i] = dot(xs[i], th);
    for (std::size_t i = 0; i < ys.size(); ++i) pb[i] = dot(ys[i], th);
    total += wasserstein_1d(pa, pb);
  }
  return total / static_cast<double>(directions.size());
}

double mmd(const std::vector<Vec>& xs, const std::vector<Vec>& ys) {
  require(!xs.empty() && !ys.empty(), "mmd: empty sample");
  std::vector<const Vec*> pooled;
  for (const auto& x : xs) pooled.push_back(&x);
  for (const auto& y : ys) pooled.push_back(&y);
  const std::size_t n = pooled.size();
  std::vector<double> d2(n * n, 0.0);
  std::vector<double> dists;
  dists.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < pooled[i]->size(); ++k) {
        const double t = (*pooled[i])[k] - (*pooled[j])[k];
        s += t * t;
      }
      d2[i * n + j] = d2[j * n + i] = s;
      dists.push_back(std::sqrt(s));
    }
  double h = 1.0;
  if (!dists.empty()) {
    auto mid = dists.begin() + static_cast<std::ptrdiff_t>(dists.size() / 2);
    std::nth_element(dists.begin(), mid, dists.end());
    if (*mid > 0.0) h = *mid;
  }
  const double inv = 1.0 / (2.0 * h * h);
  const std::size_t m = xs.size();
  double kxx = 0.0, kyy = 0.0, kxy = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double k = std::exp(-d2[i * n + j] * inv);
      if (i < m && j < m) {
        kxx += k;
      } else if (i >= m && j >= m) {
        kyy += k;
      } else {
        kxy += k;
      }
    }
  const double nx = static_cast<double>(m);
  const double ny = static_cast<double>(n - m);
  const double mmd2 = kxx / (nx * nx) + kyy / (ny * ny) - kxy / (nx * ny);
  return std::sqrt(std::max(mmd2, 0.0));
}

Distance dist_to_truth(const std::vector<Vec>& samples, const TruthSampler& truth, std::uint64_t seed) {
  require(samples.size() >= kMinSamples,
          "dist_to_truth: need at least " + std::to_string(kMinSamples) + " samples, got " +
              std::to_string(samples.size()));
  const std::size_t d = samples.front().size();
  Rng rng = stream(seed, "truth-draws");
  std::vector<Vec> ref;
  ref.reserve(kTruthDraws);
  for (std::size_t i = 0; i < kTruthDraws; ++i) {
    ref.push_back(truth(rng));
    require_same_dim(ref.back().size(), d, "dist_to_truth");
  }
  Distance out;
  out.w1_sliced = sliced_w1(samples, ref, slice_directions(d, kSliceDirections, stream_seed(seed, "slices")));
  const std::vector<Vec> sub(ref.begin(), ref.begin() + static_cast<std::ptrdiff_t>(
                                                            std::min(samples.size(), ref.size())));
  out.mmd = mmd(samples, sub);
  return out;
}

Distance dist_to_truth(const std::vector<Vec>& samples, const endpoint::DiagGaussian& truth, std::uint64_t seed) {
  return dist_to_truth(samples, [&truth](Rng& r) { return endpoint::sample_endpoint(truth, r).y; }, seed);
}

Distance dist_to_truth(const std::vector<Vec>& samples, const oracle::GaussianMixture& truth, std::uint64_t seed) {
  return dist_to_truth(samples, [&truth](Rng& r) { return truth.sample(r); }, seed);
}

std::vector<double> oracle_agreement(const train::Denoiser& model, const promptvae::PromptTable& table,
                                     const data::EditTask& task, const sched::Schedule& s, double t,
                                     std::size_t n_probes, std::uint64_t seed) {
  require(model.mode == train::Mode::implicit, "oracle_agreement: needs an implicitly conditioned model");
  const auto [a, sg] = sched::alpha_sigma(s, t);
  Rng rng = stream(seed, "oracle-probes");
  std::vector<double> out;
  out.reserve(n_probes);
  for (std::size_t i = 0; i < n_probes; ++i) {
    const Vec ctx = data::sample_context(task, rng);
    const int pid = task.prompts[rng.index(task.prompts.size())].id;
    const auto gm = oracle::marginal_at_t(task, s, t, {ctx, pid});
    const Vec z = gm.sample(rng);
    const Vec& pvec = table.at(pid).vec;
    const Vec v = train::predict_v(model, s, z, t, {&ctx, &pvec});
    Vec model_score(z.size());
    for (std::size_t k = 0; k < z.size(); ++k) model_score[k] = -(sg * z[k] + a * v[k]) / sg;
    out.push_back(cosine(model_score, gm.score(z)).value);
  }
  return out;
}

const train::Denoiser& Models::for_config(const sample::GuidanceConfig& g) const {
  const train::Denoiser* m = nullptr;
  if (g.mode == sample::GuidanceMode::implicit_cfg) {
    m = implicit;
  } else {
    m = g.extra_tokens ? explicit_tokens : explicit_plain;
  }
  if (!m) throw ValidationError("benchmark: no trained model for method '" + g.name + "'");
  return *m;
}

BenchmarkResult run_benchmark(const Models& models, const train::Conditioner& cond, const data::EditTask& task,
                              const sched::Schedule& s, const FeatureMaps& fm,
                              const std::vector<sample::GuidanceConfig>& configs, const BenchmarkConfig& bc) {
  require(!configs.empty(), "benchmark: no guidance configs");
  require(!bc.seeds.empty(), "benchmark: no seeds");
  for (const auto& g : configs) {
    g.validate();
    models.for_config(g);
  }
  const std::size_t d = task.dim;
  const double noise = task.edit_noise_std;
  const endpoint::DiagGaussian residual_truth(Vec(d, 0.0), Vec(d, noise * noise));

  BenchmarkResult res;
  for (const auto& g : configs) res.per_method.push_back({g.name, {}, {}, {}, {}, 0});

  for (std::uint64_t seed : bc.seeds) {
    Rng pair_rng = stream(seed, "eval-pairs");
    std::vector<std::pair<Vec, int>> pairs;
    for (std::size_t i = 0; i < bc.n_eval; ++i) {
      Vec c = data::sample_context(task, pair_rng);
      const int p = task.prompts[pair_rng.index(task.prompts.size())].id;
      pairs.emplace_back(std::move(c), p);
    }
    for (std::size_t mi = 0; mi < configs.size(); ++mi) {
      const auto& g = configs[mi];
      const train::Denoiser& model = models.for_config(g);
      auto& ms = res.per_method[mi];
      // Every method sees the same start randomness for a given seed.
      Rng start_rng = stream(seed ^ g.seed, "eval-start");
      std::vector<Vec> residuals;
      std::vector<double> dcs_v, dvs_v;
      std::size_t calls = 0;
      double wall_us = 0.0;
      for (std::size_t i = 0; i < pairs.size(); ++i) {
        const auto& [ctx, pid] = pairs[i];
        const Vec& pvec = cond.prompt_vec(pid);
        const Vec start = sample::draw_start(g, cond, ctx, pid, start_rng);
        const auto t0 = std::chrono::steady_clock::now();
        const auto out = sample::ddim_sample(model, s, start, {&ctx, &pvec}, g);
        const auto t1 = std::chrono::steady_clock::now();
        wall_us += std::chrono::duration<double, std::micro>(t1 - t0).count();
        calls += out.denoiser_calls;

        const Vec e = task.apply_edit(pid, ctx);
        const Similarity sv = dvs(fm, ctx, out.final, e);
        const Similarity sc = dcs(fm, ctx, out.final, fm.unchanged_id(), pid);
        ms.degenerate += sv.degenerate + sc.degenerate;
        dvs_v.push_back(sv.value);
        dcs_v.push_back(sc.value);
        residuals.push_back(diff(out.final, e));
        if (seed == bc.seeds.front()) res.points.push_back({g.name, i, pid, ctx, out.final});
      }
      const Distance dist = dist_to_truth(residuals, residual_truth, stream_seed(seed, "eval-dist"));
      const std::size_t passes = sample::passes_per_step(g);
      const double n = static_cast<double>(pairs.size());
      auto row = [&](const char* metric, double v) {
        res.rows.push_back({bc.run_id, g.name, passes, metric, v, seed});
      };
      row("dcs", mean_of(dcs_v));
      row("dvs", mean_of(dvs_v));
      row("w1_sliced", dist.w1_sliced);
      row("mmd", dist.mmd);
      row("denoiser_calls", static_cast<double>(calls) / n);
      res.timing.push_back({bc.run_id, g.name, seed, pairs.size(), wall_us / n});
      ms.dcs.insert(ms.dcs.end(), dcs_v.begin(), dcs_v.end());
      ms.dvs.insert(ms.dvs.end(), dvs_v.begin(), dvs_v.end());
      ms.w1_sliced.push_back(dist.w1_sliced);
      ms.mmd.push_back(dist.mmd);
    }
  }
  return res;
}

double mean_metric(const std::vector<EvalRow>& rows, const std::string& method, const std::string& metric) {
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& r : rows)
    if (r.method == method && r.metric == metric) {
      s += r.value;
      ++n;
    }
  if (n == 0) throw ValidationError("no rows for " + method + "/" + metric);
  return s / static_cast<double>(n);
}

nlohmann::json summarize(const BenchmarkResult& r, std::size_t resamples, std::uint64_t seed) {
  auto interval = [&](const std::vector<double>& v, const std::string& name) {
    nlohmann::json j;
    j["mean"] = mean_of(v);
    j["n"] = v.size();
    Rng rng = stream(seed, name);
    std::vector<double> means(resamples);
    for (auto& m : means) {
      double s = 0.0;
      for (std::size_t i = 0; i < v.size(); ++i) s += v[rng.index(v.size())];
      m = s / static_cast<double>(v.size());
    }
    std::sort(means.begin(), means.end());
    const auto at = [&](double q) {
      return means[std::min(means.size() - 1, static_cast<std::size_t>(q * static_cast<double>(means.size())))];
    };
    j["ci95"] = {at(0.025), at(0.975)};
    return j;
  };
  nlohmann::json out;
  out["resamples"] = resamples;
  out["seed"] = seed;
  nlohmann::json methods = nlohmann::json::object();
  for (const auto& m : r.per_method) {
    nlohmann::json jm;
    jm["dcs"] = interval(m.dcs, m.method + "/dcs");
    jm["dvs"] = interval(m.dvs, m.method + "/dvs");
    jm["w1_sliced"] = interval(m.w1_sliced, m.method + "/w1");
    jm["mmd"] = interval(m.mmd, m.method + "/mmd");
    jm["denoiser_calls"] = mean_metric(r.rows, m.method, "denoiser_calls");
    jm["degenerate"] = m.degenerate;
    methods[m.method] = jm;
  }
  out["methods"] = methods;
  return out;
}

void write_results_csv(const std::string& path, const std::vector<EvalRow>& rows, const std::string& header_comment) {
  auto out = open_out(path);
  out << "# " << header_comment << "\n";
  out << "run_id,method,passes,metric,value,seed\n";
  for (const auto& r : rows)
    out << r.run_id << ',' << r.method << ',' << r.passes << ',' << r.metric << ',' << fmt(r.value) << ','
        << r.seed << '\n';
}

std::vector<EvalRow> read_results_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read results file '" + path + "'");
  std::vector<EvalRow> rows;
  std::string line;
  bool header = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      header = true;
      continue;
    }
    std::stringstream ss(line);
    std::string f[6];
    for (auto& x : f)
      if (!std::getline(ss, x, ',')) throw ValidationError("malformed results row: " + line);
    rows.push_back({f[0], f[1], std::stoul(f[2]), f[3], std::stod(f[4]), std::stoull(f[5])});
  }
  return rows;
}

void write_timing_csv(const std::string& path, const std::vector<TimingRow>& rows, const std::string& header_comment) {
  auto out = open_out(path);
  out << "# " << header_comment << "\n";
  out << "run_id,method,seed,samples,wall_time_us\n";
  for (const auto& r : rows)
    out << r.run_id << ',' << r.method << ',' << r.seed << ',' << r.samples << ',' << fmt(r.wall_time_us) << '\n';
}

void write_points_csv(const std::string& path, const std::vector<BenchmarkResult::Point>& pts, std::size_t dim,
                      const std::string& header_comment) {
  auto out = open_out(path);
  out << "# " << header_comment << "\n";
  out << "method,sample_id,prompt_id";
  for (std::size_t k = 0; k < dim; ++k) out << ",ctx_" << k;
  for (std::size_t k = 0; k < dim; ++k) out << ",out_" << k;
  out << '\n';
  for (const auto& p : pts) {
    out << p.method << ',' << p.sample_id << ',' << p.prompt_id;
    for (double v : p.context) out << ',' << fmt(v);
    for (double v : p.output) out << ',' << fmt(v);
    out << '\n';
  }
}

}  // namespace eclab::eval
