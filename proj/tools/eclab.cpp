// eclab: command-line front end for the conditioning lab.
//
// Exit codes: 0 success, 1 validation or usage error, 2 runtime failure.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "eclab/config.hpp"
#include "eclab/kernels.hpp"
#include "eclab/oracle.hpp"
#include "eclab/pipeline.hpp"

namespace fs = std::filesystem;
using namespace eclab;

namespace {

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config_path, "Run configuration JSON (defaults when omitted)");
  sub->add_option("--seed", c.seed, "Global seed; overrides the config file");
}

config::RunConfig load(const Common& c) {
  config::RunConfig rc = c.config_path.empty() ? config::RunConfig::defaults() : config::load_run_config(c.config_path);
  if (c.seed) rc.seed = *c.seed;
  rc.validate();
  return rc;
}

void log_line(const std::string& msg) { std::cerr << "[eclab] " << msg << '\n'; }

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

Vec parse_vec(const std::string& s) {
  Vec out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw ValidationError("cannot parse number '" + item + "' in '" + s + "'");
    }
  }
  return out;
}

void require_file(const std::string& path, const std::string& what) {
  if (!fs::exists(path)) throw ValidationError("missing " + what + " '" + path + "'");
}

struct LoadedVae {
  promptvae::PromptTable table;
  promptvae::PromptVae vae;
};

LoadedVae load_vae(const std::string& path) {
  require_file(path, "prompt VAE checkpoint");
  const auto j = pipeline::read_json(path);
  return {promptvae::table_from_json(j), promptvae::vae_from_json(j)};
}

train::Denoiser load_model(const std::string& path) {
  require_file(path, "model checkpoint");
  return train::denoiser_from_json(pipeline::read_json(path));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"eclab: explicit conditioning vs classifier-free guidance on toy editing tasks"};
  app.require_subcommand(1);

  // gen-data
  Common gd;
  std::size_t gd_n = 0;
  std::string gd_out;
  auto* gen = app.add_subcommand("gen-data", "Generate (context, prompt, target) triples as CSV");
  add_common(gen, gd);
  gen->add_option("--n", gd_n, "Number of triples (config n_train when omitted)");
  gen->add_option("--out", gd_out, "Output CSV")->required();

  // train-prompt-vae
  Common pv;
  std::string pv_out, pv_trace;
  auto* tpv = app.add_subcommand("train-prompt-vae", "Train the prompt VAE on the task's prompt table");
  add_common(tpv, pv);
  tpv->add_option("--out", pv_out, "Checkpoint JSON")->required();
  tpv->add_option("--trace", pv_trace, "Loss trace CSV");

  // train
  Common tr;
  std::string tr_mode = "implicit", tr_data, tr_vae, tr_out, tr_trace;
  bool tr_tokens = true;
  std::optional<std::size_t> tr_steps;
  auto* trn = app.add_subcommand("train", "Train a denoiser");
  add_common(trn, tr);
  trn->add_option("--mode", tr_mode, "implicit | explicit")->check(CLI::IsMember({"implicit", "explicit"}));
  trn->add_flag("--extra-tokens,!--no-extra-tokens", tr_tokens, "Explicit mode: feed the prompt embedding");
  trn->add_option("--data", tr_data, "Dataset CSV (generated from the config when omitted)");
  trn->add_option("--vae", tr_vae, "Prompt VAE checkpoint (source of prompt embeddings)")->required();
  trn->add_option("--steps", tr_steps, "Override training steps");
  trn->add_option("--out", tr_out, "Checkpoint JSON")->required();
  trn->add_option("--trace", tr_trace, "Loss trace CSV");

  // sample
  Common sa;
  std::string sa_model, sa_vae, sa_method = "ec_x1", sa_context, sa_out;
  int sa_prompt = 0;
  std::size_t sa_n = 16;
  auto* smp = app.add_subcommand("sample", "Draw edited samples for one (context, prompt) pair");
  add_common(smp, sa);
  smp->add_option("--model", sa_model, "Model checkpoint")->required();
  smp->add_option("--vae", sa_vae, "Prompt VAE checkpoint")->required();
  smp->add_option("--method", sa_method, "Guidance config name from the run config");
  smp->add_option("--context", sa_context, "Context point, comma separated")->required();
  smp->add_option("--prompt", sa_prompt, "Prompt id");
  smp->add_option("--n", sa_n, "Number of samples");
  smp->add_option("--out", sa_out, "Output CSV")->required();

  // eval
  Common ev;
  std::string ev_dir;
  auto* evl = app.add_subcommand("eval", "Benchmark checkpoints stored in a directory");
  add_common(evl, ev);
  evl->add_option("--dir", ev_dir, "Directory holding prompt_vae.json and model_*.json")->required();

  // oracle-check
  Common oc;
  std::string oc_model, oc_vae, oc_out;
  std::size_t oc_probes = 256;
  auto* orc = app.add_subcommand("oracle-check", "Compare an implicit model's score with the exact score");
  add_common(orc, oc);
  orc->add_option("--model", oc_model, "Implicit model checkpoint")->required();
  orc->add_option("--vae", oc_vae, "Prompt VAE checkpoint")->required();
  orc->add_option("--probes", oc_probes, "Probe points per time");
  orc->add_option("--out", oc_out, "Per-probe CSV")->required();

  // mollifier-demo
  std::string mo_out;
  std::vector<double> mo_deltas{0.2, 0.1, 0.05, 0.02, 0.01};
  auto* mol = app.add_subcommand("mollifier-demo", "Tabulate the mollifier's gradient bound against delta");
  mol->add_option("--delta", mo_deltas, "Delta values in (0, 0.5)");
  mol->add_option("--out", mo_out, "Output CSV")->required();

  // shape-check
  auto* shp = app.add_subcommand("shape-check", "Check the image-scale prompt VAE shape pipeline");

  // repro
  Common rp;
  std::string rp_out;
  auto* rep = app.add_subcommand("repro", "Run data -> prompt VAE -> trainings -> benchmark");
  add_common(rep, rp);
  rep->add_option("--out-dir", rp_out, "Output directory; overrides the config file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    if (*gen) {
      const auto c = load(gd);
      const std::size_t n = gd_n ? gd_n : c.n_train;
      const auto rows = data::gen_dataset(c.task, n, pipeline::component_seed(c, "data"));
      data::write_csv(gd_out, rows, c.task.dim, config::artifact_header(c));
      log_line("wrote " + std::to_string(rows.size()) + " triples to " + gd_out);
    } else if (*tpv) {
      const auto c = load(pv);
      const auto table = pipeline::make_prompt_table(c);
      const auto res = pipeline::fit_prompt_vae(c, table);
      pipeline::write_json(pv_out, promptvae::to_json(res.vae, table));
      if (!pv_trace.empty()) pipeline::write_vae_loss_csv(pv_trace, res.trace, config::artifact_header(c));
      log_line("prompt VAE loss " + fmt(res.trace.front().loss) + " -> " + fmt(res.trace.back().loss));
    } else if (*trn) {
      auto c = load(tr);
      const auto mode = train::mode_from_string(tr_mode);
      if (tr_steps) (mode == train::Mode::implicit ? c.train_implicit : c.train_explicit).steps = *tr_steps;
      c.validate();
      const auto lv = load_vae(tr_vae);
      std::vector<data::EditTriple> dataset;
      if (tr_data.empty()) {
        dataset = pipeline::make_dataset(c);
      } else {
        require_file(tr_data, "dataset");
        dataset = data::read_csv(tr_data);
      }
      const train::Conditioner cond{&lv.table, &lv.vae, c.ctx_std};
      const auto res = pipeline::fit_denoiser(c, mode, tr_tokens, dataset, cond);
      pipeline::write_json(tr_out, train::to_json(res.model));
      if (!tr_trace.empty()) {
        const auto name = pipeline::model_name(mode, res.model.extra_tokens);
        pipeline::write_loss_csv(tr_trace, res.trace, mode, pipeline::component_seed(c, "train-" + name),
                                 config::artifact_header(c));
      }
      log_line("final loss " + fmt(res.trace.back().loss));
    } else if (*smp) {
      const auto c = load(sa);
      const auto& g = config::find_guidance(c, sa_method);
      const auto model = load_model(sa_model);
      const auto lv = load_vae(sa_vae);
      const Vec ctx = parse_vec(sa_context);
      require_same_dim(ctx.size(), c.task.dim, "--context");
      c.task.prompt(sa_prompt);
      const train::Conditioner cond{&lv.table, &lv.vae, c.ctx_std};
      const Vec& pvec = cond.prompt_vec(sa_prompt);
      Rng rng = stream(c.seed, "sample");
      std::ofstream out(sa_out, std::ios::binary);
      if (!out) throw ValidationError("cannot write '" + sa_out + "'");
      out << "# " << config::artifact_header(c) << " method=" << g.name << " start="
          << (g.mode == sample::GuidanceMode::explicit_endpoint ? "fused_endpoint" : "standard_normal") << "\n";
      out << "sample_id";
      for (std::size_t k = 0; k < c.task.dim; ++k) out << ",out_" << k;
      out << ",denoiser_calls,wall_time_us\n";
      for (std::size_t i = 0; i < sa_n; ++i) {
        const Vec start = sample::draw_start(g, cond, ctx, sa_prompt, rng);
        const auto t0 = std::chrono::steady_clock::now();
        const auto r = sample::ddim_sample(model, c.schedule, start, {&ctx, &pvec}, g);
        const double us =
            std::chrono::duration<double, std::micro>(std::chrono::steady_clock::now() - t0).count();
        out << i;
        for (double v : r.final) out << ',' << fmt(v);
        out << ',' << r.denoiser_calls << ',' << fmt(us) << '\n';
      }
      log_line("wrote " + std::to_string(sa_n) + " samples to " + sa_out);
    } else if (*evl) {
      const auto c = load(ev);
      const auto r = pipeline::evaluate_dir(c, ev_dir, log_line);
      std::cout << r.summary.dump(2) << '\n';
    } else if (*orc) {
      const auto c = load(oc);
      const auto model = load_model(oc_model);
      const auto lv = load_vae(oc_vae);
      std::ofstream out(oc_out, std::ios::binary);
      if (!out) throw ValidationError("cannot write '" + oc_out + "'");
      out << "# " << config::artifact_header(c) << "\n";
      out << "t,probe,cosine\n";
      for (double t : {0.3, 0.5, 0.7}) {
        const auto cs = eval::oracle_agreement(model, lv.table, c.task, c.schedule, t, oc_probes,
                                               pipeline::component_seed(c, "oracle-check"));
        double mean = 0.0;
        for (std::size_t i = 0; i < cs.size(); ++i) {
          out << fmt(t) << ',' << i << ',' << fmt(cs[i]) << '\n';
          mean += cs[i];
        }
        std::printf("t=%.1f mean_cosine=%.6f\n", t, mean / static_cast<double>(cs.size()));
      }
    } else if (*mol) {
      for (double d : mo_deltas)
        require(d > 0.0 && d < 0.5, "mollifier-demo: delta must lie in (0, 0.5)");
      pipeline::write_mollifier_csv(mo_out, mo_deltas, "config_hash=none seed=none");
      for (double d : mo_deltas) std::printf("delta=%-6g grad_sup=%.6g\n", d, oracle::mollifier_grad_sup(d));
    } else if (*shp) {
      const auto rep_ = promptvae::shape_check_image_mode();
      for (const auto& s : rep_.stages)
        std::printf("%-40s %-14s %8zu %8zu %s\n", s.stage.c_str(), s.expected.c_str(), s.expected_elems,
                    s.actual_elems, s.pass ? "pass" : "FAIL");
      std::printf("%s\n", rep_.all_pass() ? "all stages pass" : "shape check FAILED");
      return rep_.all_pass() ? 0 : 2;
    } else if (*rep) {
      auto c = load(rp);
      if (!rp_out.empty()) c.output_dir = rp_out;
      const auto t0 = std::chrono::steady_clock::now();
      const auto r = pipeline::repro(c, c.output_dir, log_line);
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      for (const auto& g : c.guidance)
        std::printf("%-16s dvs=%.4f dcs=%.4f w1_sliced=%.4f mmd=%.4f calls=%.0f\n", g.name.c_str(),
                    eval::mean_metric(r.bench.rows, g.name, "dvs"), eval::mean_metric(r.bench.rows, g.name, "dcs"),
                    eval::mean_metric(r.bench.rows, g.name, "w1_sliced"),
                    eval::mean_metric(r.bench.rows, g.name, "mmd"),
                    eval::mean_metric(r.bench.rows, g.name, "denoiser_calls"));
      std::printf("results: %s (%.1f s, simd=%s)\n", r.results_path.c_str(), secs,
                  kernels::to_string(kernels::current_backend()));
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "runtime failure: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
