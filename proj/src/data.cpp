#include "eclab/data.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <Eigen/Dense>

namespace eclab::data {

double determinant(const std::vector<Vec>& a) {
  const auto n = static_cast<Eigen::Index>(a.size());
  Eigen::MatrixXd m(n, n);
  for (Eigen::Index r = 0; r < n; ++r) {
    require_same_dim(a[r].size(), a.size(), "edit matrix row");
    for (Eigen::Index c = 0; c < n; ++c) m(r, c) = a[r][c];
  }
  return m.determinant();
}

void EditTask::validate() const {
  require(dim >= 1, "task: dim must be positive");
  require(!context_mixture.empty(), "task: empty context mixture");
  require(!prompts.empty(), "task: no prompts");
  require(edit_noise_std > 0.0, "task: edit_noise_std must be positive");
  double total = 0.0;
  for (const auto& c : context_mixture) {
    require(c.weight > 0.0, "task: mixture weights must be positive");
    require(c.var > 0.0, "task: mixture variances must be positive");
    require_same_dim(c.mean.size(), dim, "task mixture mean");
    total += c.weight;
  }
  require(std::abs(total - 1.0) < 1e-9, "task: mixture weights must sum to 1");
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    const auto& p = prompts[i];
    require_same_dim(p.a.size(), dim, "task prompt matrix");
    require_same_dim(p.b.size(), dim, "task prompt offset");
    require(std::abs(determinant(p.a)) > 1e-9, "task: prompt '" + p.name + "' has a singular edit map");
    require(p.id >= 0, "task: prompt ids must be non-negative");
    for (std::size_t j = 0; j < i; ++j) require(prompts[j].id != p.id, "task: duplicate prompt id");
  }
}

std::size_t EditTask::index_of(int prompt_id) const {
  for (std::size_t i = 0; i < prompts.size(); ++i)
    if (prompts[i].id == prompt_id) return i;
  throw ValidationError("unknown prompt id " + std::to_string(prompt_id));
}

const PromptEdit& EditTask::prompt(int id) const { return prompts[index_of(id)]; }

Vec EditTask::apply_edit(int prompt_id, std::span<const double> context) const {
  const PromptEdit& p = prompt(prompt_id);
  require_same_dim(context.size(), dim, "apply_edit context");
  Vec out(p.b);
  for (std::size_t r = 0; r < dim; ++r)
    for (std::size_t c = 0; c < dim; ++c) out[r] += p.a[r][c] * context[c];
  return out;
}

EditTask default_task() {
  EditTask t;
  t.dim = 2;
  const double w = 1.0 / 3.0;
  t.context_mixture = {{w, {-2.0, 0.0}, 0.15}, {w, {2.0, 0.0}, 0.15}, {w, {0.0, 2.0}, 0.15}};
  const std::vector<Vec> eye{{1.0, 0.0}, {0.0, 1.0}};
  t.prompts = {
      {0, "shift_x", eye, {1.5, 0.0}},
      {1, "shift_y", eye, {0.0, 1.5}},
      {2, "rotate_90", {{0.0, -1.0}, {1.0, 0.0}}, {0.0, 0.0}},
      {3, "scale_half", {{0.5, 0.0}, {0.0, 0.5}}, {0.0, 0.0}},
  };
  t.edit_noise_std = 0.1;
  return t;
}

Vec sample_context(const EditTask& task, Rng& rng) {
  const double u = rng.uniform();
  std::size_t k = 0;
  double acc = task.context_mixture[0].weight;
  while (u >= acc && k + 1 < task.context_mixture.size()) acc += task.context_mixture[++k].weight;
  const auto& comp = task.context_mixture[k];
  Vec c(task.dim);
  const double sd = std::sqrt(comp.var);
  for (std::size_t i = 0; i < task.dim; ++i) c[i] = comp.mean[i] + sd * rng.normal();
  return c;
}

std::vector<EditTriple> gen_dataset(const EditTask& task, std::size_t n, std::uint64_t seed) {
  task.validate();
  require(n >= 1, "gen_dataset: n must be at least 1");
  Rng rng(seed);
  std::vector<EditTriple> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    EditTriple tr;
    tr.context = sample_context(task, rng);
    tr.prompt_id = task.prompts[rng.index(task.prompts.size())].id;
    tr.target = task.apply_edit(tr.prompt_id, tr.context);
    for (auto& v : tr.target) v += task.edit_noise_std * rng.normal();
    out.push_back(std::move(tr));
  }
  return out;
}

endpoint::DiagGaussian true_conditional(const EditTask& task, std::span<const double> context, int prompt_id) {
  const double var = task.edit_noise_std * task.edit_noise_std;
  return endpoint::DiagGaussian(task.apply_edit(prompt_id, context), Vec(task.dim, var));
}

void write_csv(const std::string& path, const std::vector<EditTriple>& rows, std::size_t dim,
               const std::string& header_comment) {
  std::ofstream f(path);
  if (!f) throw ValidationError("cannot write '" + path + "'");
  f.precision(17);
  if (!header_comment.empty()) f << "# " << header_comment << "\n";
  for (std::size_t k = 0; k < dim; ++k) f << "ctx_" << k << ",";
  f << "prompt_id";
  for (std::size_t k = 0; k < dim; ++k) f << ",tgt_" << k;
  f << "\n";
  for (const auto& r : rows) {
    for (double v : r.context) f << v << ",";
    f << r.prompt_id;
    for (double v : r.target) f << "," << v;
    f << "\n";
  }
}

std::vector<EditTriple> read_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ValidationError("cannot read dataset '" + path + "'");
  std::string line;
  std::size_t dim = 0;
  std::vector<EditTriple> rows;
  bool header = false;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    if (!header) {
      require(cells.size() % 2 == 1 && cells.size() >= 3, "dataset CSV: bad header");
      dim = (cells.size() - 1) / 2;
      require(cells[dim] == "prompt_id", "dataset CSV: bad header");
      header = true;
      continue;
    }
    require(cells.size() == 2 * dim + 1, "dataset CSV: bad row width");
    EditTriple tr;
    try {
      for (std::size_t k = 0; k < dim; ++k) tr.context.push_back(std::stod(cells[k]));
      tr.prompt_id = std::stoi(cells[dim]);
      for (std::size_t k = 0; k < dim; ++k) tr.target.push_back(std::stod(cells[dim + 1 + k]));
    } catch (const std::exception&) {
      throw ValidationError("dataset CSV: unparsable row '" + line + "'");
    }
    rows.push_back(std::move(tr));
  }
  require(header, "dataset CSV: missing header");
  return rows;
}

nlohmann::json to_json(const EditTask& t) {
  nlohmann::json mix = nlohmann::json::array();
  for (const auto& c : t.context_mixture) mix.push_back({{"weight", c.weight}, {"mean", c.mean}, {"var", c.var}});
  nlohmann::json prompts = nlohmann::json::array();
  for (const auto& p : t.prompts) prompts.push_back({{"id", p.id}, {"name", p.name}, {"a", p.a}, {"b", p.b}});
  return {{"dim", t.dim}, {"context_mixture", mix}, {"prompts", prompts}, {"edit_noise_std", t.edit_noise_std}};
}

EditTask task_from_json(const nlohmann::json& j) {
  EditTask t;
  try {
    t.dim = j.at("dim").get<std::size_t>();
    t.context_mixture.clear();
    for (const auto& c : j.at("context_mixture"))
      t.context_mixture.push_back({c.at("weight").get<double>(), c.at("mean").get<Vec>(), c.at("var").get<double>()});
    t.prompts.clear();
    for (const auto& p : j.at("prompts"))
      t.prompts.push_back({p.at("id").get<int>(), p.value("name", std::string{}), p.at("a").get<std::vector<Vec>>(),
                           p.at("b").get<Vec>()});
    t.edit_noise_std = j.at("edit_noise_std").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("task config: ") + e.what());
  }
  t.validate();
  return t;
}

}  // namespace eclab::data
