#pragma once

// Synthetic editing task. Contexts come from an isotropic Gaussian mixture;
// each prompt is an affine edit x = A c + b plus isotropic Gaussian noise, so
// every conditional p(x | c_I, c_P) is an exact Gaussian.

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "eclab/common.hpp"
#include "eclab/endpoint.hpp"

namespace eclab::data {

struct MixtureComponent {
  double weight;
  Vec mean;
  double var;  // isotropic covariance var * I
};

struct PromptEdit {
  int id;
  std::string name;
  std::vector<Vec> a;  // d x d, a[row][col]
  Vec b;
};

struct EditTask {
  std::size_t dim = 2;
  std::vector<MixtureComponent> context_mixture;
  std::vector<PromptEdit> prompts;
  double edit_noise_std = 0.1;

  /// Throws ValidationError on broken invariants (weights, dims, singular maps).
  void validate() const;

  const PromptEdit& prompt(int id) const;
  std::size_t index_of(int prompt_id) const;
  /// A_p c + b_p
  Vec apply_edit(int prompt_id, std::span<const double> context) const;
};

/// Three context clusters at (-2,0), (2,0), (0,2) with covariance 0.15 I and
/// four prompts: shift(+1.5,0), shift(0,+1.5), rotate(pi/2), scale(0.5).
EditTask default_task();

struct EditTriple {
  Vec context;
  int prompt_id;
  Vec target;
};

std::vector<EditTriple> gen_dataset(const EditTask& task, std::size_t n, std::uint64_t seed);

/// N(A_p c + b_p, edit_noise_std^2 I)
endpoint::DiagGaussian true_conditional(const EditTask& task, std::span<const double> context, int prompt_id);

/// Draw a context from the mixture.
Vec sample_context(const EditTask& task, Rng& rng);

double determinant(const std::vector<Vec>& a);

void write_csv(const std::string& path, const std::vector<EditTriple>& rows, std::size_t dim,
               const std::string& header_comment);
std::vector<EditTriple> read_csv(const std::string& path);

nlohmann::json to_json(const EditTask& t);
EditTask task_from_json(const nlohmann::json& j);

}  // namespace eclab::data
