#include "eclab/kernels.hpp"

namespace eclab::kernels {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void gemv_scalar(MatView w, const double* x, const double* bias, double* out) {
  for (std::size_t r = 0; r < w.rows; ++r) {
    const double* row = w.data + r * w.cols;
    double acc = 0.0;
    for (std::size_t c = 0; c < w.cols; ++c) acc += row[c] * x[c];
    out[r] = bias ? acc + bias[r] : acc;
  }
}

void gemv_t_scalar(MatView w, const double* g, double* out) {
  for (std::size_t r = 0; r < w.rows; ++r) {
    const double* row = w.data + r * w.cols;
    const double gr = g[r];
    for (std::size_t c = 0; c < w.cols; ++c) out[c] += gr * row[c];
  }
}

void ger_scalar(MutMatView w, const double* g, const double* x) {
  for (std::size_t r = 0; r < w.rows; ++r) {
    double* row = w.data + r * w.cols;
    const double gr = g[r];
    for (std::size_t c = 0; c < w.cols; ++c) row[c] += gr * x[c];
  }
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable table{"scalar", dot_scalar, axpy_scalar, gemv_scalar,
                                 gemv_t_scalar, ger_scalar};
  return table;
}

}  // namespace eclab::kernels
