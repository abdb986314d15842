#include <arm_neon.h>

#include "eclab/kernels.hpp"

namespace eclab::kernels {
namespace {

double dot_neon(const double* a, const double* b, std::size_t n) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc0 = vfmaq_f64(acc0, vld1q_f64(a + i), vld1q_f64(b + i));
    acc1 = vfmaq_f64(acc1, vld1q_f64(a + i + 2), vld1q_f64(b + i + 2));
  }
  double acc = vaddvq_f64(vaddq_f64(acc0, acc1));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy_neon(double alpha, const double* x, double* y, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(alpha);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), va, vld1q_f64(x + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void gemv_neon(MatView w, const double* x, const double* bias, double* out) {
  for (std::size_t r = 0; r < w.rows; ++r) {
    const double s = dot_neon(w.data + r * w.cols, x, w.cols);
    out[r] = bias ? s + bias[r] : s;
  }
}

void gemv_t_neon(MatView w, const double* g, double* out) {
  for (std::size_t r = 0; r < w.rows; ++r) axpy_neon(g[r], w.data + r * w.cols, out, w.cols);
}

void ger_neon(MutMatView w, const double* g, const double* x) {
  for (std::size_t r = 0; r < w.rows; ++r) axpy_neon(g[r], x, w.data + r * w.cols, w.cols);
}

}  // namespace

const KernelTable* neon_table() {
  static const KernelTable table{"neon", dot_neon, axpy_neon, gemv_neon, gemv_t_neon, ger_neon};
  return &table;
}

}  // namespace eclab::kernels
