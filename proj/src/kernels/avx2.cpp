// Compiled with -mavx2 -mfma; only reached after a cpuid check.
#include <immintrin.h>

#include "eclab/kernels.hpp"

namespace eclab::kernels {
namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d sh = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4)
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void gemv_avx2(MatView w, const double* x, const double* bias, double* out) {
  const std::size_t cols = w.cols;
  std::size_t r = 0;
  // Four rows share each load of x.
  for (; r + 4 <= w.rows; r += 4) {
    const double* r0 = w.data + r * cols;
    const double* r1 = r0 + cols;
    const double* r2 = r1 + cols;
    const double* r3 = r2 + cols;
    __m256d a0 = _mm256_setzero_pd(), a1 = _mm256_setzero_pd();
    __m256d a2 = _mm256_setzero_pd(), a3 = _mm256_setzero_pd();
    std::size_t c = 0;
    for (; c + 4 <= cols; c += 4) {
      const __m256d vx = _mm256_loadu_pd(x + c);
      a0 = _mm256_fmadd_pd(_mm256_loadu_pd(r0 + c), vx, a0);
      a1 = _mm256_fmadd_pd(_mm256_loadu_pd(r1 + c), vx, a1);
      a2 = _mm256_fmadd_pd(_mm256_loadu_pd(r2 + c), vx, a2);
      a3 = _mm256_fmadd_pd(_mm256_loadu_pd(r3 + c), vx, a3);
    }
    double s0 = hsum(a0), s1 = hsum(a1), s2 = hsum(a2), s3 = hsum(a3);
    for (; c < cols; ++c) {
      s0 += r0[c] * x[c];
      s1 += r1[c] * x[c];
      s2 += r2[c] * x[c];
      s3 += r3[c] * x[c];
    }
    out[r] = bias ? s0 + bias[r] : s0;
    out[r + 1] = bias ? s1 + bias[r + 1] : s1;
    out[r + 2] = bias ? s2 + bias[r + 2] : s2;
    out[r + 3] = bias ? s3 + bias[r + 3] : s3;
  }
  for (; r < w.rows; ++r) {
    const double s = dot_avx2(w.data + r * cols, x, cols);
    out[r] = bias ? s + bias[r] : s;
  }
}

void gemv_t_avx2(MatView w, const double* g, double* out) {
  for (std::size_t r = 0; r < w.rows; ++r) axpy_avx2(g[r], w.data + r * w.cols, out, w.cols);
}

void ger_avx2(MutMatView w, const double* g, const double* x) {
  for (std::size_t r = 0; r < w.rows; ++r) axpy_avx2(g[r], x, w.data + r * w.cols, w.cols);
}

}  // namespace

const KernelTable* avx2_table() {
  static const KernelTable table{"avx2", dot_avx2, axpy_avx2, gemv_avx2, gemv_t_avx2, ger_avx2};
  return &table;
}

}  // namespace eclab::kernels
