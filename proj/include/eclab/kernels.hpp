#pragma once

// Dense double-precision kernels behind the MLP. Each kernel has a scalar
// reference implementation and, where the target supports it, an AVX2/FMA
// (x86-64) or NEON (aarch64) variant. The active table is chosen once at
// startup from cpuid; ECLAB_SIMD=scalar in the environment forces the
// reference path.

#include <cstddef>
#include <span>
#include <string_view>

namespace eclab::kernels {

/// Row-major matrix view: rows x cols, element (r, c) at data[r * cols + c].
struct MatView {
  const double* data;
  std::size_t rows;
  std::size_t cols;
};

struct MutMatView {
  double* data;
  std::size_t rows;
  std::size_t cols;
};

struct KernelTable {
  std::string_view name;
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // out = W x + bias (bias may be null)
  void (*gemv)(MatView w, const double* x, const double* bias, double* out);
  // out += W^T g
  void (*gemv_t)(MatView w, const double* g, double* out);
  // W += g x^T
  void (*ger)(MutMatView w, const double* g, const double* x);
};

enum class Backend { scalar, avx2, neon };

const char* to_string(Backend b);

const KernelTable& scalar_table();
const KernelTable* avx2_table();  // null when not compiled in
const KernelTable* neon_table();  // null when not compiled in

/// True when the running CPU can execute the given backend.
bool backend_available(Backend b);

/// Currently active table.
const KernelTable& active();

/// Overrides the active table. Throws std::invalid_argument when the backend
/// is unavailable on this machine.
void set_backend(Backend b);
Backend current_backend();

// Convenience wrappers over the active table.
inline double dot(std::span<const double> a, std::span<const double> b) {
  return active().dot(a.data(), b.data(), a.size());
}
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  active().axpy(alpha, x.data(), y.data(), x.size());
}

}  // namespace eclab::kernels
