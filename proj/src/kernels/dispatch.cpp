#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "eclab/kernels.hpp"

namespace eclab::kernels {

#if !defined(ECLAB_HAVE_AVX2)
const KernelTable* avx2_table() { return nullptr; }
#endif
#if !defined(ECLAB_HAVE_NEON)
const KernelTable* neon_table() { return nullptr; }
#endif

namespace {

const KernelTable* table_for(Backend b) {
  switch (b) {
    case Backend::scalar: return &scalar_table();
    case Backend::avx2: return avx2_table();
    case Backend::neon: return neon_table();
  }
  return nullptr;
}

Backend detect() {
  if (const char* env = std::getenv("ECLAB_SIMD"); env && std::string(env) == "scalar")
    return Backend::scalar;
  if (backend_available(Backend::avx2)) return Backend::avx2;
  if (backend_available(Backend::neon)) return Backend::neon;
  return Backend::scalar;
}

std::atomic<Backend>& backend_slot() {
  static std::atomic<Backend> slot{detect()};
  return slot;
}

}  // namespace

bool backend_available(Backend b) {
  switch (b) {
    case Backend::scalar: return true;
    case Backend::avx2:
#if defined(ECLAB_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Backend::neon:
#if defined(ECLAB_HAVE_NEON)
      return true;  // NEON is mandatory on aarch64
#else
      return false;
#endif
  }
  return false;
}

const KernelTable& active() { return *table_for(backend_slot().load(std::memory_order_relaxed)); }

void set_backend(Backend b) {
  if (!backend_available(b)) throw std::invalid_argument("kernel backend not available on this CPU");
  backend_slot().store(b, std::memory_order_relaxed);
}

Backend current_backend() { return backend_slot().load(std::memory_order_relaxed); }

const char* to_string(Backend b) {
  switch (b) {
    case Backend::scalar: return "scalar";
    case Backend::avx2: return "avx2";
    case Backend::neon: return "neon";
  }
  return "unknown";
}

}  // namespace eclab::kernels
