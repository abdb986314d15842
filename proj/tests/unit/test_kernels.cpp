#include <gtest/gtest.h>

#include <cmath>

#include "eclab/kernels.hpp"
#include "eclab/rng.hpp"

using namespace eclab;
using kernels::Backend;

namespace {

// Straight-line reference, independent of every kernel table.
double ref_dot(const Vec& a, const Vec& b) {
  long double s = 0.0L;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<long double>(a[i]) * b[i];
  return static_cast<double>(s);
}

std::vector<const kernels::KernelTable*> tables() {
  std::vector<const kernels::KernelTable*> out{&kernels::scalar_table()};
  if (kernels::backend_available(Backend::avx2)) out.push_back(kernels::avx2_table());
  if (kernels::backend_available(Backend::neon)) out.push_back(kernels::neon_table());
  return out;
}

double tol(double scale, std::size_t n) { return 1e-14 * scale * static_cast<double>(n + 1); }

}  // namespace

TEST(Kernels, ScalarAlwaysAvailable) {
  EXPECT_TRUE(kernels::backend_available(Backend::scalar));
  EXPECT_STREQ(kernels::to_string(Backend::avx2), "avx2");
}

TEST(Kernels, DotMatchesReferenceAcrossSizesAndBackends) {
  Rng rng(1);
  for (const auto* t : tables()) {
    for (std::size_t n : {0, 1, 3, 4, 5, 7, 8, 9, 15, 16, 17, 31, 64, 129}) {
      const Vec a = rng.normal_vec(n), b = rng.normal_vec(n);
      double scale = 0.0;
      for (std::size_t i = 0; i < n; ++i) scale += std::abs(a[i] * b[i]);
      EXPECT_NEAR(t->dot(a.data(), b.data(), n), ref_dot(a, b), tol(scale, n)) << "n=" << n;
    }
  }
}

TEST(Kernels, AxpyMatchesReference) {
  Rng rng(2);
  for (const auto* t : tables()) {
    for (std::size_t n : {1, 2, 5, 8, 13, 33}) {
      const Vec x = rng.normal_vec(n);
      Vec y = rng.normal_vec(n);
      Vec expect = y;
      for (std::size_t i = 0; i < n; ++i) expect[i] += 0.7 * x[i];
      t->axpy(0.7, x.data(), y.data(), n);
      for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(y[i], expect[i], 1e-15 * (std::abs(expect[i]) + 1));
    }
  }
}

TEST(Kernels, GemvFamilyEquivalentToScalar) {
  Rng rng(3);
  const auto& ref = kernels::scalar_table();
  for (const auto* t : tables()) {
    for (auto [rows, cols] : std::vector<std::pair<std::size_t, std::size_t>>{
             {1, 1}, {3, 5}, {4, 8}, {5, 9}, {7, 17}, {16, 16}, {33, 130}}) {
      Vec w = rng.normal_vec(rows * cols);
      const Vec x = rng.normal_vec(cols), bias = rng.normal_vec(rows), g = rng.normal_vec(rows);
      const kernels::MatView mv{w.data(), rows, cols};

      Vec o_ref(rows), o(rows);
      ref.gemv(mv, x.data(), bias.data(), o_ref.data());
      t->gemv(mv, x.data(), bias.data(), o.data());
      for (std::size_t r = 0; r < rows; ++r) EXPECT_NEAR(o[r], o_ref[r], tol(10.0, cols));

      ref.gemv(mv, x.data(), nullptr, o_ref.data());
      t->gemv(mv, x.data(), nullptr, o.data());
      for (std::size_t r = 0; r < rows; ++r) EXPECT_NEAR(o[r], o_ref[r], tol(10.0, cols));

      Vec gt_ref(cols, 0.5), gt(cols, 0.5);
      ref.gemv_t(mv, g.data(), gt_ref.data());
      t->gemv_t(mv, g.data(), gt.data());
      for (std::size_t c = 0; c < cols; ++c) EXPECT_NEAR(gt[c], gt_ref[c], tol(10.0, rows));

      Vec w2 = w;
      ref.ger({w.data(), rows, cols}, g.data(), x.data());
      t->ger({w2.data(), rows, cols}, g.data(), x.data());
      for (std::size_t i = 0; i < w.size(); ++i) EXPECT_NEAR(w2[i], w[i], 1e-14 * (std::abs(w[i]) + 1));
    }
  }
}

TEST(Kernels, SetBackendSwitchesActiveTable) {
  const Backend before = kernels::current_backend();
  kernels::set_backend(Backend::scalar);
  EXPECT_EQ(kernels::current_backend(), Backend::scalar);
  EXPECT_EQ(&kernels::active(), &kernels::scalar_table());
  if (!kernels::backend_available(Backend::neon)) EXPECT_THROW(kernels::set_backend(Backend::neon), std::invalid_argument);
  kernels::set_backend(before);
}
