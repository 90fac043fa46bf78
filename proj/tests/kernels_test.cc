#include "dupscan/kernels.h"

#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <random>
#include <vector>

namespace dupscan::kernels {
namespace {

std::vector<float> random_vec(std::mt19937& gen, size_t n) {
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  std::vector<float> v(n);
  for (float& x : v) x = dist(gen);
  return v;
}

double dot_ref(const float* a, const float* b, size_t n) {
  double s = 0.0;
  for (size_t i = 0; i < n; ++i) s += double(a[i]) * b[i];
  return s;
}

class IsaGuard {
 public:
  IsaGuard() : saved_(active_isa()) {}
  ~IsaGuard() { set_isa(saved_); }

 private:
  Isa saved_;
};

TEST(Kernels, ScalarMatchesDoubleReference) {
  std::mt19937 gen(1);
  for (size_t n : {0, 1, 7, 8, 9, 31, 128, 1000}) {
    const auto a = random_vec(gen, n), b = random_vec(gen, n);
    EXPECT_NEAR(scalar::dot(a.data(), b.data(), n), dot_ref(a.data(), b.data(), n), 1e-4) << n;
  }
}

TEST(Kernels, Avx2EquivalentToScalar) {
  if (!isa_supported(Isa::kAvx2)) GTEST_SKIP() << "no AVX2 on this machine";
  std::mt19937 gen(2);
  for (size_t n : {1, 3, 8, 15, 16, 17, 64, 127, 128, 129, 1031}) {
    const auto a = random_vec(gen, n), b = random_vec(gen, n);
    EXPECT_NEAR(avx2::dot(a.data(), b.data(), n), scalar::dot(a.data(), b.data(), n), 1e-5 * std::sqrt(n)) << n;

    auto y1 = random_vec(gen, n);
    auto y2 = y1;
    scalar::axpy(0.37f, a.data(), y1.data(), n);
    avx2::axpy(0.37f, a.data(), y2.data(), n);
    for (size_t i = 0; i < n; ++i) EXPECT_NEAR(y1[i], y2[i], 1e-6) << i;
  }
  for (auto [m, n, k] : {std::array<size_t, 3>{1, 1, 1}, {5, 7, 128}, {33, 17, 9}, {64, 64, 128}}) {
    const auto a = random_vec(gen, m * k), b = random_vec(gen, n * k);
    std::vector<float> c1(m * n), c2(m * n);
    scalar::gemm_nt(a.data(), m, b.data(), n, k, c1.data());
    avx2::gemm_nt(a.data(), m, b.data(), n, k, c2.data());
    for (size_t i = 0; i < m * n; ++i) EXPECT_NEAR(c1[i], c2[i], 1e-5 * std::sqrt(k));
  }
}

TEST(Kernels, Avx2GemmEntriesEqualDot) {
  // The matcher relies on gemm entries being bit-identical to dot products
  // so that similarity matrices of (a, b) and (b, a) are exact transposes.
  if (!isa_supported(Isa::kAvx2)) GTEST_SKIP() << "no AVX2 on this machine";
  std::mt19937 gen(3);
  const size_t m = 13, n = 11, k = 128;
  const auto a = random_vec(gen, m * k), b = random_vec(gen, n * k);
  std::vector<float> ab(m * n), ba(n * m);
  avx2::gemm_nt(a.data(), m, b.data(), n, k, ab.data());
  avx2::gemm_nt(b.data(), n, a.data(), m, k, ba.data());
  for (size_t i = 0; i < m; ++i) {
    for (size_t j = 0; j < n; ++j) {
      EXPECT_EQ(ab[i * n + j], avx2::dot(a.data() + i * k, b.data() + j * k, k));
      EXPECT_EQ(ab[i * n + j], ba[j * m + i]);
    }
  }
}

TEST(Kernels, DispatchFollowsSetIsa) {
  IsaGuard guard;
  std::mt19937 gen(4);
  const auto a = random_vec(gen, 100), b = random_vec(gen, 100);
  set_isa(Isa::kScalar);
  EXPECT_EQ(active_isa(), Isa::kScalar);
  EXPECT_EQ(dot(a, b), scalar::dot(a.data(), b.data(), 100));
  if (isa_supported(Isa::kAvx2)) {
    set_isa(Isa::kAvx2);
    EXPECT_EQ(active_isa(), Isa::kAvx2);
    EXPECT_EQ(dot(a, b), avx2::dot(a.data(), b.data(), 100));
  }
  EXPECT_TRUE(isa_supported(Isa::kScalar));
  EXPECT_EQ(isa_name(Isa::kScalar), "scalar");
}

TEST(Kernels, SpanSizeMismatchThrows) {
  std::vector<float> a(4), b(5);
  EXPECT_THROW(dot(a, b), std::invalid_argument);
  EXPECT_THROW(axpy(1.0f, a, b), std::invalid_argument);
}

}  // namespace
}  // namespace dupscan::kernels
