#include "dupscan/kernels.h"

#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

namespace dupscan::kernels {

namespace scalar {

float dot(const float* a, const float* b, size_t n) {
  float sum = 0.0f;
  for (size_t i = 0; i < n; ++i) sum += a[i] * b[i];
  return sum;
}

void axpy(float alpha, const float* x, float* y, size_t n) {
  for (size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void gemm_nt(const float* a, size_t m, const float* b, size_t n, size_t k, float* c) {
  for (size_t i = 0; i < m; ++i) {
    for (size_t j = 0; j < n; ++j) c[i * n + j] = dot(a + i * k, b + j * k, k);
  }
}

}  // namespace scalar

#if !defined(DUPSCAN_HAVE_AVX2_TU)
namespace avx2 {
float dot(const float* a, const float* b, size_t n) { return scalar::dot(a, b, n); }
void axpy(float alpha, const float* x, float* y, size_t n) { scalar::axpy(alpha, x, y, n); }
void gemm_nt(const float* a, size_t m, const float* b, size_t n, size_t k, float* c) {
  scalar::gemm_nt(a, m, b, n, k, c);
}
}  // namespace avx2
#endif

#if !defined(DUPSCAN_HAVE_NEON_TU)
namespace neon {
float dot(const float* a, const float* b, size_t n) { return scalar::dot(a, b, n); }
void axpy(float alpha, const float* x, float* y, size_t n) { scalar::axpy(alpha, x, y, n); }
void gemm_nt(const float* a, size_t m, const float* b, size_t n, size_t k, float* c) {
  scalar::gemm_nt(a, m, b, n, k, c);
}
}  // namespace neon
#endif

namespace {

Isa detect_best() {
#if defined(DUPSCAN_HAVE_AVX2_TU)
  if (isa_supported(Isa::kAvx2)) return Isa::kAvx2;
#endif
#if defined(DUPSCAN_HAVE_NEON_TU)
  return Isa::kNeon;
#endif
  return Isa::kScalar;
}

Isa initial_isa() {
  if (const char* env = std::getenv("DUPSCAN_ISA")) {
    const std::string want = env;
    for (Isa isa : {Isa::kScalar, Isa::kAvx2, Isa::kNeon}) {
      if (want == isa_name(isa) && isa_supported(isa)) return isa;
    }
  }
  return detect_best();
}

std::atomic<Isa>& active() {
  static std::atomic<Isa> isa{initial_isa()};
  return isa;
}

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::kScalar: return "scalar";
    case Isa::kAvx2: return "avx2";
    case Isa::kNeon: return "neon";
  }
  return "unknown";
}

bool isa_supported(Isa isa) {
  switch (isa) {
    case Isa::kScalar:
      return true;
    case Isa::kAvx2:
#if defined(DUPSCAN_HAVE_AVX2_TU)
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Isa::kNeon:
#if defined(DUPSCAN_HAVE_NEON_TU)
      return true;
#else
      return false;
#endif
  }
  return false;
}

Isa active_isa() { return active().load(std::memory_order_relaxed); }

void set_isa(Isa isa) {
  if (!isa_supported(isa)) {
    throw std::invalid_argument("ISA not supported on this CPU: " + std::string(isa_name(isa)));
  }
  active().store(isa, std::memory_order_relaxed);
}

float dot(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw std::invalid_argument("dot: length mismatch");
  switch (active_isa()) {
    case Isa::kAvx2: return avx2::dot(a.data(), b.data(), a.size());
    case Isa::kNeon: return neon::dot(a.data(), b.data(), a.size());
    default: return scalar::dot(a.data(), b.data(), a.size());
  }
}

void axpy(float alpha, std::span<const float> x, std::span<float> y) {
  if (x.size() != y.size()) throw std::invalid_argument("axpy: length mismatch");
  switch (active_isa()) {
    case Isa::kAvx2: avx2::axpy(alpha, x.data(), y.data(), x.size()); break;
    case Isa::kNeon: neon::axpy(alpha, x.data(), y.data(), x.size()); break;
    default: scalar::axpy(alpha, x.data(), y.data(), x.size()); break;
  }
}

void gemm_nt(const float* a, size_t m, const float* b, size_t n, size_t k, float* c) {
  switch (active_isa()) {
    case Isa::kAvx2: avx2::gemm_nt(a, m, b, n, k, c); break;
    case Isa::kNeon: neon::gemm_nt(a, m, b, n, k, c); break;
    default: scalar::gemm_nt(a, m, b, n, k, c); break;
  }
}

}  // namespace dupscan::kernels
