#pragma once

// Arithmetic inner loops shared by the feature extractor, the matcher and
// the graph interpreter. Each kernel has a scalar reference implementation
// and vectorized variants; the variant is selected once at startup from the
// CPU feature set (override with DUPSCAN_ISA=scalar|avx2|neon).

#include <cstddef>
#include <span>
#include <string_view>

namespace dupscan::kernels {

enum class Isa { kScalar, kAvx2, kNeon };

std::string_view isa_name(Isa isa);
bool isa_supported(Isa isa);
Isa active_isa();
// Not thread-safe with respect to concurrently running kernels; intended for
// tests and benchmark setup.
void set_isa(Isa isa);

float dot(std::span<const float> a, std::span<const float> b);
// y += alpha * x
void axpy(float alpha, std::span<const float> x, std::span<float> y);
// c[i * n + j] = <a_i, b_j> for row-major a (m x k) and b (n x k).
void gemm_nt(const float* a, size_t m, const float* b, size_t n, size_t k, float* c);

// Per-ISA entry points, exposed for equivalence testing.
namespace scalar {
float dot(const float* a, const float* b, size_t n);
void axpy(float alpha, const float* x, float* y, size_t n);
void gemm_nt(const float* a, size_t m, const float* b, size_t n, size_t k, float* c);
}  // namespace scalar

namespace avx2 {
float dot(const float* a, const float* b, size_t n);
void axpy(float alpha, const float* x, float* y, size_t n);
void gemm_nt(const float* a, size_t m, const float* b, size_t n, size_t k, float* c);
}  // namespace avx2

namespace neon {
float dot(const float* a, const float* b, size_t n);
void axpy(float alpha, const float* x, float* y, size_t n);
void gemm_nt(const float* a, size_t m, const float* b, size_t n, size_t k, float* c);
}  // namespace neon

}  // namespace dupscan::kernels
