#include <arm_neon.h>

#include "dupscan/kernels.h"

namespace dupscan::kernels::neon {

namespace {

inline float tail(const float* a, const float* b, size_t from, size_t n, float acc) {
  for (size_t i = from; i < n; ++i) acc = __builtin_fmaf(a[i], b[i], acc);
  return acc;
}

}  // namespace

float dot(const float* a, const float* b, size_t n) {
  float32x4_t acc = vdupq_n_f32(0.0f);
  size_t i = 0;
  for (; i + 4 <= n; i += 4) acc = vfmaq_f32(acc, vld1q_f32(a + i), vld1q_f32(b + i));
  return tail(a, b, i, n, vaddvq_f32(acc));
}

void axpy(float alpha, const float* x, float* y, size_t n) {
  size_t i = 0;
  for (; i + 4 <= n; i += 4) vst1q_f32(y + i, vfmaq_n_f32(vld1q_f32(y + i), vld1q_f32(x + i), alpha));
  for (; i < n; ++i) y[i] = __builtin_fmaf(alpha, x[i], y[i]);
}

void gemm_nt(const float* a, size_t m, const float* b, size_t n, size_t k, float* c) {
  for (size_t i = 0; i < m; ++i) {
    for (size_t j = 0; j < n; ++j) c[i * n + j] = dot(a + i * k, b + j * k, k);
  }
}

}  // namespace dupscan::kernels::neon
