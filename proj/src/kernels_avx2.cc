// Compiled with -mavx2 -mfma; only called after a runtime CPU check.

#include <immintrin.h>

#include "dupscan/kernels.h"

namespace dupscan::kernels::avx2 {

namespace {

inline float hsum(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_add_ps(lo, hi);
  __m128 shuf = _mm_movehdup_ps(lo);
  __m128 sums = _mm_add_ps(lo, shuf);
  shuf = _mm_movehl_ps(shuf, sums);
  sums = _mm_add_ss(sums, shuf);
  return _mm_cvtss_f32(sums);
}

// Tail handled with scalar FMA so every (i, j) entry of gemm_nt is bitwise
// identical to dot(a_i, b_j) and to dot(b_j, a_i).
inline float tail(const float* a, const float* b, size_t from, size_t n, float acc) {
  for (size_t i = from; i < n; ++i) acc = __builtin_fmaf(a[i], b[i], acc);
  return acc;
}

}  // namespace

float dot(const float* a, const float* b, size_t n) {
  __m256 acc = _mm256_setzero_ps();
  size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc);
  }
  return tail(a, b, i, n, hsum(acc));
}

void axpy(float alpha, const float* x, float* y, size_t n) {
  const __m256 va = _mm256_set1_ps(alpha);
  size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(y + i, _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
  }
  for (; i < n; ++i) y[i] = __builtin_fmaf(alpha, x[i], y[i]);
}

void gemm_nt(const float* a, size_t m, const float* b, size_t n, size_t k, float* c) {
  const size_t k8 = k & ~size_t{7};
  for (size_t i = 0; i < m; ++i) {
    const float* ai = a + i * k;
    float* ci = c + i * n;
    size_t j = 0;
    for (; j + 4 <= n; j += 4) {
      const float* b0 = b + (j + 0) * k;
      const float* b1 = b + (j + 1) * k;
      const float* b2 = b + (j + 2) * k;
      const float* b3 = b + (j + 3) * k;
      __m256 s0 = _mm256_setzero_ps();
      __m256 s1 = _mm256_setzero_ps();
      __m256 s2 = _mm256_setzero_ps();
      __m256 s3 = _mm256_setzero_ps();
      for (size_t p = 0; p < k8; p += 8) {
        const __m256 va = _mm256_loadu_ps(ai + p);
        s0 = _mm256_fmadd_ps(va, _mm256_loadu_ps(b0 + p), s0);
        s1 = _mm256_fmadd_ps(va, _mm256_loadu_ps(b1 + p), s1);
        s2 = _mm256_fmadd_ps(va, _mm256_loadu_ps(b2 + p), s2);
        s3 = _mm256_fmadd_ps(va, _mm256_loadu_ps(b3 + p), s3);
      }
      ci[j + 0] = tail(ai, b0, k8, k, hsum(s0));
      ci[j + 1] = tail(ai, b1, k8, k, hsum(s1));
      ci[j + 2] = tail(ai, b2, k8, k, hsum(s2));
      ci[j + 3] = tail(ai, b3, k8, k, hsum(s3));
    }
    for (; j < n; ++j) ci[j] = dot(ai, b + j * k, k);
  }
}

}  // namespace dupscan::kernels::avx2
