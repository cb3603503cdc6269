#include <immintrin.h>

#include <cmath>

#include "mifgsm/simd/kernels.hpp"

namespace mifgsm::simd {
namespace {

inline float clamp_pixel(float v) {
  v = v > 0.0f ? v : 0.0f;
  return v < 255.0f ? v : 255.0f;
}

void masked_sign_step(const float* cur, const float* inv, const float* mask, const float* grad,
                      float step, float* out, std::size_t n) {
  const __m256 zero = _mm256_setzero_ps();
  const __m256 one = _mm256_set1_ps(1.0f);
  const __m256 hi = _mm256_set1_ps(255.0f);
  const __m256 vstep = _mm256_set1_ps(step);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 g = _mm256_loadu_ps(grad + i);
    const __m256 pos = _mm256_and_ps(_mm256_cmp_ps(g, zero, _CMP_GT_OQ), one);
    const __m256 neg = _mm256_and_ps(_mm256_cmp_ps(g, zero, _CMP_LT_OQ), one);
    const __m256 sign = _mm256_sub_ps(pos, neg);
    const __m256 moved = _mm256_add_ps(_mm256_loadu_ps(cur + i), _mm256_mul_ps(vstep, sign));
    __m256 v = _mm256_add_ps(_mm256_loadu_ps(inv + i), _mm256_mul_ps(_mm256_loadu_ps(mask + i), moved));
    // max/min return the second operand on NaN, matching clamp_pixel.
    v = _mm256_max_ps(v, zero);
    v = _mm256_min_ps(v, hi);
    _mm256_storeu_ps(out + i, v);
  }
  for (; i < n; ++i) {
    const float sign = static_cast<float>((grad[i] > 0.0f) - (grad[i] < 0.0f));
    out[i] = clamp_pixel(inv[i] + mask[i] * (cur[i] + step * sign));
  }
}

void quantize_u8(const float* in, std::uint8_t* out, std::size_t n) {
  const __m256 zero = _mm256_setzero_ps();
  const __m256 hi = _mm256_set1_ps(255.0f);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 v = _mm256_max_ps(_mm256_loadu_ps(in + i), zero);
    v = _mm256_min_ps(v, hi);
    v = _mm256_round_ps(v, _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
    const __m256i q = _mm256_cvtps_epi32(v);
    // 8 x int32 in [0,255] -> 8 bytes.
    const __m128i lo = _mm256_castsi256_si128(q);
    const __m128i hi4 = _mm256_extracti128_si256(q, 1);
    const __m128i w16 = _mm_packus_epi32(lo, hi4);
    const __m128i b8 = _mm_packus_epi16(w16, w16);
    _mm_storel_epi64(reinterpret_cast<__m128i*>(out + i), b8);
  }
  for (; i < n; ++i) out[i] = static_cast<std::uint8_t>(std::nearbyint(clamp_pixel(in[i])));
}

double dot(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_add_pd(acc0, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    acc1 = _mm256_add_pd(acc1, _mm256_mul_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4)));
  }
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, _mm256_add_pd(acc0, acc1));
  double acc = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), _mm256_mul_pd(va, _mm256_loadu_pd(x + i))));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

}  // namespace

namespace detail {
const KernelTable* avx2_table() {
  static const KernelTable table{Isa::avx2, masked_sign_step, quantize_u8, dot, axpy};
  return &table;
}
}  // namespace detail

}  // namespace mifgsm::simd
