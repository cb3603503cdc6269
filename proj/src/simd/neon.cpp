#include <arm_neon.h>

#include <cmath>

#include "mifgsm/simd/kernels.hpp"

namespace mifgsm::simd {
namespace {

inline float clamp_pixel(float v) {
  v = v > 0.0f ? v : 0.0f;
  return v < 255.0f ? v : 255.0f;
}

// vmaxq/vminq propagate NaN; compare-and-select keeps the scalar semantics.
inline float32x4_t clamp_pixel(float32x4_t v) {
  const float32x4_t zero = vdupq_n_f32(0.0f);
  const float32x4_t hi = vdupq_n_f32(255.0f);
  v = vbslq_f32(vcgtq_f32(v, zero), v, zero);
  return vbslq_f32(vcltq_f32(v, hi), v, hi);
}

void masked_sign_step(const float* cur, const float* inv, const float* mask, const float* grad,
                      float step, float* out, std::size_t n) {
  const float32x4_t zero = vdupq_n_f32(0.0f);
  const uint32x4_t one_bits = vreinterpretq_u32_f32(vdupq_n_f32(1.0f));
  const float32x4_t vstep = vdupq_n_f32(step);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const float32x4_t g = vld1q_f32(grad + i);
    const float32x4_t pos = vreinterpretq_f32_u32(vandq_u32(vcgtq_f32(g, zero), one_bits));
    const float32x4_t neg = vreinterpretq_f32_u32(vandq_u32(vcltq_f32(g, zero), one_bits));
    const float32x4_t sign = vsubq_f32(pos, neg);
    const float32x4_t moved = vaddq_f32(vld1q_f32(cur + i), vmulq_f32(vstep, sign));
    const float32x4_t v = vaddq_f32(vld1q_f32(inv + i), vmulq_f32(vld1q_f32(mask + i), moved));
    vst1q_f32(out + i, clamp_pixel(v));
  }
  for (; i < n; ++i) {
    const float sign = static_cast<float>((grad[i] > 0.0f) - (grad[i] < 0.0f));
    out[i] = clamp_pixel(inv[i] + mask[i] * (cur[i] + step * sign));
  }
}

void quantize_u8(const float* in, std::uint8_t* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const uint32x4_t a = vcvtq_u32_f32(vrndnq_f32(clamp_pixel(vld1q_f32(in + i))));
    const uint32x4_t b = vcvtq_u32_f32(vrndnq_f32(clamp_pixel(vld1q_f32(in + i + 4))));
    const uint16x8_t w = vcombine_u16(vmovn_u32(a), vmovn_u32(b));
    vst1_u8(out + i, vmovn_u16(w));
  }
  for (; i < n; ++i) out[i] = static_cast<std::uint8_t>(std::nearbyint(clamp_pixel(in[i])));
}

double dot(const double* a, const double* b, std::size_t n) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc0 = vaddq_f64(acc0, vmulq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
    acc1 = vaddq_f64(acc1, vmulq_f64(vld1q_f64(a + i + 2), vld1q_f64(b + i + 2)));
  }
  double acc = vaddvq_f64(vaddq_f64(acc0, acc1));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(alpha);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    vst1q_f64(y + i, vaddq_f64(vld1q_f64(y + i), vmulq_f64(va, vld1q_f64(x + i))));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

}  // namespace

namespace detail {
const KernelTable* neon_table() {
  static const KernelTable table{Isa::neon, masked_sign_step, quantize_u8, dot, axpy};
  return &table;
}
}  // namespace detail

}  // namespace mifgsm::simd
