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
  for (std::size_t i = 0; i < n; ++i) {
    const float sign = static_cast<float>((grad[i] > 0.0f) - (grad[i] < 0.0f));
    const float moved = cur[i] + step * sign;
    out[i] = clamp_pixel(inv[i] + mask[i] * moved);
  }
}

void quantize_u8(const float* in, std::uint8_t* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = static_cast<std::uint8_t>(std::nearbyint(clamp_pixel(in[i])));
  }
}

double dot(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

}  // namespace

const KernelTable& scalar_kernels() {
  static const KernelTable table{Isa::scalar, masked_sign_step, quantize_u8, dot, axpy};
  return table;
}

}  // namespace mifgsm::simd
