#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

// Data-parallel inner loops. Every kernel has a scalar reference
// implementation; vector variants are selected once at runtime.
//
// masked_sign_step and quantize_u8 are bit-exact across variants (same IEEE
// operation order, no contraction). dot and axpy reorder the reduction and
// agree with the scalar reference only up to rounding.
namespace mifgsm::simd {

enum class Isa { scalar, avx2, neon };

struct KernelTable {
  Isa isa;

  // out[i] = min(max(inv[i] + mask[i] * (cur[i] + step * sign(grad[i])), 0), 255)
  // with sign(0) = 0. NaN inputs clamp to 0.
  void (*masked_sign_step)(const float* cur, const float* inv, const float* mask,
                           const float* grad, float step, float* out, std::size_t n);

  // out[i] = round_half_even(min(max(in[i], 0), 255))
  void (*quantize_u8)(const float* in, std::uint8_t* out, std::size_t n);

  double (*dot)(const double* a, const double* b, std::size_t n);

  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
};

const KernelTable& scalar_kernels();

// Variants compiled into this binary and supported by the running CPU.
std::vector<Isa> available_isas();
const KernelTable& kernels_for(Isa isa);

// Best available variant. The MIFGSM_SIMD environment variable ("scalar",
// "avx2", "neon") forces a choice; unknown or unsupported values fall back to
// scalar.
const KernelTable& active_kernels();

std::string_view isa_name(Isa isa);

namespace detail {
const KernelTable* avx2_table();
const KernelTable* neon_table();
}  // namespace detail

}  // namespace mifgsm::simd
