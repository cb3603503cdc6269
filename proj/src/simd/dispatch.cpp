#include <cstdlib>
#include <string>

#include "mifgsm/simd/kernels.hpp"

namespace mifgsm::simd {

#if !(defined(__x86_64__) || defined(__i386__) || defined(_M_X64))
namespace detail {
const KernelTable* avx2_table() { return nullptr; }
}  // namespace detail
#endif

#if !(defined(__aarch64__) || defined(_M_ARM64))
namespace detail {
const KernelTable* neon_table() { return nullptr; }
}  // namespace detail
#endif

namespace {

bool cpu_has_avx2() {
#if (defined(__x86_64__) || defined(__i386__)) && (defined(__GNUC__) || defined(__clang__))
  return __builtin_cpu_supports("avx2");
#else
  return false;
#endif
}

bool supported(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return true;
    case Isa::avx2:
      return detail::avx2_table() != nullptr && cpu_has_avx2();
    case Isa::neon:
      // Advanced SIMD is mandatory on AArch64.
      return detail::neon_table() != nullptr;
  }
  return false;
}

const KernelTable& select() {
  if (const char* forced = std::getenv("MIFGSM_SIMD")) {
    const std::string want(forced);
    for (Isa isa : {Isa::scalar, Isa::avx2, Isa::neon}) {
      if (want == isa_name(isa)) return supported(isa) ? kernels_for(isa) : scalar_kernels();
    }
    return scalar_kernels();
  }
  if (supported(Isa::avx2)) return *detail::avx2_table();
  if (supported(Isa::neon)) return *detail::neon_table();
  return scalar_kernels();
}

}  // namespace

std::vector<Isa> available_isas() {
  std::vector<Isa> out;
  for (Isa isa : {Isa::scalar, Isa::avx2, Isa::neon}) {
    if (supported(isa)) out.push_back(isa);
  }
  return out;
}

const KernelTable& kernels_for(Isa isa) {
  switch (isa) {
    case Isa::avx2:
      if (supported(isa)) return *detail::avx2_table();
      break;
    case Isa::neon:
      if (supported(isa)) return *detail::neon_table();
      break;
    case Isa::scalar:
      break;
  }
  return scalar_kernels();
}

const KernelTable& active_kernels() {
  static const KernelTable& table = select();
  return table;
}

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return "scalar";
    case Isa::avx2:
      return "avx2";
    case Isa::neon:
      return "neon";
  }
  return "unknown";
}

}  // namespace mifgsm::simd
