#include <cstdlib>
#include <stdexcept>
#include <string>

#include "mfseg/kernels.hpp"

namespace mfseg::kernels {

namespace {

const KernelSet kScalar{"scalar", &windowed_argmin_scalar, &minmax_scalar};
#if defined(MFSEG_HAVE_AVX2)
const KernelSet kAvx2{"avx2", &windowed_argmin_avx2, &minmax_avx2};
#endif

bool cpu_has_avx2() {
#if defined(MFSEG_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  static const bool has = __builtin_cpu_supports("avx2");
  return has;
#else
  return false;
#endif
}

}  // namespace

bool available(Isa isa) {
  switch (isa) {
    case Isa::Auto:
    case Isa::Scalar:
      return true;
    case Isa::Avx2:
      return cpu_has_avx2();
  }
  return false;
}

const KernelSet& select(Isa isa) {
  if (isa == Isa::Auto) {
    if (const char* env = std::getenv("MFSEG_KERNEL")) {
      const std::string name(env);
      if (name == "scalar") return kScalar;
      if (name == "avx2") isa = Isa::Avx2;
    }
  }
  if (isa == Isa::Scalar) return kScalar;
#if defined(MFSEG_HAVE_AVX2)
  if (cpu_has_avx2()) return kAvx2;
#endif
  if (isa == Isa::Avx2) throw std::invalid_argument("avx2 kernels are not available on this build/CPU");
  return kScalar;
}

}  // namespace mfseg::kernels
