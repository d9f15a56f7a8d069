#include <cstdlib>
#include <string>

#include "liverfat/simd/kernels.hpp"

namespace liverfat::simd {

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::kScalar:
      return "scalar";
    case Isa::kAvx2:
      return "avx2";
  }
  return "unknown";
}

bool cpu_supports(Isa isa) {
  switch (isa) {
    case Isa::kScalar:
      return true;
    case Isa::kAvx2:
#if defined(__x86_64__) || defined(_M_X64)
      __builtin_cpu_init();
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
  }
  return false;
}

std::vector<Isa> available_isas() {
  std::vector<Isa> out{Isa::kScalar};
  if (cpu_supports(Isa::kAvx2)) out.push_back(Isa::kAvx2);
  return out;
}

const KernelTable& kernels_for(Isa isa) {
#if defined(__x86_64__) || defined(_M_X64)
  if (isa == Isa::kAvx2 && cpu_supports(Isa::kAvx2)) return avx2::table();
#endif
  (void)isa;
  return scalar::table();
}

const KernelTable& kernels() {
  static const KernelTable& chosen = [] () -> const KernelTable& {
    const char* env = std::getenv("LIVERFAT_SIMD");
    if (env != nullptr && std::string(env) == "scalar")
      return scalar::table();
    return kernels_for(Isa::kAvx2);
  }();
  return chosen;
}

}  // namespace liverfat::simd
