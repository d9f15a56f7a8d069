#pragma once

// Data-parallel inner loops used by the pipeline. Every kernel has a scalar
// reference implementation and, on x86-64, an AVX2/FMA variant. The variant
// is picked once at startup from CPUID; set LIVERFAT_SIMD=scalar to force the
// reference path.
//
// Elementwise kernels (axpy, fat_fraction, adam_update) are bit-identical
// across variants. Reductions (dot, box_cross_moments) differ only in
// summation order.

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

namespace liverfat::simd {

enum class Isa { kScalar, kAvx2 };

std::string_view isa_name(Isa isa);

/// Sums over a box of voxels of a moving image m, paired with a fixed image f.
struct CrossMoments {
  double sum_m = 0.0;
  double sum_mm = 0.0;
  double sum_fm = 0.0;
};

/// A 3-D box of floats inside a larger row-major buffer.
struct BoxView {
  const float* base = nullptr;  // first voxel of the box
  std::ptrdiff_t row_stride = 0;
  std::ptrdiff_t slice_stride = 0;
};

struct KernelTable {
  Isa isa = Isa::kScalar;

  float (*dot)(const float* a, const float* b, std::size_t n) = nullptr;

  // y[i] += alpha * x[i]
  void (*axpy)(float alpha, const float* x, float* y, std::size_t n) = nullptr;

  // out[i] = fat[i] / (water[i] + fat[i]), or 0 where the sum is below eps.
  void (*fat_fraction)(const float* water, const float* fat, float* out,
                       std::size_t n, float eps) = nullptr;

  // Bias-corrected Adam update; bc1 = 1 - beta1^t, bc2 = 1 - beta2^t.
  void (*adam_update)(float* param, const float* grad, float* m, float* v,
                      std::size_t n, float lr, float beta1, float beta2,
                      float eps, float bc1, float bc2) = nullptr;

  // Moments of m and f*m over an nx*ny*nz box.
  CrossMoments (*box_cross_moments)(BoxView f, BoxView m, int nx, int ny,
                                    int nz) = nullptr;
};

/// Table chosen for this process (CPU support + LIVERFAT_SIMD override).
const KernelTable& kernels();

/// Table for a specific ISA; falls back to scalar if the CPU lacks it.
const KernelTable& kernels_for(Isa isa);

bool cpu_supports(Isa isa);

/// ISAs usable on this machine, scalar first.
std::vector<Isa> available_isas();

namespace scalar {
const KernelTable& table();
}

#if defined(__x86_64__) || defined(_M_X64)
namespace avx2 {
const KernelTable& table();
}
#endif

}  // namespace liverfat::simd
