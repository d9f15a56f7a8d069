// Compiled with -mavx2 -mfma. Only reached through the dispatch table after a
// CPUID check.
#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include <cmath>

#include "liverfat/simd/kernels.hpp"

namespace liverfat::simd::avx2 {
namespace {

inline float hsum(__m256 x) {
  __m128 lo = _mm256_castps256_ps128(x);
  __m128 hi = _mm256_extractf128_ps(x, 1);
  lo = _mm_add_ps(lo, hi);
  lo = _mm_add_ps(lo, _mm_movehl_ps(lo, lo));
  lo = _mm_add_ss(lo, _mm_movehdup_ps(lo));
  return _mm_cvtss_f32(lo);
}

// tail_mask(k) enables the first k lanes.
inline __m256i tail_mask(int k) {
  alignas(32) static const int kTable[16] = {-1, -1, -1, -1, -1, -1, -1, -1,
                                             0,  0,  0,  0,  0,  0,  0,  0};
  return _mm256_loadu_si256(reinterpret_cast<const __m256i*>(kTable + 8 - k));
}

float dot(const float* a, const float* b, std::size_t n) {
  __m256 acc0 = _mm256_setzero_ps();
  __m256 acc1 = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
    acc1 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i + 8),
                           _mm256_loadu_ps(b + i + 8), acc1);
  }
  for (; i + 8 <= n; i += 8)
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
  float acc = hsum(_mm256_add_ps(acc0, acc1));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy(float alpha, const float* x, float* y, std::size_t n) {
  const __m256 va = _mm256_set1_ps(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 vy = _mm256_loadu_ps(y + i);
    vy = _mm256_add_ps(vy, _mm256_mul_ps(va, _mm256_loadu_ps(x + i)));
    _mm256_storeu_ps(y + i, vy);
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void fat_fraction(const float* water, const float* fat, float* out,
                  std::size_t n, float eps) {
  const __m256 veps = _mm256_set1_ps(eps);
  const __m256 zero = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 w = _mm256_loadu_ps(water + i);
    const __m256 f = _mm256_loadu_ps(fat + i);
    const __m256 sum = _mm256_add_ps(w, f);
    const __m256 below = _mm256_cmp_ps(sum, veps, _CMP_LT_OQ);
    const __m256 ratio = _mm256_div_ps(f, sum);
    _mm256_storeu_ps(out + i, _mm256_blendv_ps(ratio, zero, below));
  }
  for (; i < n; ++i) {
    const float sum = water[i] + fat[i];
    out[i] = sum < eps ? 0.0f : fat[i] / sum;
  }
}

void adam_update(float* param, const float* grad, float* m, float* v,
                 std::size_t n, float lr, float beta1, float beta2, float eps,
                 float bc1, float bc2) {
  const float one_minus_b1 = 1.0f - beta1;
  const float one_minus_b2 = 1.0f - beta2;
  const __m256 vb1 = _mm256_set1_ps(beta1), vb2 = _mm256_set1_ps(beta2);
  const __m256 vc1 = _mm256_set1_ps(one_minus_b1);
  const __m256 vc2 = _mm256_set1_ps(one_minus_b2);
  const __m256 vbc1 = _mm256_set1_ps(bc1), vbc2 = _mm256_set1_ps(bc2);
  const __m256 vlr = _mm256_set1_ps(lr), veps = _mm256_set1_ps(eps);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 g = _mm256_loadu_ps(grad + i);
    __m256 mi = _mm256_loadu_ps(m + i);
    __m256 vi = _mm256_loadu_ps(v + i);
    mi = _mm256_add_ps(_mm256_mul_ps(vb1, mi), _mm256_mul_ps(vc1, g));
    vi = _mm256_add_ps(_mm256_mul_ps(vb2, vi),
                       _mm256_mul_ps(vc2, _mm256_mul_ps(g, g)));
    _mm256_storeu_ps(m + i, mi);
    _mm256_storeu_ps(v + i, vi);
    const __m256 m_hat = _mm256_div_ps(mi, vbc1);
    const __m256 v_hat = _mm256_div_ps(vi, vbc2);
    const __m256 step = _mm256_div_ps(_mm256_mul_ps(vlr, m_hat),
                                      _mm256_add_ps(_mm256_sqrt_ps(v_hat), veps));
    _mm256_storeu_ps(param + i, _mm256_sub_ps(_mm256_loadu_ps(param + i), step));
  }
  for (; i < n; ++i) {
    const float g = grad[i];
    m[i] = beta1 * m[i] + one_minus_b1 * g;
    v[i] = beta2 * v[i] + one_minus_b2 * (g * g);
    const float m_hat = m[i] / bc1;
    const float v_hat = v[i] / bc2;
    param[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
  }
}

CrossMoments box_cross_moments(BoxView f, BoxView m, int nx, int ny, int nz) {
  CrossMoments out;
  const int full = nx & ~7;
  const int rest = nx - full;
  const __m256i mask = tail_mask(rest);
  for (int z = 0; z < nz; ++z) {
    __m256 sm = _mm256_setzero_ps();
    __m256 smm = _mm256_setzero_ps();
    __m256 sfm = _mm256_setzero_ps();
    for (int y = 0; y < ny; ++y) {
      const float* fr = f.base + z * f.slice_stride + y * f.row_stride;
      const float* mr = m.base + z * m.slice_stride + y * m.row_stride;
      int x = 0;
      for (; x < full; x += 8) {
        const __m256 mv = _mm256_loadu_ps(mr + x);
        const __m256 fv = _mm256_loadu_ps(fr + x);
        sm = _mm256_add_ps(sm, mv);
        smm = _mm256_fmadd_ps(mv, mv, smm);
        sfm = _mm256_fmadd_ps(fv, mv, sfm);
      }
      if (rest) {
        const __m256 mv = _mm256_maskload_ps(mr + x, mask);
        const __m256 fv = _mm256_maskload_ps(fr + x, mask);
        sm = _mm256_add_ps(sm, mv);
        smm = _mm256_fmadd_ps(mv, mv, smm);
        sfm = _mm256_fmadd_ps(fv, mv, sfm);
      }
    }
    out.sum_m += hsum(sm);
    out.sum_mm += hsum(smm);
    out.sum_fm += hsum(sfm);
  }
  return out;
}

}  // namespace

const KernelTable& table() {
  static const KernelTable t{Isa::kAvx2, &dot, &axpy, &fat_fraction,
                             &adam_update, &box_cross_moments};
  return t;
}

}  // namespace liverfat::simd::avx2

#endif
