#include "liverfat/simd/kernels.hpp"

#include <cmath>

namespace liverfat::simd::scalar {
namespace {

float dot(const float* a, const float* b, std::size_t n) {
  float acc = 0.0f;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy(float alpha, const float* x, float* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void fat_fraction(const float* water, const float* fat, float* out,
                  std::size_t n, float eps) {
  for (std::size_t i = 0; i < n; ++i) {
    const float sum = water[i] + fat[i];
    out[i] = sum < eps ? 0.0f : fat[i] / sum;
  }
}

void adam_update(float* param, const float* grad, float* m, float* v,
                 std::size_t n, float lr, float beta1, float beta2, float eps,
                 float bc1, float bc2) {
  const float one_minus_b1 = 1.0f - beta1;
  const float one_minus_b2 = 1.0f - beta2;
  for (std::size_t i = 0; i < n; ++i) {
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
  for (int z = 0; z < nz; ++z) {
    for (int y = 0; y < ny; ++y) {
      const float* fr = f.base + z * f.slice_stride + y * f.row_stride;
      const float* mr = m.base + z * m.slice_stride + y * m.row_stride;
      float sm = 0.0f, smm = 0.0f, sfm = 0.0f;
      for (int x = 0; x < nx; ++x) {
        sm += mr[x];
        smm += mr[x] * mr[x];
        sfm += fr[x] * mr[x];
      }
      out.sum_m += sm;
      out.sum_mm += smm;
      out.sum_fm += sfm;
    }
  }
  return out;
}

}  // namespace

const KernelTable& table() {
  static const KernelTable t{Isa::kScalar, &dot, &axpy, &fat_fraction,
                             &adam_update, &box_cross_moments};
  return t;
}

}  // namespace liverfat::simd::scalar
