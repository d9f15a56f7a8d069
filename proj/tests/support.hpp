#pragma once

// Random input generators shared by the property tests.

#include <cstdint>
#include <random>
#include <vector>

#include "liverfat/volume.hpp"

namespace liverfat::testing {

inline Grid unit_grid(Dims3 d) { return Grid{d, {1.0, 1.0, 1.0}, {0.0, 0.0, 0.0}}; }

inline Grid random_grid(std::mt19937_64& rng, int max_dim) {
  std::uniform_int_distribution<int> d(1, max_dim);
  std::uniform_real_distribution<double> s(0.5, 3.0), o(-20.0, 20.0);
  return Grid{{d(rng), d(rng), d(rng)}, {s(rng), s(rng), s(rng)}, {o(rng), o(rng), o(rng)}};
}

inline Volume3 random_volume(const Grid& g, std::mt19937_64& rng, float lo = 0.0f, float hi = 1.0f) {
  std::uniform_real_distribution<float> u(lo, hi);
  Volume3 v(g);
  for (float& x : v.data()) x = u(rng);
  return v;
}

inline BinaryMask random_mask(const Grid& g, std::mt19937_64& rng, double density) {
  std::bernoulli_distribution b(density);
  BinaryMask m(g);
  for (std::size_t i = 0; i < m.size(); ++i) m.set(i, b(rng));
  return m;
}

/// Mask of voxels inside an axis-aligned ellipsoid given in voxel units.
inline BinaryMask ellipsoid_mask(const Grid& g, Vec3 center, Vec3 half) {
  BinaryMask m(g);
  for (int k = 0; k < g.dims.z; ++k)
    for (int j = 0; j < g.dims.y; ++j)
      for (int i = 0; i < g.dims.x; ++i) {
        const double x = (i - center.x) / half.x, y = (j - center.y) / half.y, z = (k - center.z) / half.z;
        m.set(i, j, k, x * x + y * y + z * z <= 1.0);
      }
  return m;
}

inline std::vector<float> random_floats(std::size_t n, std::mt19937_64& rng, float lo = -1.0f, float hi = 1.0f) {
  std::uniform_real_distribution<float> u(lo, hi);
  std::vector<float> v(n);
  for (float& x : v) x = u(rng);
  return v;
}

}  // namespace liverfat::testing
