#include "liverfat/volume.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "liverfat/error.hpp"

namespace liverfat {

void Grid::validate() const {
  require(dims.x >= 1 && dims.y >= 1 && dims.z >= 1, "grid dims must be >= 1");
  require(spacing.x > 0 && spacing.y > 0 && spacing.z > 0,
          "grid spacing must be > 0");
  require(std::isfinite(origin.x) && std::isfinite(origin.y) && std::isfinite(origin.z),
          "grid origin must be finite");
}

bool Grid::same_lattice(const Grid& other) const {
  auto close = [](double a, double b) { return std::abs(a - b) <= 1e-6 * std::max(1.0, std::abs(a)); };
  return dims == other.dims && close(spacing.x, other.spacing.x) &&
         close(spacing.y, other.spacing.y) && close(spacing.z, other.spacing.z) &&
         close(origin.x, other.origin.x) && close(origin.y, other.origin.y) &&
         close(origin.z, other.origin.z);
}

Volume3::Volume3(Grid grid, float fill) : grid_(grid) {
  grid_.validate();
  data_.assign(grid_.count(), fill);
}

Volume3::Volume3(Grid grid, std::vector<float> data) : grid_(grid), data_(std::move(data)) {
  grid_.validate();
  require(data_.size() == grid_.count(), "volume data length does not match dims");
}

BinaryMask::BinaryMask(Grid grid, bool fill) : grid_(grid) {
  grid_.validate();
  bits_.assign(grid_.count(), fill ? 1 : 0);
}

BinaryMask::BinaryMask(Grid grid, std::vector<std::uint8_t> bits)
    : grid_(grid), bits_(std::move(bits)) {
  grid_.validate();
  require(bits_.size() == grid_.count(), "mask data length does not match dims");
  for (auto& b : bits_) b = b ? 1 : 0;
}

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

Volume3 BinaryMask::to_volume() const {
  std::vector<float> data(bits_.size());
  std::transform(bits_.begin(), bits_.end(), data.begin(),
                 [](std::uint8_t b) { return b ? 1.0f : 0.0f; });
  return Volume3(grid_, std::move(data));
}

BinaryMask BinaryMask::from_volume(const Volume3& v, float threshold) {
  std::vector<std::uint8_t> bits(v.size());
  const auto d = v.data();
  for (std::size_t i = 0; i < bits.size(); ++i) bits[i] = d[i] >= threshold ? 1 : 0;
  return BinaryMask(v.grid(), std::move(bits));
}

void ResampleSpec::validate() const {
  require(target_spacing.x > 0 && target_spacing.y > 0 && target_spacing.z > 0,
          "resample spacing must be > 0");
  require(target_dims.x >= 1 && target_dims.y >= 1 && target_dims.z >= 1,
          "resample dims must be >= 1");
}

std::vector<double> StationStack::z_offsets() const {
  std::vector<double> out;
  out.reserve(stations.size());
  for (const auto& s : stations) out.push_back(s.grid().origin.z);
  return out;
}

void StationStack::validate() const {
  require(!stations.empty(), "station stack is empty");
  const Grid& g0 = stations.front().grid();
  for (std::size_t i = 0; i < stations.size(); ++i) {
    const Grid& g = stations[i].grid();
    require(g.dims.x == g0.dims.x && g.dims.y == g0.dims.y,
            "station " + std::to_string(i) + " has mismatched x/y dims");
    require(std::abs(g.spacing.x - g0.spacing.x) < 1e-9 &&
                std::abs(g.spacing.y - g0.spacing.y) < 1e-9 &&
                std::abs(g.spacing.z - g0.spacing.z) < 1e-9,
            "station " + std::to_string(i) + " has mismatched spacing");
    require(std::abs(g.origin.x - g0.origin.x) < 1e-6 &&
                std::abs(g.origin.y - g0.origin.y) < 1e-6,
            "station " + std::to_string(i) + " has mismatched x/y origin");
    if (i + 1 < stations.size()) {
      const Grid& next = stations[i + 1].grid();
      const double end = g.origin.z + g.dims.z * g.spacing.z;
      require(next.origin.z >= g.origin.z, "stations are not ordered superior to inferior");
      require(next.origin.z <= end + 1e-6,
              "station " + std::to_string(i + 1) + " leaves a gap in z");
    }
  }
}

float trilinear_sample(const Volume3& vol, Vec3 point_mm) {
  const Grid& g = vol.grid();
  const Vec3 c = g.to_index(point_mm);
  if (!(c.x > -1.0 && c.y > -1.0 && c.z > -1.0 && c.x < g.dims.x &&
        c.y < g.dims.y && c.z < g.dims.z))
    return 0.0f;
  const int i0 = static_cast<int>(std::floor(c.x));
  const int j0 = static_cast<int>(std::floor(c.y));
  const int k0 = static_cast<int>(std::floor(c.z));
  const double fx = c.x - i0, fy = c.y - j0, fz = c.z - k0;
  double acc = 0.0;
  for (int dk = 0; dk < 2; ++dk) {
    const int k = k0 + dk;
    const double wz = dk ? fz : 1.0 - fz;
    if (k < 0 || k >= g.dims.z || wz == 0.0) continue;
    for (int dj = 0; dj < 2; ++dj) {
      const int j = j0 + dj;
      const double wy = dj ? fy : 1.0 - fy;
      if (j < 0 || j >= g.dims.y || wy == 0.0) continue;
      for (int di = 0; di < 2; ++di) {
        const int i = i0 + di;
        const double wx = di ? fx : 1.0 - fx;
        if (i < 0 || i >= g.dims.x || wx == 0.0) continue;
        acc += wx * wy * wz * vol(i, j, k);
      }
    }
  }
  return static_cast<float>(acc);
}

Volume3 resample(const Volume3& vol, const ResampleSpec& spec) {
  spec.validate();
  Grid out_grid{spec.target_dims, spec.target_spacing, vol.grid().origin};
  Volume3 out(out_grid);
  for (int k = 0; k < out_grid.dims.z; ++k)
    for (int j = 0; j < out_grid.dims.y; ++j)
      for (int i = 0; i < out_grid.dims.x; ++i)
        out(i, j, k) = trilinear_sample(vol, out_grid.center(i, j, k));
  return out;
}

Volume3 fuse_stations(const StationStack& stack) {
  stack.validate();
  const Grid& g0 = stack.stations.front().grid();
  std::vector<int> first_slice;
  int total_z = 0;
  for (const auto& s : stack.stations) {
    const double rel = (s.grid().origin.z - g0.origin.z) / g0.spacing.z;
    const int k0 = static_cast<int>(std::lround(rel));
    require(std::abs(rel - k0) < 1e-3, "station z offset is not on the slice lattice");
    first_slice.push_back(k0);
    total_z = std::max(total_z, k0 + s.dims().z);
  }
  Grid out_grid = g0;
  out_grid.dims.z = total_z;
  std::vector<double> sum(out_grid.count(), 0.0);
  std::vector<int> hits(static_cast<std::size_t>(total_z), 0);
  const std::size_t plane = static_cast<std::size_t>(g0.dims.x) * g0.dims.y;
  for (std::size_t s = 0; s < stack.stations.size(); ++s) {
    const auto data = stack.stations[s].data();
    const int nz = stack.stations[s].dims().z;
    for (int k = 0; k < nz; ++k) {
      const std::size_t dst = static_cast<std::size_t>(first_slice[s] + k) * plane;
      const std::size_t src = static_cast<std::size_t>(k) * plane;
      for (std::size_t p = 0; p < plane; ++p) sum[dst + p] += data[src + p];
      ++hits[static_cast<std::size_t>(first_slice[s] + k)];
    }
  }
  std::vector<float> out(out_grid.count());
  for (int k = 0; k < total_z; ++k) {
    const double n = hits[static_cast<std::size_t>(k)];
    require(n > 0, "stations leave slice " + std::to_string(k) + " uncovered");
    const std::size_t base = static_cast<std::size_t>(k) * plane;
    for (std::size_t p = 0; p < plane; ++p)
      out[base + p] = static_cast<float>(sum[base + p] / n);
  }
  return Volume3(out_grid, std::move(out));
}

StationStack split_stations(const Volume3& vol, int count, int overlap) {
  const Grid& g = vol.grid();
  require(count >= 1, "station count must be >= 1");
  require(overlap >= 0, "station overlap must be >= 0");
  require(g.dims.z >= count * (overlap + 1), "too many stations for the z extent");
  StationStack stack;
  const std::size_t plane = static_cast<std::size_t>(g.dims.x) * g.dims.y;
  for (int s = 0; s < count; ++s) {
    const int begin = static_cast<int>(static_cast<long long>(s) * g.dims.z / count);
    int end = static_cast<int>(static_cast<long long>(s + 1) * g.dims.z / count);
    if (s + 1 < count) end = std::min(g.dims.z, end + overlap);
    Grid sg = g;
    sg.dims.z = end - begin;
    sg.origin.z = g.origin.z + begin * g.spacing.z;
    const auto src = vol.data().subspan(static_cast<std::size_t>(begin) * plane,
                                        static_cast<std::size_t>(end - begin) * plane);
    stack.stations.emplace_back(sg, std::vector<float>(src.begin(), src.end()));
  }
  return stack;
}

namespace {
std::vector<std::size_t> slab_counts(const BinaryMask& mask, Axis axis) {
  const Dims3 d = mask.dims();
  const int a = static_cast<int>(axis);
  std::vector<std::size_t> counts(static_cast<std::size_t>(d[a]), 0);
  for (int k = 0; k < d.z; ++k)
    for (int j = 0; j < d.y; ++j)
      for (int i = 0; i < d.x; ++i)
        if (mask(i, j, k)) ++counts[static_cast<std::size_t>(a == 0 ? i : a == 1 ? j : k)];
  return counts;
}
}  // namespace

int center_of_mass_index(const BinaryMask& mask, Axis axis) {
  const auto counts = slab_counts(mask, axis);
  double total = 0.0, weighted = 0.0;
  for (std::size_t s = 0; s < counts.size(); ++s) {
    total += static_cast<double>(counts[s]);
    weighted += static_cast<double>(counts[s]) * static_cast<double>(s);
  }
  if (total == 0.0) throw ValidationError("center of mass of an empty mask");
  const long idx = std::lround(weighted / total);
  return static_cast<int>(std::clamp<long>(idx, 0, static_cast<long>(counts.size()) - 1));
}

int quantile_of_mass_index(const BinaryMask& mask, Axis axis, double q) {
  require(q > 0.0 && q < 1.0, "mass quantile must be in (0, 1)");
  const auto counts = slab_counts(mask, axis);
  std::size_t total = 0;
  for (auto c : counts) total += c;
  if (total == 0) throw ValidationError("mass quantile of an empty mask");
  const double target = q * static_cast<double>(total);
  std::size_t cumulative = 0;
  for (std::size_t s = 0; s < counts.size(); ++s) {
    cumulative += counts[s];
    if (static_cast<double>(cumulative) >= target) return static_cast<int>(s);
  }
  return static_cast<int>(counts.size()) - 1;
}

std::vector<std::array<int, 3>> ball_offsets(int radius) {
  std::vector<std::array<int, 3>> out;
  const int r2 = radius * radius;
  for (int dk = -radius; dk <= radius; ++dk)
    for (int dj = -radius; dj <= radius; ++dj)
      for (int di = -radius; di <= radius; ++di)
        if (di * di + dj * dj + dk * dk <= r2) out.push_back({di, dj, dk});
  // Farthest offsets first: they reject boundary voxels soonest.
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return a[0] * a[0] + a[1] * a[1] + a[2] * a[2] > b[0] * b[0] + b[1] * b[1] + b[2] * b[2];
  });
  return out;
}

BinaryMask erode_spherical(const BinaryMask& mask, int diameter) {
  require(diameter >= 1 && diameter % 2 == 1, "erosion diameter must be odd and >= 1");
  if (diameter == 1) return mask;
  const auto offsets = ball_offsets((diameter - 1) / 2);
  const Dims3 d = mask.dims();
  BinaryMask out(mask.grid());
  for (int k = 0; k < d.z; ++k)
    for (int j = 0; j < d.y; ++j)
      for (int i = 0; i < d.x; ++i) {
        if (!mask(i, j, k)) continue;
        bool keep = true;
        for (const auto& o : offsets) {
          const int ii = i + o[0], jj = j + o[1], kk = k + o[2];
          if (ii < 0 || jj < 0 || kk < 0 || ii >= d.x || jj >= d.y || kk >= d.z ||
              !mask(ii, jj, kk)) {
            keep = false;
            break;
          }
        }
        if (keep) out.set(i, j, k, true);
      }
  return out;
}

BinaryMask intersect_masks(std::span<const BinaryMask> masks) {
  require(!masks.empty(), "intersect_masks needs at least one mask");
  BinaryMask out = masks.front();
  for (std::size_t m = 1; m < masks.size(); ++m) {
    require(masks[m].dims() == out.dims(), "intersect_masks shape mismatch");
    for (std::size_t i = 0; i < out.size(); ++i)
      if (out.at(i) && !masks[m].at(i)) out.set(i, false);
  }
  return out;
}

double dice(const BinaryMask& a, const BinaryMask& b) {
  require(a.dims() == b.dims(), "dice shape mismatch");
  std::size_t both = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    na += a.at(i);
    nb += b.at(i);
    both += a.at(i) && b.at(i);
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(na + nb);
}

}  // namespace liverfat
