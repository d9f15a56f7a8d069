#pragma once

// 3-D scalar grids and the geometric operations shared by every stage.
//
// Axis convention, project-wide: x = subject left->right (x = 0 is the
// subject's right side), y = anterior->posterior, z = superior->inferior.
// Voxel (i, j, k) has its center at origin + (i, j, k) * spacing, in mm.
// Storage is row-major with x fastest.

#include <cstddef>
#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace liverfat {

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  friend Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
  friend Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
  friend Vec3 operator*(Vec3 a, double s) { return {a.x * s, a.y * s, a.z * s}; }
  friend bool operator==(Vec3, Vec3) = default;
  double operator[](int axis) const { return axis == 0 ? x : axis == 1 ? y : z; }
  double& operator[](int axis) { return axis == 0 ? x : axis == 1 ? y : z; }
};

struct Dims3 {
  int x = 1, y = 1, z = 1;

  std::size_t count() const {
    return static_cast<std::size_t>(x) * static_cast<std::size_t>(y) *
           static_cast<std::size_t>(z);
  }
  int operator[](int axis) const { return axis == 0 ? x : axis == 1 ? y : z; }
  int& operator[](int axis) { return axis == 0 ? x : axis == 1 ? y : z; }
  friend bool operator==(Dims3, Dims3) = default;
};

enum class Axis : int { kX = 0, kY = 1, kZ = 2 };

/// Placement of a voxel lattice in millimeter space.
struct Grid {
  Dims3 dims;
  Vec3 spacing{1.0, 1.0, 1.0};
  Vec3 origin;

  /// Throws ValidationError unless dims >= 1 and spacing > 0 on every axis.
  void validate() const;
  std::size_t count() const { return dims.count(); }
  std::size_t index(int i, int j, int k) const {
    return (static_cast<std::size_t>(k) * static_cast<std::size_t>(dims.y) +
            static_cast<std::size_t>(j)) *
               static_cast<std::size_t>(dims.x) +
           static_cast<std::size_t>(i);
  }
  Vec3 center(int i, int j, int k) const {
    return {origin.x + i * spacing.x, origin.y + j * spacing.y, origin.z + k * spacing.z};
  }
  /// Continuous voxel coordinate of a millimeter point.
  Vec3 to_index(Vec3 p) const {
    return {(p.x - origin.x) / spacing.x, (p.y - origin.y) / spacing.y,
            (p.z - origin.z) / spacing.z};
  }
  bool same_lattice(const Grid& other) const;
  friend bool operator==(const Grid&, const Grid&) = default;
};

class Volume3 {
 public:
  Volume3() = default;
  explicit Volume3(Grid grid, float fill = 0.0f);
  Volume3(Grid grid, std::vector<float> data);

  const Grid& grid() const { return grid_; }
  const Dims3& dims() const { return grid_.dims; }
  std::size_t size() const { return data_.size(); }

  float operator()(int i, int j, int k) const { return data_[grid_.index(i, j, k)]; }
  float& operator()(int i, int j, int k) { return data_[grid_.index(i, j, k)]; }

  std::span<const float> data() const { return data_; }
  std::span<float> data() { return data_; }

 private:
  Grid grid_;
  std::vector<float> data_;
};

class BinaryMask {
 public:
  BinaryMask() = default;
  explicit BinaryMask(Grid grid, bool fill = false);
  BinaryMask(Grid grid, std::vector<std::uint8_t> bits);

  const Grid& grid() const { return grid_; }
  const Dims3& dims() const { return grid_.dims; }
  std::size_t size() const { return bits_.size(); }

  bool operator()(int i, int j, int k) const { return bits_[grid_.index(i, j, k)] != 0; }
  void set(int i, int j, int k, bool v) { bits_[grid_.index(i, j, k)] = v ? 1 : 0; }
  bool at(std::size_t idx) const { return bits_[idx] != 0; }
  void set(std::size_t idx, bool v) { bits_[idx] = v ? 1 : 0; }

  /// Number of set voxels, recounted on every call.
  std::size_t count() const;
  bool empty() const { return count() == 0; }

  std::span<const std::uint8_t> bits() const { return bits_; }

  Volume3 to_volume() const;
  static BinaryMask from_volume(const Volume3& v, float threshold = 0.5f);

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

 private:
  Grid grid_;
  std::vector<std::uint8_t> bits_;
};

struct ResampleSpec {
  Vec3 target_spacing{2.23, 2.23, 3.0};
  Dims3 target_dims{224, 174, 370};

  void validate() const;
  static ResampleSpec full_scale() { return {}; }
};

/// Ordered stations sharing x/y extent, superior first. Each station's
/// z offset is the z origin of its first slice.
struct StationStack {
  std::vector<Volume3> stations;

  std::vector<double> z_offsets() const;
  void validate() const;
};

float trilinear_sample(const Volume3& vol, Vec3 point_mm);
Volume3 resample(const Volume3& vol, const ResampleSpec& spec);
Volume3 fuse_stations(const StationStack& stack);

/// Splits a volume into `count` z-stations that overlap by `overlap` slices.
StationStack split_stations(const Volume3& vol, int count, int overlap);

int center_of_mass_index(const BinaryMask& mask, Axis axis);
int quantile_of_mass_index(const BinaryMask& mask, Axis axis, double q);

BinaryMask erode_spherical(const BinaryMask& mask, int diameter);
BinaryMask intersect_masks(std::span<const BinaryMask> masks);

double dice(const BinaryMask& a, const BinaryMask& b);

/// Offsets (di, dj, dk) with di^2 + dj^2 + dk^2 <= radius^2.
std::vector<std::array<int, 3>> ball_offsets(int radius);

}  // namespace liverfat
