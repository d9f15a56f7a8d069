#pragma once

// Multi-atlas liver fat baseline: register labeled templates onto a subject,
// intersect the propagated liver masks, erode, and read out the median fat
// fraction; then map raw readouts to the reference scale with a linear fit.

#include <array>
#include <span>
#include <string>
#include <vector>

#include "liverfat/error.hpp"
#include "liverfat/volume.hpp"

namespace liverfat {

/// Water-fraction and fat-fraction channels on one grid.
struct ChannelPair {
  Volume3 water_fraction;
  Volume3 fat_fraction;

  const Grid& grid() const { return fat_fraction.grid(); }
  /// Zeroes both channels outside `mask`.
  ChannelPair masked(const BinaryMask& mask) const;
};

struct Template {
  std::string id;
  ChannelPair channels;
  BinaryMask liver_seg;

  void validate() const;
};

/// Displacements (mm) on a regular control lattice; evaluated anywhere by
/// trilinear interpolation, clamped to the lattice edges.
struct DeformationField {
  Dims3 control_dims;
  Vec3 control_spacing{1.0, 1.0, 1.0};
  Vec3 origin;  // position of control point (0, 0, 0)
  std::vector<Vec3> displacements;

  static DeformationField zero(const Grid& grid, int stride);
  static DeformationField uniform(const Grid& grid, int stride, Vec3 shift_mm);

  void validate() const;
  Vec3 at(Vec3 point_mm) const;
  Vec3& control(int i, int j, int k) {
    return displacements[(static_cast<std::size_t>(k) * control_dims.y + j) * control_dims.x + i];
  }
  const Vec3& control(int i, int j, int k) const {
    return displacements[(static_cast<std::size_t>(k) * control_dims.y + j) * control_dims.x + i];
  }
};

struct RegistrationConfig {
  int pyramid_levels = 6;
  int search_radius = 2;        // candidate offsets per axis, in steps
  int displacement_step = 1;    // level voxels per step
  double regularization = 0.1;  // weight of the squared neighbor difference,
                                // in control-spacing units
  int sweeps_per_level = 3;
  int control_stride = 4;       // level voxels between control points
  int max_displacement = 12;    // level voxels, per axis

  void validate() const;
};

struct CalibrationModel {
  double slope = 1.0;
  double intercept = 0.0;
};

/// Pearson correlation of a and b over `region` (whole grid if null).
double ncc(const Volume3& a, const Volume3& b, const BinaryMask* region = nullptr);

/// Level 0 is the input; each next level is 2x2x2 mean pooling. Stops early
/// when a level would have fewer than 2 voxels on some axis, so the result
/// may be shorter than `levels`.
std::vector<Volume3> build_pyramid(const Volume3& vol, int levels);

/// Deformation that maps fixed-grid points to moving-grid points:
/// warped(x) = moving(x + u(x)).
DeformationField register_pair(const ChannelPair& fixed, const ChannelPair& moving,
                               const RegistrationConfig& config);

DeformationField register_template(const ChannelPair& fixed, const Template& moving,
                                   const RegistrationConfig& config);

BinaryMask warp_mask(const BinaryMask& seg, const DeformationField& field, const Grid& target);
Volume3 warp_volume(const Volume3& vol, const DeformationField& field, const Grid& target);

struct AtlasConfig {
  RegistrationConfig registration;
  int erosion_diameter = 3;  // 7 at full scale
};

struct AtlasResult {
  double raw_ff = 0.0;  // fraction
  std::size_t surviving_voxels = 0;
  std::vector<std::size_t> warped_voxels;  // per template
  std::size_t intersection_voxels = 0;
  std::vector<BinaryMask> warped_masks;
};

/// Thrown when nothing survives intersection and erosion.
class AtlasMeasurementError : public RuntimeFailure {
 public:
  AtlasMeasurementError(const std::string& what, std::vector<std::size_t> warped,
                        std::size_t intersection)
      : RuntimeFailure(what), warped_voxels(std::move(warped)), intersection_voxels(intersection) {}
  std::vector<std::size_t> warped_voxels;
  std::size_t intersection_voxels;
};

AtlasResult atlas_measure(const ChannelPair& subject, const BinaryMask& body,
                          std::span<const Template> templates, const AtlasConfig& config);

double median(std::vector<double> values);

CalibrationModel fit_calibration(std::span<const double> raw, std::span<const double> reference);
double apply_calibration(const CalibrationModel& model, double raw);

}  // namespace liverfat
