#pragma once

// Synthetic paired water/fat volumes with a known liver fat fraction.
//
// Anatomy is deliberately crude: an ellipsoidal torso and two leg cylinders,
// each wrapped in a subcutaneous fat shell, with an ellipsoidal liver on the
// subject's right (low x). Each compartment has a fixed fat fraction f and
// base signal 1, so water = (1 - f) and fat = f before the shared bias field
// and per-channel Gaussian noise are applied.

#include <cstdint>
#include <string>
#include <vector>

#include "liverfat/volume.hpp"

namespace liverfat {

struct PhantomSpec {
  Grid grid{{64, 48, 96}, {4.0, 4.0, 4.0}, {0.0, 0.0, 0.0}};

  Vec3 torso_center{128.0, 96.0, 150.0};
  Vec3 torso_half_axes{100.0, 72.0, 150.0};
  double leg_radius = 44.0;
  double leg_offset_x = 52.0;  // leg axis distance from torso center in x
  double leg_top_z = 230.0;    // legs run from here to the inferior edge
  double fat_shell_mm = 12.0;

  Vec3 liver_center{98.0, 96.0, 120.0};
  Vec3 liver_half_axes{36.0, 36.0, 44.0};

  double liver_ff = 0.05;
  double subcutaneous_ff = 0.85;
  double lean_ff = 0.03;

  double noise_sigma = 0.0;     // Gaussian, in units of the base signal
  double bias_amplitude = 0.0;  // peak deviation of the multiplicative field

  int station_count = 3;
  int station_overlap = 4;  // slices shared by adjacent stations

  std::uint64_t seed = 0;

  /// Throws ValidationError on out-of-range fractions, negative noise, or a
  /// liver that is not strictly inside the lean torso.
  void validate() const;
  bool liver_inside_torso() const;

  static PhantomSpec desk() { return {}; }
  static PhantomSpec full_scale();
};

struct PhantomTruth {
  double liver_ff = 0.0;
  BinaryMask liver_mask;
  BinaryMask body_mask_truth;
};

struct PhantomVolumes {
  StationStack water;
  StationStack fat;
  PhantomTruth truth;
};

PhantomVolumes generate_phantom(const PhantomSpec& spec);

struct CohortSpec {
  int n_subjects = 200;
  double ff_low = 0.0;
  double ff_high = 0.20;
  std::uint64_t seed = 1;
  PhantomSpec base;  // noise, bias, grid and compartment FFs come from here

  double body_scale_low = 0.95, body_scale_high = 1.08;
  double liver_shift_mm = 6.0;
  double liver_scale_low = 0.90, liver_scale_high = 1.10;

  void validate() const;
};

struct CohortSubject {
  std::string id;
  PhantomSpec spec;
};

/// Per-subject spec with drawn liver_ff and jittered anatomy. Depends only on
/// (cohort seed, index), so subjects can be produced in any order.
CohortSubject cohort_subject(const CohortSpec& cohort, int index);

std::string subject_id(int index);

struct CohortMember {
  std::string id;
  PhantomVolumes phantom;
};

std::vector<CohortMember> generate_cohort(const CohortSpec& spec);

struct RoiConfig {
  int radius = 2;             // voxels
  int erosion_diameter = 5;   // applied to the liver mask before placement
};

/// Mean fat fraction over three disjoint spherical ROIs placed at random
/// inside the eroded liver mask; mimics manual ROI placement.
double reference_roi_measurement(const Volume3& ff, const BinaryMask& liver_mask,
                                 std::uint64_t seed, const RoiConfig& cfg = {});

}  // namespace liverfat
