#pragma once

// Turns paired water/fat volumes into fat-fraction maps, a body mask, and the
// compact 8-bit two-slice network input.

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "liverfat/volume.hpp"

namespace liverfat {

struct EncodingSpec {
  double ff_min = 0.0;
  double ff_max = 0.5;
  int levels = 256;

  void validate() const;
};

struct SliceImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;  // row-major
  EncodingSpec encoding;

  std::uint8_t at(int row, int col) const {
    return data[static_cast<std::size_t>(row) * width + col];
  }
};

/// Geometry of the composed input. The output image stacks the coronal crop
/// (top) over the sagittal crop (bottom); both crops keep the superior half
/// of z and a fixed-width lateral window centered on the body mask.
struct LayoutConfig {
  int out_height = 96;  // composite rows, split evenly between the two crops
  int out_width = 44;
  int coronal_crop_width = 56;   // source voxels along x
  int sagittal_crop_width = 44;  // source voxels along y

  void validate() const;
  static LayoutConfig desk() { return {}; }
  static LayoutConfig full_scale() { return {376, 176, 224, 174}; }
};

inline constexpr float kFatFractionEps = 1e-6f;

/// fat / (water + fat), 0 where the summed signal is below 1e-6.
Volume3 fat_fraction(const Volume3& water, const Volume3& fat);
Volume3 water_fraction(const Volume3& water, const Volume3& fat);

/// Otsu threshold over a `bins`-bin histogram spanning [min, max]. Returns
/// the upper edge of the winning bin. Throws on constant input.
double otsu_threshold(std::span<const float> values, int bins = 256);

/// Otsu threshold per coronal (fixed-y) slice of water + fat, averaged over
/// slices with at least two distinct values; mask = sum > threshold.
BinaryMask body_mask(const Volume3& water, const Volume3& fat);

struct SliceSelection {
  int coronal_y = 0;
  int sagittal_x = 0;
};

SliceSelection select_slices(const BinaryMask& mask);

std::uint8_t encode8(double ff, const EncodingSpec& spec = {});
double decode8(std::uint8_t v, const EncodingSpec& spec = {});

struct ComposedInput {
  SliceImage image;
  SliceSelection selection;
  int rows_kept = 0;        // superior z slices used by both crops
  int coronal_x0 = 0;       // first source column of the coronal window
  int sagittal_y0 = 0;      // first source column of the sagittal window
};

ComposedInput compose_input(const Volume3& ff, const BinaryMask& mask,
                            const LayoutConfig& layout);

/// Binary PGM (P5), 8-bit.
std::vector<std::uint8_t> encode_pgm(const SliceImage& img);
SliceImage decode_pgm(std::span<const std::uint8_t> bytes);
void write_pgm(const std::filesystem::path& path, const SliceImage& img);
SliceImage read_pgm(const std::filesystem::path& path);

struct PreprocessedSubject {
  Volume3 water_fraction;
  Volume3 fat_fraction;
  BinaryMask body;
  ComposedInput input;
};

/// Fuse stations, resample, compute fractions and mask, compose the input.
/// A null spec skips resampling.
PreprocessedSubject preprocess_subject(const StationStack& water, const StationStack& fat,
                                       const ResampleSpec* spec, const LayoutConfig& layout);

}  // namespace liverfat
