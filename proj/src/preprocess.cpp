#include "liverfat/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "liverfat/error.hpp"
#include "liverfat/simd/kernels.hpp"
#include "liverfat/util.hpp"

namespace liverfat {

void EncodingSpec::validate() const {
  require(ff_min < ff_max, "encoding needs ff_min < ff_max");
  require(levels >= 2 && levels <= 256, "encoding levels must be in [2, 256]");
}

void LayoutConfig::validate() const {
  require(out_height >= 2 && out_height % 2 == 0, "layout height must be even and >= 2");
  require(out_width >= 1, "layout width must be >= 1");
  require(coronal_crop_width >= 1 && sagittal_crop_width >= 1, "crop widths must be >= 1");
}

Volume3 fat_fraction(const Volume3& water, const Volume3& fat) {
  require(water.grid().same_lattice(fat.grid()), "water and fat grids differ");
  Volume3 out(water.grid());
  simd::kernels().fat_fraction(water.data().data(), fat.data().data(), out.data().data(),
                               out.size(), kFatFractionEps);
  return out;
}

Volume3 water_fraction(const Volume3& water, const Volume3& fat) {
  require(water.grid().same_lattice(fat.grid()), "water and fat grids differ");
  Volume3 out(water.grid());
  simd::kernels().fat_fraction(fat.data().data(), water.data().data(), out.data().data(),
                               out.size(), kFatFractionEps);
  return out;
}

double otsu_threshold(std::span<const float> values, int bins) {
  require(bins >= 2, "Otsu needs at least two bins");
  require(!values.empty(), "Otsu threshold of an empty set");
  const auto [mn_it, mx_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *mn_it, hi = *mx_it;
  if (!(hi > lo)) throw ValidationError("Otsu threshold of constant input");
  const double width = (hi - lo) / bins;
  std::vector<std::uint64_t> hist(static_cast<std::size_t>(bins), 0);
  for (float v : values) {
    const int b = std::min(bins - 1, static_cast<int>((v - lo) / width));
    ++hist[static_cast<std::size_t>(b)];
  }
  // Between-class variance up to a constant factor, with bin indices as
  // class values: (N * S0 - N0 * S)^2 / (N0 * N1).
  long double total_n = 0, total_s = 0;
  for (int b = 0; b < bins; ++b) {
    total_n += hist[b];
    total_s += static_cast<long double>(hist[b]) * b;
  }
  long double n0 = 0, s0 = 0, best = -1;
  int best_bin = 0;
  for (int t = 0; t + 1 < bins; ++t) {
    n0 += hist[t];
    s0 += static_cast<long double>(hist[t]) * t;
    const long double n1 = total_n - n0;
    if (n0 == 0 || n1 == 0) continue;
    const long double a = total_n * s0 - n0 * total_s;
    const long double score = a * a / (n0 * n1);
    if (score > best * (1.0L + 1e-15L)) {
      best = score;
      best_bin = t;
    }
  }
  return lo + (best_bin + 1) * width;
}

BinaryMask body_mask(const Volume3& water, const Volume3& fat) {
  require(water.grid().same_lattice(fat.grid()), "water and fat grids differ");
  const Dims3 d = water.dims();
  Volume3 sum(water.grid());
  {
    const auto w = water.data(), f = fat.data();
    auto s = sum.data();
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = w[i] + f[i];
  }
  std::vector<float> slice(static_cast<std::size_t>(d.x) * d.z);
  double thr_sum = 0.0;
  int used = 0;
  for (int j = 0; j < d.y; ++j) {
    std::size_t n = 0;
    for (int k = 0; k < d.z; ++k)
      for (int i = 0; i < d.x; ++i) slice[n++] = sum(i, j, k);
    const auto [mn, mx] = std::minmax_element(slice.begin(), slice.end());
    if (!(*mx > *mn)) continue;
    thr_sum += otsu_threshold(slice);
    ++used;
  }
  if (used == 0) throw ValidationError("body mask: every coronal slice is constant");
  const double thr = thr_sum / used;
  BinaryMask mask(water.grid());
  const auto s = sum.data();
  for (std::size_t i = 0; i < s.size(); ++i) mask.set(i, s[i] > thr);
  return mask;
}

SliceSelection select_slices(const BinaryMask& mask) {
  return {center_of_mass_index(mask, Axis::kY), quantile_of_mass_index(mask, Axis::kX, 0.25)};
}

std::uint8_t encode8(double ff, const EncodingSpec& spec) {
  const double c = std::clamp(ff, spec.ff_min, spec.ff_max);
  const double scaled = (c - spec.ff_min) / (spec.ff_max - spec.ff_min) * (spec.levels - 1);
  return static_cast<std::uint8_t>(std::floor(scaled + 0.5));
}

double decode8(std::uint8_t v, const EncodingSpec& spec) {
  return spec.ff_min + static_cast<double>(v) / (spec.levels - 1) * (spec.ff_max - spec.ff_min);
}

namespace {

// Tight [first, last] interval of set mask voxels along the in-plane lateral
// axis, restricted to rows z < rows. Falls back to the full extent.
std::pair<int, int> lateral_interval(const BinaryMask& mask, bool coronal, int plane, int rows) {
  const Dims3 d = mask.dims();
  const int extent = coronal ? d.x : d.y;
  int first = extent, last = -1;
  for (int k = 0; k < rows; ++k)
    for (int a = 0; a < extent; ++a) {
      const bool set = coronal ? mask(a, plane, k) : mask(plane, a, k);
      if (set) {
        first = std::min(first, a);
        last = std::max(last, a);
      }
    }
  if (last < 0) return {0, extent - 1};
  return {first, last};
}

int floor_div(int a, int b) { return a >= 0 ? a / b : -((-a + b - 1) / b); }

void render_crop(const Volume3& ff, bool coronal, int plane, int start, int crop_width,
                 int rows_kept, int out_rows, int out_cols, int row_offset, SliceImage& img) {
  const Grid& g = ff.grid();
  for (int r = 0; r < out_rows; ++r) {
    const double src_z = (r + 0.5) * rows_kept / out_rows - 0.5;
    for (int c = 0; c < out_cols; ++c) {
      const double src_l = start + (c + 0.5) * crop_width / out_cols - 0.5;
      Vec3 p;
      if (coronal)
        p = {g.origin.x + src_l * g.spacing.x, g.origin.y + plane * g.spacing.y,
             g.origin.z + src_z * g.spacing.z};
      else
        p = {g.origin.x + plane * g.spacing.x, g.origin.y + src_l * g.spacing.y,
             g.origin.z + src_z * g.spacing.z};
      img.data[static_cast<std::size_t>(row_offset + r) * out_cols + c] =
          encode8(trilinear_sample(ff, p), img.encoding);
    }
  }
}

}  // namespace

ComposedInput compose_input(const Volume3& ff, const BinaryMask& mask, const LayoutConfig& layout) {
  layout.validate();
  require(ff.grid().same_lattice(mask.grid()), "FF volume and mask grids differ");
  ComposedInput out;
  out.selection = select_slices(mask);
  const Dims3 d = ff.dims();
  out.rows_kept = (d.z + 1) / 2;

  const auto [cx0, cx1] = lateral_interval(mask, true, out.selection.coronal_y, out.rows_kept);
  const auto [sy0, sy1] = lateral_interval(mask, false, out.selection.sagittal_x, out.rows_kept);
  out.coronal_x0 = cx0 + floor_div(cx1 - cx0 + 1 - layout.coronal_crop_width, 2);
  out.sagittal_y0 = sy0 + floor_div(sy1 - sy0 + 1 - layout.sagittal_crop_width, 2);

  SliceImage& img = out.image;
  img.width = layout.out_width;
  img.height = layout.out_height;
  img.data.assign(static_cast<std::size_t>(img.width) * img.height, 0);
  const int half = layout.out_height / 2;
  render_crop(ff, true, out.selection.coronal_y, out.coronal_x0, layout.coronal_crop_width,
              out.rows_kept, half, layout.out_width, 0, img);
  render_crop(ff, false, out.selection.sagittal_x, out.sagittal_y0, layout.sagittal_crop_width,
              out.rows_kept, half, layout.out_width, half, img);
  return out;
}

std::vector<std::uint8_t> encode_pgm(const SliceImage& img) {
  std::ostringstream header;
  header << "P5\n" << img.width << ' ' << img.height << "\n255\n";
  const std::string h = header.str();
  std::vector<std::uint8_t> out(h.begin(), h.end());
  out.insert(out.end(), img.data.begin(), img.data.end());
  return out;
}

SliceImage decode_pgm(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 0;
  auto token = [&]() {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
    std::string t;
    while (pos < bytes.size() && !std::isspace(bytes[pos])) t.push_back(static_cast<char>(bytes[pos++]));
    return t;
  };
  require(token() == "P5", "not a binary PGM");
  SliceImage img;
  try {
    img.width = std::stoi(token());
    img.height = std::stoi(token());
    require(std::stoi(token()) == 255, "PGM must be 8-bit (maxval 255)");
  } catch (const std::logic_error&) {
    throw ValidationError("malformed PGM header");
  }
  ++pos;  // single whitespace before raster
  const std::size_t n = static_cast<std::size_t>(img.width) * img.height;
  require(img.width > 0 && img.height > 0 && pos + n == bytes.size(), "PGM raster size mismatch");
  img.data.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end());
  return img;
}

void write_pgm(const std::filesystem::path& path, const SliceImage& img) {
  write_bytes(path, encode_pgm(img));
}

SliceImage read_pgm(const std::filesystem::path& path) { return decode_pgm(read_bytes(path)); }

PreprocessedSubject preprocess_subject(const StationStack& water, const StationStack& fat,
                                       const ResampleSpec* spec, const LayoutConfig& layout) {
  Volume3 w = fuse_stations(water);
  Volume3 f = fuse_stations(fat);
  if (spec != nullptr) {
    w = resample(w, *spec);
    f = resample(f, *spec);
  }
  PreprocessedSubject out;
  out.body = body_mask(w, f);
  out.fat_fraction = fat_fraction(w, f);
  out.water_fraction = water_fraction(w, f);
  out.input = compose_input(out.fat_fraction, out.body, layout);
  return out;
}

}  // namespace liverfat
