#include "liverfat/atlas.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include "liverfat/simd/kernels.hpp"

namespace liverfat {

ChannelPair ChannelPair::masked(const BinaryMask& mask) const {
  require(grid().same_lattice(mask.grid()), "mask grid differs from channels");
  ChannelPair out = *this;
  auto w = out.water_fraction.data();
  auto f = out.fat_fraction.data();
  for (std::size_t i = 0; i < w.size(); ++i)
    if (!mask.at(i)) w[i] = f[i] = 0.0f;
  return out;
}

void Template::validate() const {
  require(channels.water_fraction.grid().same_lattice(channels.fat_fraction.grid()),
          "template " + id + ": channel grids differ");
  require(channels.grid().same_lattice(liver_seg.grid()), "template " + id + ": mask grid differs");
  require(!liver_seg.empty(), "template " + id + ": liver segmentation is empty");
}

// ---------------------------------------------------------------------------
// Deformation field

namespace {
Dims3 control_dims_for(Dims3 d, int stride) {
  auto n = [stride](int extent) { return (extent - 1 + stride - 1) / stride + 1; };
  return {n(d.x), n(d.y), n(d.z)};
}
}  // namespace

DeformationField DeformationField::zero(const Grid& grid, int stride) {
  return uniform(grid, stride, {});
}

DeformationField DeformationField::uniform(const Grid& grid, int stride, Vec3 shift_mm) {
  require(stride >= 1, "control stride must be >= 1");
  DeformationField f;
  f.control_dims = control_dims_for(grid.dims, stride);
  f.control_spacing = grid.spacing * stride;
  f.origin = grid.origin;
  f.displacements.assign(f.control_dims.count(), shift_mm);
  return f;
}

void DeformationField::validate() const {
  require(control_dims.x >= 1 && control_dims.y >= 1 && control_dims.z >= 1,
          "control lattice dims must be >= 1");
  require(control_spacing.x > 0 && control_spacing.y > 0 && control_spacing.z > 0,
          "control spacing must be > 0");
  require(displacements.size() == control_dims.count(), "displacement count mismatch");
  for (const auto& d : displacements)
    require(std::isfinite(d.x) && std::isfinite(d.y) && std::isfinite(d.z),
            "non-finite displacement");
}

Vec3 DeformationField::at(Vec3 p) const {
  double q[3];
  int i0[3];
  double t[3];
  for (int a = 0; a < 3; ++a) {
    q[a] = std::clamp((p[a] - origin[a]) / control_spacing[a], 0.0,
                      static_cast<double>(control_dims[a] - 1));
    i0[a] = std::min(static_cast<int>(std::floor(q[a])), std::max(0, control_dims[a] - 2));
    t[a] = q[a] - i0[a];
  }
  Vec3 out;
  for (int dk = 0; dk < 2; ++dk) {
    const int k = std::min(i0[2] + dk, control_dims.z - 1);
    const double wz = dk ? t[2] : 1.0 - t[2];
    if (wz == 0.0) continue;
    for (int dj = 0; dj < 2; ++dj) {
      const int j = std::min(i0[1] + dj, control_dims.y - 1);
      const double wy = dj ? t[1] : 1.0 - t[1];
      if (wy == 0.0) continue;
      for (int di = 0; di < 2; ++di) {
        const int i = std::min(i0[0] + di, control_dims.x - 1);
        const double wx = di ? t[0] : 1.0 - t[0];
        if (wx == 0.0) continue;
        out = out + control(i, j, k) * (wx * wy * wz);
      }
    }
  }
  return out;
}

void RegistrationConfig::validate() const {
  require(pyramid_levels >= 1, "pyramid_levels must be >= 1");
  require(search_radius >= 1, "search_radius must be >= 1");
  require(displacement_step >= 1, "displacement_step must be >= 1");
  require(regularization >= 0.0, "regularization must be >= 0");
  require(sweeps_per_level >= 1, "sweeps_per_level must be >= 1");
  require(control_stride >= 1, "control_stride must be >= 1");
  require(max_displacement >= 1 && max_displacement <= 100, "max_displacement must be in [1, 100]");
}

// ---------------------------------------------------------------------------
// Similarity and pyramid

double ncc(const Volume3& a, const Volume3& b, const BinaryMask* region) {
  require(a.grid().same_lattice(b.grid()), "ncc inputs differ in grid");
  if (region != nullptr) require(region->dims() == a.dims(), "ncc region shape mismatch");
  const auto da = a.data(), db = b.data();
  auto in = [&](std::size_t i) { return region == nullptr || region->at(i); };
  double sa = 0, sb = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < da.size(); ++i)
    if (in(i)) {
      sa += da[i];
      sb += db[i];
      ++n;
    }
  require(n >= 2, "ncc region needs at least two voxels");
  const double ma = sa / n, mb = sb / n;
  double cov = 0, va = 0, vb = 0;
  for (std::size_t i = 0; i < da.size(); ++i)
    if (in(i)) {
      const double x = da[i] - ma, y = db[i] - mb;
      cov += x * y;
      va += x * x;
      vb += y * y;
    }
  require(va > 0 && vb > 0, "ncc over a zero-variance region");
  return std::clamp(cov / std::sqrt(va * vb), -1.0, 1.0);
}

std::vector<Volume3> build_pyramid(const Volume3& vol, int levels) {
  require(levels >= 1, "pyramid needs at least one level");
  std::vector<Volume3> out{vol};
  while (static_cast<int>(out.size()) < levels) {
    const Volume3& prev = out.back();
    const Grid& pg = prev.grid();
    const Dims3 nd{pg.dims.x / 2, pg.dims.y / 2, pg.dims.z / 2};
    if (nd.x < 2 || nd.y < 2 || nd.z < 2) break;
    Grid ng{nd, pg.spacing * 2.0, pg.origin + pg.spacing * 0.5};
    Volume3 next(ng);
    for (int k = 0; k < nd.z; ++k)
      for (int j = 0; j < nd.y; ++j)
        for (int i = 0; i < nd.x; ++i) {
          double s = 0.0;
          for (int dk = 0; dk < 2; ++dk)
            for (int dj = 0; dj < 2; ++dj)
              for (int di = 0; di < 2; ++di) s += prev(2 * i + di, 2 * j + dj, 2 * k + dk);
          next(i, j, k) = static_cast<float>(s / 8.0);
        }
    out.push_back(std::move(next));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Registration: coarse-to-fine discrete block matching on a control lattice

namespace {

using Shift = std::array<int, 3>;

// Zero-padded copy so that shifted boxes never leave the buffer.
struct PaddedVolume {
  Dims3 dims;
  int margin = 0;
  std::vector<float> data;

  PaddedVolume(const Volume3& v, int m) : dims(v.dims()), margin(m) {
    const int px = dims.x + 2 * m, py = dims.y + 2 * m, pz = dims.z + 2 * m;
    data.assign(static_cast<std::size_t>(px) * py * pz, 0.0f);
    for (int k = 0; k < dims.z; ++k)
      for (int j = 0; j < dims.y; ++j) {
        const float* src = &v.data()[v.grid().index(0, j, k)];
        std::copy(src, src + dims.x, data.begin() + static_cast<std::ptrdiff_t>(offset(0, j, k)));
      }
  }
  std::ptrdiff_t row() const { return dims.x + 2 * margin; }
  std::ptrdiff_t slice() const { return row() * (dims.y + 2 * margin); }
  std::size_t offset(int i, int j, int k) const {
    return static_cast<std::size_t>((k + margin) * slice() + (j + margin) * row() + (i + margin));
  }
};

// Windows keep every x voxel but only every second row and slice.
constexpr int kRowStep = 2;

struct Window {
  int lo[3];
  int n[3];  // sampled counts
  double count() const { return static_cast<double>(n[0]) * n[1] * n[2]; }
};

struct FixedStats {
  double sum = 0, var = 0;
  bool valid = false;
};

constexpr double kMinVariancePerVoxel = 1e-8;

struct Channel {
  const Volume3* fixed;
  PaddedVolume moving;
};

class LevelSolver {
 public:
  LevelSolver(std::vector<Channel>& channels, const RegistrationConfig& cfg, std::vector<Shift> init)
      : ch_(channels), cfg_(cfg), k_(simd::kernels()) {
    dims_ = ch_.front().fixed->dims();
    cdims_ = control_dims_for(dims_, cfg.control_stride);
    disp_ = std::move(init);
    const std::size_t n = cdims_.count();
    windows_.resize(n);
    memo_.resize(n);
    stats_.assign(n * ch_.size(), {});
    for (int k = 0; k < cdims_.z; ++k)
      for (int j = 0; j < cdims_.y; ++j)
        for (int i = 0; i < cdims_.x; ++i) {
          const std::size_t c = cindex(i, j, k);
          Window& w = windows_[c];
          const int pos[3] = {i * cfg.control_stride, j * cfg.control_stride, k * cfg.control_stride};
          for (int a = 0; a < 3; ++a) {
            const int lo = std::max(0, pos[a] - cfg.control_stride);
            const int hi = std::min(dims_[a] - 1, pos[a] + cfg.control_stride);
            w.lo[a] = lo;
            w.n[a] = a == 0 ? hi - lo + 1 : (hi - lo) / kRowStep + 1;
          }
          for (std::size_t ch = 0; ch < ch_.size(); ++ch) {
            const BoxView fb = fixed_box(ch, w);
            const simd::CrossMoments m = k_.box_cross_moments(fb, fb, w.n[0], w.n[1], w.n[2]);
            FixedStats& s = stats_[c * ch_.size() + ch];
            s.sum = m.sum_m;
            s.var = m.sum_mm - m.sum_m * m.sum_m / w.count();
            s.valid = s.var > kMinVariancePerVoxel * w.count();
          }
        }
  }

  void solve() {
    const int r = cfg_.search_radius;
    for (int sweep = 0; sweep < cfg_.sweeps_per_level; ++sweep) {
      int changed = 0;
      for (int k = 0; k < cdims_.z; ++k)
        for (int j = 0; j < cdims_.y; ++j)
          for (int i = 0; i < cdims_.x; ++i) {
            const std::size_t c = cindex(i, j, k);
            if (!any_valid(c)) continue;
            const Shift current = disp_[c];
            Shift best = current;
            double best_cost = cost(c, i, j, k, current);
            for (int dz = -r; dz <= r; ++dz)
              for (int dy = -r; dy <= r; ++dy)
                for (int dx = -r; dx <= r; ++dx) {
                  if (dx == 0 && dy == 0 && dz == 0) continue;
                  const Shift cand{current[0] + dx * cfg_.displacement_step,
                                   current[1] + dy * cfg_.displacement_step,
                                   current[2] + dz * cfg_.displacement_step};
                  if (std::abs(cand[0]) > cfg_.max_displacement ||
                      std::abs(cand[1]) > cfg_.max_displacement ||
                      std::abs(cand[2]) > cfg_.max_displacement)
                    continue;
                  const double cst = cost(c, i, j, k, cand);
                  if (cst < best_cost) {
                    best_cost = cst;
                    best = cand;
                  }
                }
            if (best != current) {
              disp_[c] = best;
              ++changed;
            }
          }
      if (changed == 0) break;
    }
  }

  const std::vector<Shift>& displacements() const { return disp_; }
  Dims3 control_dims() const { return cdims_; }

 private:
  using BoxView = simd::BoxView;

  std::size_t cindex(int i, int j, int k) const {
    return (static_cast<std::size_t>(k) * cdims_.y + j) * cdims_.x + i;
  }

  BoxView fixed_box(std::size_t ch, const Window& w) const {
    const Volume3& f = *ch_[ch].fixed;
    return {&f.data()[f.grid().index(w.lo[0], w.lo[1], w.lo[2])], kRowStep * dims_.x,
            static_cast<std::ptrdiff_t>(kRowStep) * dims_.x * dims_.y};
  }

  bool any_valid(std::size_t c) const {
    for (std::size_t ch = 0; ch < ch_.size(); ++ch)
      if (stats_[c * ch_.size() + ch].valid) return true;
    return false;
  }

  double data_cost(std::size_t c, const Shift& s) {
    const std::uint32_t key = static_cast<std::uint32_t>((s[0] + 128) | (s[1] + 128) << 8 | (s[2] + 128) << 16);
    auto [it, inserted] = memo_[c].try_emplace(key, 0.0);
    if (inserted) it->second = window_cost(c, s);
    return it->second;
  }

  double window_cost(std::size_t c, const Shift& s) const {
    const Window& w = windows_[c];
    const double n = w.count();
    double total = 0.0;
    for (std::size_t ch = 0; ch < ch_.size(); ++ch) {
      const FixedStats& fs = stats_[c * ch_.size() + ch];
      if (!fs.valid) continue;
      const PaddedVolume& mv = ch_[ch].moving;
      const BoxView mb{&mv.data[mv.offset(w.lo[0] + s[0], w.lo[1] + s[1], w.lo[2] + s[2])],
                       kRowStep * mv.row(), kRowStep * mv.slice()};
      const simd::CrossMoments m = k_.box_cross_moments(fixed_box(ch, w), mb, w.n[0], w.n[1], w.n[2]);
      const double var_m = m.sum_mm - m.sum_m * m.sum_m / n;
      double corr = 0.0;
      if (var_m > kMinVariancePerVoxel * n) {
        const double cov = m.sum_fm - fs.sum * m.sum_m / n;
        corr = std::clamp(cov / std::sqrt(fs.var * var_m), -1.0, 1.0);
      }
      total += 1.0 - corr;
    }
    return total;
  }

  double smoothness(int i, int j, int k, const Shift& s) const {
    double acc = 0.0;
    auto add = [&](int ii, int jj, int kk) {
      if (ii < 0 || jj < 0 || kk < 0 || ii >= cdims_.x || jj >= cdims_.y || kk >= cdims_.z) return;
      const Shift& o = disp_[cindex(ii, jj, kk)];
      for (int a = 0; a < 3; ++a) {
        const double d = s[a] - o[a];
        acc += d * d;
      }
    };
    add(i - 1, j, k);
    add(i + 1, j, k);
    add(i, j - 1, k);
    add(i, j + 1, k);
    add(i, j, k - 1);
    add(i, j, k + 1);
    return acc / (static_cast<double>(cfg_.control_stride) * cfg_.control_stride);
  }

  double cost(std::size_t c, int i, int j, int k, const Shift& s) {
    return data_cost(c, s) + cfg_.regularization * smoothness(i, j, k, s);
  }

  std::vector<Channel>& ch_;
  const RegistrationConfig& cfg_;
  const simd::KernelTable& k_;
  Dims3 dims_, cdims_;
  std::vector<Shift> disp_;
  std::vector<std::unordered_map<std::uint32_t, double>> memo_;
  std::vector<Window> windows_;
  std::vector<FixedStats> stats_;
};

DeformationField to_field(const Grid& level_grid, int stride, Dims3 cdims,
                          const std::vector<Shift>& disp) {
  DeformationField f;
  f.control_dims = cdims;
  f.control_spacing = level_grid.spacing * stride;
  f.origin = level_grid.origin;
  f.displacements.reserve(disp.size());
  for (const auto& d : disp)
    f.displacements.push_back({d[0] * level_grid.spacing.x, d[1] * level_grid.spacing.y,
                               d[2] * level_grid.spacing.z});
  return f;
}

std::vector<Shift> upsample(const DeformationField& coarse, const Grid& fine, int stride,
                            int max_disp) {
  const Dims3 cd = control_dims_for(fine.dims, stride);
  std::vector<Shift> out;
  out.reserve(cd.count());
  for (int k = 0; k < cd.z; ++k)
    for (int j = 0; j < cd.y; ++j)
      for (int i = 0; i < cd.x; ++i) {
        const Vec3 u = coarse.at(fine.center(i * stride, j * stride, k * stride));
        Shift s;
        for (int a = 0; a < 3; ++a)
          s[a] = std::clamp(static_cast<int>(std::lround(u[a] / fine.spacing[a])), -max_disp, max_disp);
        out.push_back(s);
      }
  return out;
}

}  // namespace

DeformationField register_pair(const ChannelPair& fixed, const ChannelPair& moving,
                               const RegistrationConfig& config) {
  config.validate();
  require(fixed.water_fraction.grid().same_lattice(fixed.fat_fraction.grid()),
          "fixed channels differ in grid");
  require(fixed.grid().same_lattice(moving.grid()) &&
              moving.water_fraction.grid().same_lattice(moving.fat_fraction.grid()),
          "fixed and moving channels must share one grid");

  const std::vector<Volume3> fixed_pyr[2] = {build_pyramid(fixed.water_fraction, config.pyramid_levels),
                                             build_pyramid(fixed.fat_fraction, config.pyramid_levels)};
  const std::vector<Volume3> moving_pyr[2] = {build_pyramid(moving.water_fraction, config.pyramid_levels),
                                              build_pyramid(moving.fat_fraction, config.pyramid_levels)};
  const int levels = static_cast<int>(fixed_pyr[0].size());

  DeformationField field;
  bool have_field = false;
  for (int level = levels - 1; level >= 0; --level) {
    const Grid& lg = fixed_pyr[0][static_cast<std::size_t>(level)].grid();
    std::vector<Channel> channels;
    for (int c = 0; c < 2; ++c)
      channels.push_back({&fixed_pyr[c][static_cast<std::size_t>(level)],
                          PaddedVolume(moving_pyr[c][static_cast<std::size_t>(level)],
                                       config.max_displacement)});
    std::vector<Shift> init;
    if (have_field) {
      init = upsample(field, lg, config.control_stride, config.max_displacement);
    } else {
      init.assign(control_dims_for(lg.dims, config.control_stride).count(), Shift{0, 0, 0});
    }
    LevelSolver solver(channels, config, std::move(init));
    solver.solve();
    field = to_field(lg, config.control_stride, solver.control_dims(), solver.displacements());
    have_field = true;
  }
  return field;
}

DeformationField register_template(const ChannelPair& fixed, const Template& moving,
                                   const RegistrationConfig& config) {
  moving.validate();
  return register_pair(fixed, moving.channels, config);
}

Volume3 warp_volume(const Volume3& vol, const DeformationField& field, const Grid& target) {
  field.validate();
  target.validate();
  Volume3 out(target);
  for (int k = 0; k < target.dims.z; ++k)
    for (int j = 0; j < target.dims.y; ++j)
      for (int i = 0; i < target.dims.x; ++i) {
        const Vec3 p = target.center(i, j, k);
        out(i, j, k) = trilinear_sample(vol, p + field.at(p));
      }
  return out;
}

BinaryMask warp_mask(const BinaryMask& seg, const DeformationField& field, const Grid& target) {
  return BinaryMask::from_volume(warp_volume(seg.to_volume(), field, target), 0.5f);
}

double median(std::vector<double> values) {
  require(!values.empty(), "median of an empty set");
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  const double upper = values[mid];
  if (values.size() % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

AtlasResult atlas_measure(const ChannelPair& subject, const BinaryMask& body,
                          std::span<const Template> templates, const AtlasConfig& config) {
  require(!templates.empty(), "atlas needs at least one template");
  require(config.erosion_diameter >= 1 && config.erosion_diameter % 2 == 1,
          "erosion diameter must be odd and >= 1");
  const ChannelPair fixed = subject.masked(body);
  AtlasResult result;
  for (const Template& t : templates) {
    const DeformationField field = register_template(fixed, t, config.registration);
    BinaryMask warped = warp_mask(t.liver_seg, field, subject.grid());
    result.warped_voxels.push_back(warped.count());
    result.warped_masks.push_back(std::move(warped));
  }
  const BinaryMask inter = intersect_masks(result.warped_masks);
  result.intersection_voxels = inter.count();
  const BinaryMask eroded = erode_spherical(inter, config.erosion_diameter);
  result.surviving_voxels = eroded.count();
  if (result.surviving_voxels == 0) {
    std::string counts;
    for (auto c : result.warped_voxels) counts += std::to_string(c) + " ";
    throw AtlasMeasurementError("atlas measurement failed: no voxels survive erosion (warped: " +
                                    counts + "intersection: " +
                                    std::to_string(result.intersection_voxels) + ")",
                                result.warped_voxels, result.intersection_voxels);
  }
  std::vector<double> values;
  values.reserve(result.surviving_voxels);
  const auto ff = subject.fat_fraction.data();
  for (std::size_t i = 0; i < eroded.size(); ++i)
    if (eroded.at(i)) values.push_back(ff[i]);
  result.raw_ff = median(std::move(values));
  return result;
}

CalibrationModel fit_calibration(std::span<const double> raw, std::span<const double> reference) {
  require(raw.size() == reference.size(), "calibration inputs differ in length");
  require(raw.size() >= 2, "calibration needs at least two points");
  const double n = static_cast<double>(raw.size());
  const double mx = std::accumulate(raw.begin(), raw.end(), 0.0) / n;
  const double my = std::accumulate(reference.begin(), reference.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    sxx += (raw[i] - mx) * (raw[i] - mx);
    sxy += (raw[i] - mx) * (reference[i] - my);
  }
  require(sxx > 0.0, "calibration design is degenerate (raw values all equal)");
  const double slope = sxy / sxx;
  return {slope, my - slope * mx};
}

double apply_calibration(const CalibrationModel& model, double raw) {
  return model.slope * raw + model.intercept;
}

}  // namespace liverfat
