#include "liverfat/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "liverfat/error.hpp"
#include "liverfat/util.hpp"

namespace liverfat {
namespace {

enum Stream : std::uint64_t { kBias = 1, kNoise = 2, kJitter = 3 };

double ellipsoid_radius2(Vec3 p, Vec3 c, Vec3 h) {
  const double dx = (p.x - c.x) / h.x, dy = (p.y - c.y) / h.y, dz = (p.z - c.z) / h.z;
  return dx * dx + dy * dy + dz * dz;
}

Vec3 shrink(Vec3 h, double t) { return {h.x - t, h.y - t, h.z - t}; }

struct Geometry {
  const PhantomSpec& s;

  bool in_torso(Vec3 p) const {
    return ellipsoid_radius2(p, s.torso_center, s.torso_half_axes) <= 1.0;
  }
  bool in_torso_inner(Vec3 p) const {
    return ellipsoid_radius2(p, s.torso_center, shrink(s.torso_half_axes, s.fat_shell_mm)) <= 1.0;
  }
  double leg_dist2(Vec3 p) const {
    if (p.z < s.leg_top_z) return INFINITY;
    double best = INFINITY;
    for (double side : {-1.0, 1.0}) {
      const double dx = p.x - (s.torso_center.x + side * s.leg_offset_x);
      const double dy = p.y - s.torso_center.y;
      best = std::min(best, dx * dx + dy * dy);
    }
    return best;
  }
  bool in_leg(Vec3 p) const { return leg_dist2(p) <= s.leg_radius * s.leg_radius; }
  bool in_leg_inner(Vec3 p) const {
    const double r = s.leg_radius - s.fat_shell_mm;
    return leg_dist2(p) <= r * r;
  }
  bool in_liver(Vec3 p) const {
    return ellipsoid_radius2(p, s.liver_center, s.liver_half_axes) <= 1.0;
  }
};

// Smooth field in [-1, 1] built from a random combination of low-order terms
// over normalized grid coordinates.
struct BiasField {
  std::array<double, 7> coef{};
  Vec3 lo, hi;

  BiasField(const Grid& g, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    double norm = 0.0;
    for (auto& c : coef) {
      c = u(rng);
      norm += std::abs(c);
    }
    for (auto& c : coef) c /= norm;
    lo = g.center(0, 0, 0);
    hi = g.center(g.dims.x - 1, g.dims.y - 1, g.dims.z - 1);
  }

  double operator()(Vec3 p) const {
    auto norm = [](double v, double a, double b) { return b > a ? 2.0 * (v - a) / (b - a) - 1.0 : 0.0; };
    const double u = norm(p.x, lo.x, hi.x), v = norm(p.y, lo.y, hi.y), w = norm(p.z, lo.z, hi.z);
    // Each basis term lies in [-1, 1], so |field| <= sum |coef| = 1.
    return coef[0] * u + coef[1] * v + coef[2] * w + coef[3] * u * v +
           coef[4] * v * w + coef[5] * u * w + coef[6] * (2.0 * u * u - 1.0);
  }
};

}  // namespace

PhantomSpec PhantomSpec::full_scale() {
  PhantomSpec s;
  s.grid = Grid{{224, 174, 370}, {2.23, 2.23, 3.0}, {0.0, 0.0, 0.0}};
  s.torso_center = {250.0, 194.0, 400.0};
  s.torso_half_axes = {160.0, 110.0, 330.0};
  s.leg_radius = 75.0;
  s.leg_offset_x = 85.0;
  s.leg_top_z = 650.0;
  s.fat_shell_mm = 20.0;
  s.liver_center = {190.0, 194.0, 300.0};
  s.liver_half_axes = {60.0, 60.0, 75.0};
  return s;
}

bool PhantomSpec::liver_inside_torso() const {
  // Fibonacci sampling of the liver surface, checked against the lean torso
  // with a small margin.
  const Vec3 inner = shrink(torso_half_axes, fat_shell_mm);
  if (inner.x <= 0 || inner.y <= 0 || inner.z <= 0) return false;
  constexpr int kPoints = 2000;
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < kPoints; ++i) {
    const double zc = 1.0 - 2.0 * (i + 0.5) / kPoints;
    const double r = std::sqrt(1.0 - zc * zc);
    const double phi = golden * i;
    const Vec3 p{liver_center.x + liver_half_axes.x * r * std::cos(phi),
                 liver_center.y + liver_half_axes.y * r * std::sin(phi),
                 liver_center.z + liver_half_axes.z * zc};
    if (ellipsoid_radius2(p, torso_center, inner) > 0.98) return false;
  }
  return true;
}

void PhantomSpec::validate() const {
  grid.validate();
  auto fraction = [](double f) { return f >= 0.0 && f < 1.0; };
  require(fraction(liver_ff) && liver_ff <= 0.5, "liver_ff must be in [0, 0.5]");
  require(fraction(subcutaneous_ff), "subcutaneous_ff must be in [0, 1)");
  require(fraction(lean_ff), "lean_ff must be in [0, 1)");
  require(noise_sigma >= 0.0 && std::isfinite(noise_sigma), "noise_sigma must be >= 0");
  require(fraction(bias_amplitude), "bias_amplitude must be in [0, 1)");
  require(torso_half_axes.x > 0 && torso_half_axes.y > 0 && torso_half_axes.z > 0,
          "torso half-axes must be > 0");
  require(liver_half_axes.x > 0 && liver_half_axes.y > 0 && liver_half_axes.z > 0,
          "liver half-axes must be > 0");
  require(leg_radius > fat_shell_mm && fat_shell_mm >= 0, "leg radius must exceed the fat shell");
  require(station_count >= 1 && station_overlap >= 0, "invalid station layout");
  require(liver_inside_torso(), "liver ellipsoid is not strictly inside the body");
}

PhantomVolumes generate_phantom(const PhantomSpec& spec) {
  spec.validate();
  const Grid& g = spec.grid;
  const Geometry geo{spec};
  const BiasField bias(g, mix_seed(spec.seed, kBias));
  std::mt19937_64 noise_rng(mix_seed(spec.seed, kNoise));
  std::normal_distribution<double> noise(0.0, 1.0);

  Volume3 water(g), fat(g);
  BinaryMask liver(g), body(g);
  for (int k = 0; k < g.dims.z; ++k)
    for (int j = 0; j < g.dims.y; ++j)
      for (int i = 0; i < g.dims.x; ++i) {
        const Vec3 p = g.center(i, j, k);
        double signal = 0.0, ff = 0.0;
        if (geo.in_torso(p) || geo.in_leg(p)) {
          body.set(i, j, k, true);
          signal = 1.0;
          if (geo.in_liver(p)) {
            liver.set(i, j, k, true);
            ff = spec.liver_ff;
          } else if (geo.in_torso_inner(p) || geo.in_leg_inner(p)) {
            ff = spec.lean_ff;
          } else {
            ff = spec.subcutaneous_ff;
          }
        }
        const double b = 1.0 + spec.bias_amplitude * bias(p);
        double w = (1.0 - ff) * signal * b;
        double f = ff * signal * b;
        if (spec.noise_sigma > 0.0) {
          w += spec.noise_sigma * noise(noise_rng);
          f += spec.noise_sigma * noise(noise_rng);
        }
        water(i, j, k) = static_cast<float>(std::max(0.0, w));
        fat(i, j, k) = static_cast<float>(std::max(0.0, f));
      }
  require(!liver.empty(), "liver does not cover any voxel centers");

  PhantomVolumes out;
  out.water = split_stations(water, spec.station_count, spec.station_overlap);
  out.fat = split_stations(fat, spec.station_count, spec.station_overlap);
  out.truth = PhantomTruth{spec.liver_ff, std::move(liver), std::move(body)};
  return out;
}

void CohortSpec::validate() const {
  require(n_subjects >= 1, "cohort needs at least one subject");
  require(ff_low >= 0.0 && ff_high <= 0.5 && ff_low <= ff_high,
          "cohort FF bounds must satisfy 0 <= low <= high <= 0.5");
  require(body_scale_low > 0 && body_scale_low <= body_scale_high, "invalid body scale range");
  require(liver_scale_low > 0 && liver_scale_low <= liver_scale_high, "invalid liver scale range");
  require(liver_shift_mm >= 0, "liver shift must be >= 0");
}

std::string subject_id(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "sub-%04d", index);
  return buf;
}

CohortSubject cohort_subject(const CohortSpec& cohort, int index) {
  cohort.validate();
  require(index >= 0 && index < cohort.n_subjects, "subject index out of range");
  const std::uint64_t seed = mix_seed(cohort.seed, static_cast<std::uint64_t>(index));
  std::mt19937_64 rng(mix_seed(seed, kJitter));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto draw = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  PhantomSpec s = cohort.base;
  s.seed = seed;
  s.liver_ff = draw(cohort.ff_low, cohort.ff_high);
  for (int attempt = 0;; ++attempt) {
    require(attempt < 1000, "cohort jitter cannot keep the liver inside the torso");
    const double body = draw(cohort.body_scale_low, cohort.body_scale_high);
    s.torso_half_axes = {cohort.base.torso_half_axes.x * body,
                         cohort.base.torso_half_axes.y * body,
                         cohort.base.torso_half_axes.z};
    s.leg_radius = cohort.base.leg_radius * body;
    const double sh = cohort.liver_shift_mm;
    s.liver_center = cohort.base.liver_center +
                     Vec3{draw(-sh, sh), draw(-sh, sh), draw(-sh, sh)};
    s.liver_half_axes = {
        cohort.base.liver_half_axes.x * draw(cohort.liver_scale_low, cohort.liver_scale_high),
        cohort.base.liver_half_axes.y * draw(cohort.liver_scale_low, cohort.liver_scale_high),
        cohort.base.liver_half_axes.z * draw(cohort.liver_scale_low, cohort.liver_scale_high)};
    if (s.liver_inside_torso()) break;
  }
  return {subject_id(index), s};
}

std::vector<CohortMember> generate_cohort(const CohortSpec& spec) {
  spec.validate();
  std::vector<CohortMember> out;
  out.reserve(static_cast<std::size_t>(spec.n_subjects));
  for (int i = 0; i < spec.n_subjects; ++i) {
    auto subject = cohort_subject(spec, i);
    out.push_back({subject.id, generate_phantom(subject.spec)});
  }
  return out;
}

double reference_roi_measurement(const Volume3& ff, const BinaryMask& liver_mask,
                                 std::uint64_t seed, const RoiConfig& cfg) {
  require(ff.dims() == liver_mask.dims(), "FF volume and liver mask differ in shape");
  require(cfg.radius >= 0, "ROI radius must be >= 0");
  const BinaryMask eroded = erode_spherical(liver_mask, cfg.erosion_diameter);
  std::vector<std::array<int, 3>> candidates;
  const Dims3 d = eroded.dims();
  for (int k = 0; k < d.z; ++k)
    for (int j = 0; j < d.y; ++j)
      for (int i = 0; i < d.x; ++i)
        if (eroded(i, j, k)) candidates.push_back({i, j, k});

  std::mt19937_64 rng(seed);
  std::shuffle(candidates.begin(), candidates.end(), rng);

  // Spheres of radius r share no voxel when centers are more than 2r apart.
  const int min_d2 = 4 * cfg.radius * cfg.radius;
  std::vector<std::array<int, 3>> centers;
  for (const auto& c : candidates) {
    bool disjoint = true;
    for (const auto& o : centers) {
      const int dx = c[0] - o[0], dy = c[1] - o[1], dz = c[2] - o[2];
      if (dx * dx + dy * dy + dz * dz <= min_d2) {
        disjoint = false;
        break;
      }
    }
    if (disjoint) centers.push_back(c);
    if (centers.size() == 3) break;
  }
  require(centers.size() == 3, "liver too small for three disjoint ROIs");

  const auto ball = ball_offsets(cfg.radius);
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& c : centers)
    for (const auto& o : ball) {
      const int i = c[0] + o[0], j = c[1] + o[1], k = c[2] + o[2];
      if (i < 0 || j < 0 || k < 0 || i >= d.x || j >= d.y || k >= d.z) continue;
      sum += ff(i, j, k);
      ++n;
    }
  return sum / static_cast<double>(n);
}

}  // namespace liverfat
