#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "liverfat/atlas.hpp"
#include "liverfat/phantom.hpp"
#include "liverfat/preprocess.hpp"
#include "liverfat/volume.hpp"
#include "support.hpp"

using namespace liverfat;
using namespace liverfat::testing;

namespace {

double ncc_oracle(const Volume3& a, const Volume3& b) {
  const std::size_t n = a.size();
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += a.data()[i];
    mb += b.data()[i];
  }
  ma /= n;
  mb /= n;
  double cov = 0, va = 0, vb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    cov += (a.data()[i] - ma) * (b.data()[i] - mb);
    va += (a.data()[i] - ma) * (a.data()[i] - ma);
    vb += (b.data()[i] - mb) * (b.data()[i] - mb);
  }
  return cov / std::sqrt(va * vb);
}

struct Subject {
  ChannelPair channels;
  BinaryMask body;
  BinaryMask liver;
  double ff = 0.0;
};

Subject make_subject(const PhantomSpec& spec) {
  const auto p = generate_phantom(spec);
  auto x = preprocess_subject(p.water, p.fat, nullptr, LayoutConfig::desk());
  return {ChannelPair{std::move(x.water_fraction), std::move(x.fat_fraction)}, std::move(x.body),
          p.truth.liver_mask, spec.liver_ff};
}

Template make_template(const Subject& s, const std::string& id) {
  return {id, s.channels.masked(s.body), s.liver};
}

PhantomSpec shifted(PhantomSpec s, double dx_mm) {
  s.torso_center.x += dx_mm;
  s.liver_center.x += dx_mm;
  return s;
}

}  // namespace

TEST(Ncc, SelfAndNegation) {
  std::mt19937_64 rng(1);
  const Volume3 a = random_volume(unit_grid({7, 6, 5}), rng);
  Volume3 neg = a;
  for (float& v : neg.data()) v = -v;
  EXPECT_NEAR(ncc(a, a), 1.0, 1e-12);
  EXPECT_NEAR(ncc(a, neg), -1.0, 1e-12);
}

TEST(Ncc, MatchesOracleAndAffineInvariant) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<float> scale(0.1f, 5.0f), offset(-3.0f, 3.0f);
  for (int trial = 0; trial < 30; ++trial) {
    const Grid g = random_grid(rng, 10);
    if (g.count() < 2) continue;
    const Volume3 a = random_volume(g, rng), b = random_volume(g, rng);
    const double r = ncc(a, b);
    EXPECT_NEAR(r, ncc_oracle(a, b), 1e-9);
    Volume3 t = b;
    const float s = scale(rng), o = offset(rng);
    for (float& v : t.data()) v = s * v + o;
    EXPECT_NEAR(ncc(a, t), r, 1e-5);
  }
}

TEST(Ncc, RegionRestrictsVoxels) {
  std::mt19937_64 rng(3);
  const Grid g = unit_grid({6, 6, 6});
  Volume3 a = random_volume(g, rng), b = a;
  BinaryMask region(g);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 6; ++j)
      for (int k = 0; k < 6; ++k) {
        region.set(i, j, k, true);
        b(i + 3, j, k) = -a(i + 3, j, k);
      }
  EXPECT_NEAR(ncc(a, b, &region), 1.0, 1e-12);
  EXPECT_LT(ncc(a, b), 0.99);
  EXPECT_THROW(ncc(Volume3(g, 1.0f), b), ValidationError);
}

TEST(Pyramid, MeanPoolsAndStopsEarly) {
  std::mt19937_64 rng(4);
  const Grid g{{16, 12, 8}, {2.0, 3.0, 1.0}, {5.0, -1.0, 0.0}};
  const Volume3 v = random_volume(g, rng);
  const auto pyr = build_pyramid(v, 6);
  ASSERT_EQ(pyr.size(), 3u);  // 16x12x8 -> 8x6x4 -> 4x3x2; a fourth would have z = 1
  EXPECT_TRUE(std::equal(pyr[0].data().begin(), pyr[0].data().end(), v.data().begin()));
  EXPECT_EQ(pyr[1].dims(), (Dims3{8, 6, 4}));
  EXPECT_EQ(pyr[1].grid().spacing, (Vec3{4.0, 6.0, 2.0}));
  EXPECT_EQ(pyr[1].grid().origin, (Vec3{6.0, 0.5, 0.5}));
  for (int k = 0; k < 4; ++k)
    for (int j = 0; j < 6; ++j)
      for (int i = 0; i < 8; ++i) {
        double s = 0;
        for (int c = 0; c < 8; ++c) s += v(2 * i + (c & 1), 2 * j + ((c >> 1) & 1), 2 * k + (c >> 2));
        ASSERT_NEAR(pyr[1](i, j, k), s / 8, 1e-6);
      }
  EXPECT_EQ(build_pyramid(v, 1).size(), 1u);
  EXPECT_THROW(build_pyramid(v, 0), ValidationError);
}

TEST(DeformationField, InterpolatesControlValues) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  const Grid g{{20, 17, 13}, {2.0, 2.0, 3.0}, {1.0, 2.0, 3.0}};
  DeformationField f = DeformationField::zero(g, 4);
  EXPECT_EQ(f.control_dims, (Dims3{6, 5, 4}));
  for (auto& d : f.displacements) d = {u(rng), u(rng), u(rng)};
  for (int k = 0; k < f.control_dims.z; ++k)
    for (int j = 0; j < f.control_dims.y; ++j)
      for (int i = 0; i < f.control_dims.x; ++i) {
        const Vec3 p = f.origin + Vec3{i * f.control_spacing.x, j * f.control_spacing.y,
                                       k * f.control_spacing.z};
        const Vec3 d = f.at(p);
        for (int a = 0; a < 3; ++a) ASSERT_NEAR(d[a], f.control(i, j, k)[a], 1e-12);
      }
  const Vec3 mid = f.at(f.origin + f.control_spacing * 0.5);
  Vec3 avg;
  for (int c = 0; c < 8; ++c) avg = avg + f.control(c & 1, (c >> 1) & 1, c >> 2) * 0.125;
  for (int a = 0; a < 3; ++a) EXPECT_NEAR(mid[a], avg[a], 1e-12);
}

TEST(DeformationField, UniformIsConstantEverywhere) {
  const Grid g{{9, 9, 9}, {1.5, 1.5, 1.5}, {}};
  const DeformationField f = DeformationField::uniform(g, 3, {1.0, -2.0, 0.5});
  for (double x : {-10.0, 0.0, 3.3, 50.0}) EXPECT_EQ(f.at({x, x, x}), (Vec3{1.0, -2.0, 0.5}));
}

TEST(WarpMask, ZeroFieldIsIdentity) {
  std::mt19937_64 rng(6);
  const Grid g{{10, 9, 8}, {2.0, 1.0, 3.0}, {}};
  const BinaryMask m = random_mask(g, rng, 0.4);
  EXPECT_TRUE(warp_mask(m, DeformationField::zero(g, 2), g) == m);
}

TEST(WarpMask, IntegerShiftMovesVoxels) {
  std::mt19937_64 rng(7);
  const Grid g{{12, 10, 8}, {2.0, 1.0, 3.0}, {}};
  const BinaryMask m = random_mask(g, rng, 0.5);
  const int sx = 2, sy = -1, sz = 1;
  const BinaryMask w =
      warp_mask(m, DeformationField::uniform(g, 4, {sx * 2.0, sy * 1.0, sz * 3.0}), g);
  for (int k = 0; k < 8; ++k)
    for (int j = 0; j < 10; ++j)
      for (int i = 0; i < 12; ++i) {
        const int a = i + sx, b = j + sy, c = k + sz;
        const bool inside = a >= 0 && b >= 0 && c >= 0 && a < 12 && b < 10 && c < 8;
        ASSERT_EQ(w(i, j, k), inside && m(a, b, c));
      }
}

TEST(WarpMask, MatchesThresholdedTrilinearOracle) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-2.5, 2.5);
  for (int trial = 0; trial < 5; ++trial) {
    const Grid g{{11, 9, 7}, {1.0, 1.5, 2.0}, {0.0, 0.0, 0.0}};
    const BinaryMask m = random_mask(g, rng, 0.5);
    DeformationField f = DeformationField::zero(g, 3);
    for (auto& d : f.displacements) d = {u(rng), u(rng), u(rng)};
    const BinaryMask w = warp_mask(m, f, g);
    const Volume3 mv = m.to_volume();
    for (int k = 0; k < 7; ++k)
      for (int j = 0; j < 9; ++j)
        for (int i = 0; i < 11; ++i) {
          const Vec3 p = g.center(i, j, k);
          ASSERT_EQ(w(i, j, k), trilinear_sample(mv, p + f.at(p)) >= 0.5f);
        }
  }
}

TEST(Registration, IdentityPairGivesNearZeroField) {
  PhantomSpec s;
  s.noise_sigma = 0.01;
  s.liver_ff = 0.12;
  const Subject a = make_subject(s);
  const ChannelPair fixed = a.channels.masked(a.body);
  const DeformationField f = register_pair(fixed, fixed, RegistrationConfig{});
  const Grid& g = fixed.grid();
  double worst = 0.0;
  for (const auto& d : f.displacements)
    worst = std::max({worst, std::fabs(d.x / g.spacing.x), std::fabs(d.y / g.spacing.y),
                      std::fabs(d.z / g.spacing.z)});
  EXPECT_LT(worst, 0.1);
}

TEST(Registration, RecoversWholeVoxelTranslation) {
  PhantomSpec s;
  s.noise_sigma = 0.01;
  s.liver_ff = 0.12;
  const Subject fixed = make_subject(s);
  const Subject moving = make_subject(shifted(s, 2 * s.grid.spacing.x));
  const DeformationField f =
      register_pair(fixed.channels.masked(fixed.body), moving.channels.masked(moving.body),
                    RegistrationConfig{});
  const Grid& g = fixed.channels.grid();
  std::vector<double> dx, dy, dz;
  for (std::size_t i = 0; i < fixed.liver.size(); ++i) {
    if (!fixed.liver.at(i)) continue;
    const int x = static_cast<int>(i % g.dims.x);
    const int y = static_cast<int>(i / g.dims.x % g.dims.y);
    const int z = static_cast<int>(i / (std::size_t(g.dims.x) * g.dims.y));
    const Vec3 d = f.at(g.center(x, y, z));
    dx.push_back(d.x / g.spacing.x);
    dy.push_back(d.y / g.spacing.y);
    dz.push_back(d.z / g.spacing.z);
  }
  EXPECT_NEAR(median(dx), 2.0, 0.5);
  EXPECT_NEAR(median(dy), 0.0, 0.5);
  EXPECT_NEAR(median(dz), 0.0, 0.5);
}

TEST(Registration, PropagatedLiverOverlapsTruth) {
  CohortSpec c;
  c.base.noise_sigma = 0.01;
  c.ff_low = 0.08;
  c.ff_high = 0.20;
  c.seed = 2024;
  c.n_subjects = 40;
  double total = 0.0;
  for (int pair = 0; pair < 20; ++pair) {
    const Subject fixed = make_subject(cohort_subject(c, 2 * pair).spec);
    const Subject moving = make_subject(cohort_subject(c, 2 * pair + 1).spec);
    const Template t = make_template(moving, "tpl");
    const DeformationField f =
        register_template(fixed.channels.masked(fixed.body), t, RegistrationConfig{});
    const double d = dice(warp_mask(t.liver_seg, f, fixed.channels.grid()), fixed.liver);
    EXPECT_GE(d, 0.80) << "pair " << pair;
    total += d;
  }
  EXPECT_GE(total / 20, 0.85);
}

TEST(Registration, RejectsMismatchedGrids) {
  const ChannelPair a{Volume3(unit_grid({8, 8, 8})), Volume3(unit_grid({8, 8, 8}))};
  const ChannelPair b{Volume3(unit_grid({8, 8, 9})), Volume3(unit_grid({8, 8, 9}))};
  EXPECT_THROW(register_pair(a, b, RegistrationConfig{}), ValidationError);
  RegistrationConfig bad;
  bad.max_displacement = 0;
  EXPECT_THROW(register_pair(a, a, bad), ValidationError);
}

TEST(AtlasMeasure, SelfTemplateRecoversTruth) {
  for (double ff : {0.02, 0.11, 0.19}) {
    PhantomSpec s;
    s.liver_ff = ff;
    const Subject a = make_subject(s);
    const Template t = make_template(a, "self");
    const AtlasResult r = atlas_measure(a.channels, a.body, std::span(&t, 1), AtlasConfig{});
    EXPECT_NEAR(r.raw_ff, ff, 0.01);
    EXPECT_GT(r.surviving_voxels, 0u);
    EXPECT_LE(r.surviving_voxels, r.intersection_voxels);
  }
}

TEST(AtlasMeasure, MonotoneInLiverFat) {
  PhantomSpec ts;
  ts.liver_ff = 0.15;
  ts.liver_center.x += 4.0;
  const Template t = make_template(make_subject(ts), "tpl");
  double prev = -1.0;
  for (double ff : {0.04, 0.08, 0.12, 0.16, 0.20}) {
    PhantomSpec s;
    s.liver_ff = ff;
    s.noise_sigma = 0.01;
    const Subject a = make_subject(s);
    const double raw = atlas_measure(a.channels, a.body, std::span(&t, 1), AtlasConfig{}).raw_ff;
    EXPECT_GT(raw, prev);
    prev = raw;
  }
}

TEST(AtlasMeasure, ScalesWithChannels) {
  PhantomSpec s;
  s.liver_ff = 0.1;
  s.noise_sigma = 0.01;
  const Subject a = make_subject(s);
  PhantomSpec ts = s;
  ts.liver_ff = 0.16;
  ts.seed = 3;
  const Template t = make_template(make_subject(ts), "tpl");
  const double raw = atlas_measure(a.channels, a.body, std::span(&t, 1), AtlasConfig{}).raw_ff;
  ChannelPair doubled = a.channels;
  for (float& v : doubled.water_fraction.data()) v *= 2.0f;
  for (float& v : doubled.fat_fraction.data()) v *= 2.0f;
  const double raw2 = atlas_measure(doubled, a.body, std::span(&t, 1), AtlasConfig{}).raw_ff;
  EXPECT_NEAR(raw2, 2.0 * raw, 1e-6);
}

TEST(AtlasMeasure, TinyLiverFails) {
  PhantomSpec s;
  const Subject a = make_subject(s);
  Template t = make_template(a, "tiny");
  t.liver_seg = BinaryMask(a.body.grid());
  t.liver_seg.set(30, 24, 30, true);
  try {
    atlas_measure(a.channels, a.body, std::span(&t, 1), AtlasConfig{});
    FAIL() << "expected AtlasMeasurementError";
  } catch (const AtlasMeasurementError& e) {
    ASSERT_EQ(e.warped_voxels.size(), 1u);
    EXPECT_LE(e.intersection_voxels, 1u);
  }
  EXPECT_THROW(atlas_measure(a.channels, a.body, {}, AtlasConfig{}), ValidationError);
}

TEST(Median, MatchesSortedOracle) {
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<int> n(1, 40);
  std::uniform_int_distribution<int> v(-5, 5);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> x(static_cast<std::size_t>(n(rng)));
    for (double& e : x) e = v(rng);
    std::vector<double> s = x;
    std::sort(s.begin(), s.end());
    const std::size_t m = s.size() / 2;
    const double expect = s.size() % 2 ? s[m] : 0.5 * (s[m - 1] + s[m]);
    ASSERT_EQ(median(x), expect);
  }
  EXPECT_EQ(median({3.0, 1.0, 2.0}), 2.0);
  EXPECT_EQ(median({4.0, 1.0, 2.0, 3.0}), 2.5);
  EXPECT_THROW(median({}), ValidationError);
}

TEST(Calibration, RecoversExactLine) {
  std::vector<double> raw{1.0, 3.0, 4.5, 8.0, 12.0}, ref;
  for (double x : raw) ref.push_back(0.9 * x - 0.8);
  const CalibrationModel m = fit_calibration(raw, ref);
  EXPECT_NEAR(m.slope, 0.9, 1e-12);
  EXPECT_NEAR(m.intercept, -0.8, 1e-12);
  EXPECT_NEAR(apply_calibration(m, 10.0), 8.2, 1e-12);
}

TEST(Calibration, MinimizesSquaredError) {
  std::mt19937_64 rng(10);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_real_distribution<double> x(0.0, 20.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> raw(30), ref(30);
    for (std::size_t i = 0; i < raw.size(); ++i) {
      raw[i] = x(rng);
      ref[i] = 1.2 * raw[i] + 0.5 + noise(rng);
    }
    const CalibrationModel m = fit_calibration(raw, ref);
    auto sse = [&](double a, double b) {
      double s = 0;
      for (std::size_t i = 0; i < raw.size(); ++i) s += std::pow(a * raw[i] + b - ref[i], 2);
      return s;
    };
    const double best = sse(m.slope, m.intercept);
    for (double da : {-1e-3, 1e-3})
      for (double db : {-1e-2, 0.0, 1e-2}) EXPECT_GT(sse(m.slope + da, m.intercept + db), best);
  }
}

TEST(Calibration, RejectsDegenerateInput) {
  std::vector<double> same{2.0, 2.0, 2.0}, ref{1.0, 2.0, 3.0};
  EXPECT_THROW(fit_calibration(same, ref), ValidationError);
  EXPECT_THROW(fit_calibration(std::vector<double>{1.0}, std::vector<double>{1.0}), ValidationError);
  EXPECT_THROW(fit_calibration(ref, std::vector<double>{1.0, 2.0}), ValidationError);
}
