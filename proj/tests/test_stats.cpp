#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "liverfat/error.hpp"
#include "liverfat/stats.hpp"
#include "oracles.hpp"

using namespace liverfat;
using namespace liverfat::testing;
using namespace liverfat::stats;

namespace {

PairedMeasurements random_pairs(std::mt19937_64& rng, std::size_t n, double noise) {
  std::uniform_real_distribution<double> ff(0.0, 20.0);
  std::normal_distribution<double> e(0.0, noise);
  PairedMeasurements p;
  for (std::size_t i = 0; i < n; ++i) {
    p.ids.push_back("s" + std::to_string(1000 + i));
    p.a.push_back(ff(rng));
    p.b.push_back(p.a.back() + e(rng));
  }
  return p;
}

}  // namespace

TEST(Metrics, WorkedExample) {
  PairedMeasurements p{{}, {1.0, 2.0, 3.0, 4.0}, {2.0, 2.0, 5.0, 3.0}};
  EXPECT_DOUBLE_EQ(mae(p), 1.0);
  // ss_res = 1 + 0 + 4 + 1 = 6, ss_tot = 5
  EXPECT_DOUBLE_EQ(r2(p), 1.0 - 6.0 / 5.0);
  const auto l = loa(p);
  // differences -1, 0, -2, 1: mean -0.5, sample sd sqrt(5/3)
  EXPECT_DOUBLE_EQ(l.mean_difference, -0.5);
  EXPECT_NEAR(l.sd_difference, std::sqrt(5.0 / 3.0), 1e-15);
  EXPECT_NEAR(l.high, -0.5 + 1.96 * std::sqrt(5.0 / 3.0), 1e-12);
  EXPECT_NEAR(l.low, -0.5 - 1.96 * std::sqrt(5.0 / 3.0), 1e-12);
}

TEST(Metrics, MatchOraclesOnRandomData) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const auto p = random_pairs(rng, 2 + trial, 1.5);
    const std::size_t n = p.size();
    double ma = 0, mb = 0, abs_sum = 0;
    for (std::size_t i = 0; i < n; ++i) {
      ma += p.a[i] / n;
      mb += p.b[i] / n;
      abs_sum += std::fabs(p.a[i] - p.b[i]);
    }
    double res = 0, tot = 0, cov = 0, va = 0, vb = 0;
    for (std::size_t i = 0; i < n; ++i) {
      res += std::pow(p.a[i] - p.b[i], 2);
      tot += std::pow(p.a[i] - ma, 2);
      cov += (p.a[i] - ma) * (p.b[i] - mb);
      va += std::pow(p.a[i] - ma, 2);
      vb += std::pow(p.b[i] - mb, 2);
    }
    EXPECT_NEAR(mae(p), abs_sum / n, 1e-12);
    EXPECT_NEAR(r2(p), 1 - res / tot, 1e-10);
    EXPECT_NEAR(pearson_r(p), cov / std::sqrt(va * vb), 1e-10);
  }
}

TEST(Metrics, Invariants) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> scale(0.1, 10.0), shift(-5.0, 5.0);
  for (int trial = 0; trial < 50; ++trial) {
    auto p = random_pairs(rng, 30, 2.0);
    const double r = pearson_r(p);
    EXPECT_LE(std::fabs(r), 1.0);
    EXPECT_LE(r2(p), 1.0);
    EXPECT_GE(mae(p), 0.0);

    PairedMeasurements swapped{p.ids, p.b, p.a};
    EXPECT_DOUBLE_EQ(mae(swapped), mae(p));
    EXPECT_NEAR(pearson_r(swapped), r, 1e-12);

    PairedMeasurements affine = p;
    const double s = scale(rng), c = shift(rng);
    for (double& x : affine.b) x = s * x + c;
    EXPECT_NEAR(pearson_r(affine), r, 1e-9);

    PairedMeasurements moved = p;
    for (double& x : moved.b) x += c;
    const auto l0 = loa(p), l1 = loa(moved);
    EXPECT_NEAR(l1.low, l0.low - c, 1e-9);
    EXPECT_NEAR(l1.high, l0.high - c, 1e-9);
    EXPECT_NEAR(l1.sd_difference, l0.sd_difference, 1e-9);

    PairedMeasurements same{p.ids, p.a, p.a};
    EXPECT_EQ(mae(same), 0.0);
    EXPECT_EQ(r2(same), 1.0);
  }
}

TEST(RocAuc, MatchesPairwiseOracleWithTies) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> score(0, 6);
  std::bernoulli_distribution label(0.4);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> s(25);
    std::vector<std::uint8_t> y(25);
    for (std::size_t i = 0; i < s.size(); ++i) {
      s[i] = score(rng);
      y[i] = label(rng);
    }
    y[0] = 1;
    y[1] = 0;
    EXPECT_NEAR(roc_auc(s, y), auc_oracle(s, y), 1e-12);
  }
}

TEST(RocAuc, Examples) {
  EXPECT_DOUBLE_EQ(roc_auc(std::vector<double>{1, 2, 3, 4}, std::vector<std::uint8_t>{0, 0, 1, 1}), 1.0);
  EXPECT_DOUBLE_EQ(roc_auc(std::vector<double>{4, 3, 2, 1}, std::vector<std::uint8_t>{0, 0, 1, 1}), 0.0);
  EXPECT_DOUBLE_EQ(roc_auc(std::vector<double>{1, 1, 1, 1}, std::vector<std::uint8_t>{0, 1, 0, 1}), 0.5);
  EXPECT_THROW(roc_auc(std::vector<double>{1, 2}, std::vector<std::uint8_t>{1, 1}), ValidationError);
}

TEST(RocAuc, InvariantToMonotoneTransform) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> s(40), t(40);
    std::vector<std::uint8_t> y(40);
    for (std::size_t i = 0; i < s.size(); ++i) {
      y[i] = i % 3 == 0;
      s[i] = n(rng) + y[i];
      t[i] = std::exp(2.0 * s[i]) - 7.0;
    }
    EXPECT_NEAR(roc_auc(s, y), roc_auc(t, y), 1e-12);
  }
}

TEST(Screening, CountsAroundThreshold) {
  // a: 3 positives (6, 8, 12), 3 negatives (1, 5.5, 4); b flags 8, 12, 4.
  PairedMeasurements p{{}, {6.0, 8.0, 12.0, 1.0, 5.5, 4.0}, {5.0, 9.0, 11.0, 2.0, 5.5, 6.0}};
  const auto s = screen_at_threshold(p);
  EXPECT_DOUBLE_EQ(s.sensitivity, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(s.specificity, 2.0 / 3.0);
  PairedMeasurements neg{{}, {1.0, 2.0}, {1.0, 9.0}};
  EXPECT_TRUE(std::isnan(screen_at_threshold(neg).sensitivity));
  EXPECT_DOUBLE_EQ(screen_at_threshold(neg).specificity, 0.5);
}

TEST(Evaluate, CombinesMetrics) {
  std::mt19937_64 rng(5);
  const auto p = random_pairs(rng, 60, 1.0);
  const MetricsReport r = evaluate(p);
  EXPECT_EQ(r.n, 60u);
  EXPECT_EQ(r.mae, mae(p));
  EXPECT_EQ(r.r2, r2(p));
  EXPECT_EQ(r.loa_low, loa(p).low);
  EXPECT_GT(r.roc_auc, 0.9);
  PairedMeasurements low{{}, {1.0, 2.0, 3.0}, {1.0, 2.5, 3.0}};
  EXPECT_TRUE(std::isnan(evaluate(low).roc_auc));
}

TEST(Validation, RejectsBadSeries) {
  EXPECT_THROW(mae(PairedMeasurements{{}, {1.0}, {1.0}}), ValidationError);
  EXPECT_THROW(mae(PairedMeasurements{{}, {1.0, 2.0}, {1.0}}), ValidationError);
  EXPECT_THROW(mae(PairedMeasurements{{"x"}, {1.0, 2.0}, {1.0, 2.0}}), ValidationError);
  EXPECT_THROW(mae(PairedMeasurements{{}, {1.0, NAN}, {1.0, 2.0}}), ValidationError);
  EXPECT_THROW(r2(PairedMeasurements{{}, {1.0, 1.0}, {1.0, 2.0}}), ValidationError);
}

TEST(BlandAltman, PointsAndPlot) {
  PairedMeasurements p{{"a", "b", "c"}, {2.0, 4.0, 9.0}, {1.0, 5.0, 9.0}};
  const auto ba = bland_altman_data(p);
  ASSERT_EQ(ba.points.size(), 3u);
  EXPECT_DOUBLE_EQ(ba.points[0].mean, 1.5);
  EXPECT_DOUBLE_EQ(ba.points[0].difference, 1.0);
  EXPECT_DOUBLE_EQ(ba.points[1].difference, -1.0);
  const std::string svg = bland_altman_svg(p, "Test", "A", "B");
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  std::size_t circles = 0, dashed = 0;
  for (std::size_t pos = 0; (pos = svg.find("<circle", pos)) != std::string::npos; ++pos) ++circles;
  for (std::size_t pos = 0; (pos = svg.find("stroke-dasharray", pos)) != std::string::npos; ++pos) ++dashed;
  EXPECT_EQ(circles, 3u);
  EXPECT_EQ(dashed, 2u);
}

TEST(Outliers, LargestDifferencesWithIdTies) {
  PairedMeasurements p{{"d", "c", "b", "a"}, {1.0, 5.0, 3.0, 0.0}, {3.0, 5.0, 1.0, 0.5}};
  const auto top = top_outliers(p, 3);
  ASSERT_EQ(top.size(), 3u);
  EXPECT_EQ(top[0].id, "b");
  EXPECT_EQ(top[1].id, "d");
  EXPECT_EQ(top[2].id, "a");
  EXPECT_DOUBLE_EQ(top[2].abs_difference, 0.5);
  EXPECT_EQ(top_outliers(p, 10).size(), 4u);
}
