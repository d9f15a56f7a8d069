#pragma once

// Agreement and screening statistics between two methods measuring the same
// subjects. Method a is treated as ground truth wherever a direction matters;
// differences are a - b. Values are in FF points (percent).

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace liverfat::stats {

inline constexpr double kNafldThreshold = 5.5;

struct PairedMeasurements {
  std::vector<std::string> ids;
  std::vector<double> a;
  std::vector<double> b;

  void validate() const;
  std::size_t size() const { return a.size(); }
};

struct MetricsReport {
  double mae = 0.0;
  double r2 = 0.0;
  double pearson_r = 0.0;
  double loa_low = 0.0;
  double loa_high = 0.0;
  double roc_auc = 0.0;      // NaN if a has only one class at the threshold
  double sensitivity = 0.0;  // NaN without positives
  double specificity = 0.0;  // NaN without negatives
  double threshold = kNafldThreshold;
  std::size_t n = 0;
};

struct LimitsOfAgreement {
  double low = 0.0;
  double high = 0.0;
  double mean_difference = 0.0;
  double sd_difference = 0.0;
};

struct Screening {
  double sensitivity = 0.0;
  double specificity = 0.0;
};

double mae(const PairedMeasurements& p);
double r2(const PairedMeasurements& p);
double pearson_r(const PairedMeasurements& p);
LimitsOfAgreement loa(const PairedMeasurements& p);
/// labels: nonzero = positive.
double roc_auc(std::span<const double> scores, std::span<const std::uint8_t> labels);
Screening screen_at_threshold(const PairedMeasurements& p, double threshold = kNafldThreshold);

MetricsReport evaluate(const PairedMeasurements& p, double threshold = kNafldThreshold);

struct BlandAltmanPoint {
  double mean = 0.0;
  double difference = 0.0;
};

struct BlandAltmanData {
  std::vector<BlandAltmanPoint> points;
  LimitsOfAgreement limits;
};

BlandAltmanData bland_altman_data(const PairedMeasurements& p);

struct Outlier {
  std::string id;
  double a = 0.0;
  double b = 0.0;
  double abs_difference = 0.0;
};

/// k subjects with the largest |a - b|; ties ordered by subject id.
std::vector<Outlier> top_outliers(const PairedMeasurements& p, std::size_t k = 10);

/// Scatter of differences against means with dashed limits of agreement.
std::string bland_altman_svg(const PairedMeasurements& p, const std::string& title,
                             const std::string& name_a, const std::string& name_b);

}  // namespace liverfat::stats
