#include "liverfat/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "liverfat/error.hpp"

namespace liverfat::stats {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double mean_of(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}
}  // namespace

void PairedMeasurements::validate() const {
  require(a.size() == b.size(), "paired series differ in length");
  require(ids.empty() || ids.size() == a.size(), "subject id count differs from values");
  require(a.size() >= 2, "paired series need at least two subjects");
  for (std::size_t i = 0; i < a.size(); ++i)
    require(std::isfinite(a[i]) && std::isfinite(b[i]), "paired series contain non-finite values");
}

double mae(const PairedMeasurements& p) {
  p.validate();
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p.a[i] - p.b[i]);
  return s / static_cast<double>(p.size());
}

double r2(const PairedMeasurements& p) {
  p.validate();
  const double ma = mean_of(p.a);
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    ss_res += (p.a[i] - p.b[i]) * (p.a[i] - p.b[i]);
    ss_tot += (p.a[i] - ma) * (p.a[i] - ma);
  }
  require(ss_tot > 0.0, "r2 undefined: reference series is constant");
  return 1.0 - ss_res / ss_tot;
}

double pearson_r(const PairedMeasurements& p) {
  p.validate();
  const double ma = mean_of(p.a), mb = mean_of(p.b);
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    cov += (p.a[i] - ma) * (p.b[i] - mb);
    va += (p.a[i] - ma) * (p.a[i] - ma);
    vb += (p.b[i] - mb) * (p.b[i] - mb);
  }
  require(va > 0.0 && vb > 0.0, "pearson_r undefined for a constant series");
  return cov / std::sqrt(va * vb);
}

LimitsOfAgreement loa(const PairedMeasurements& p) {
  p.validate();
  std::vector<double> d(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) d[i] = p.a[i] - p.b[i];
  const double m = mean_of(d);
  double ss = 0.0;
  for (double x : d) ss += (x - m) * (x - m);
  const double sd = std::sqrt(ss / static_cast<double>(d.size() - 1));
  return {m - 1.96 * sd, m + 1.96 * sd, m, sd};
}

double roc_auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  require(scores.size() == labels.size(), "roc_auc inputs differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return scores[x] < scores[y]; });
  // Mann-Whitney U with mid-ranks for ties; ranks are 1-based.
  double rank_sum_pos = 0.0;
  double n_pos = 0.0, n_neg = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double mid_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t t = i; t < j; ++t) {
      if (labels[order[t]]) {
        rank_sum_pos += mid_rank;
        n_pos += 1.0;
      } else {
        n_neg += 1.0;
      }
    }
    i = j;
  }
  require(n_pos > 0 && n_neg > 0, "roc_auc needs both positive and negative labels");
  const double u = rank_sum_pos - n_pos * (n_pos + 1.0) / 2.0;
  return u / (n_pos * n_neg);
}

Screening screen_at_threshold(const PairedMeasurements& p, double threshold) {
  p.validate();
  double tp = 0, fn = 0, tn = 0, fp = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const bool truth = p.a[i] > threshold;
    const bool pred = p.b[i] > threshold;
    if (truth) (pred ? tp : fn) += 1;
    else (pred ? fp : tn) += 1;
  }
  return {tp + fn > 0 ? tp / (tp + fn) : kNaN, tn + fp > 0 ? tn / (tn + fp) : kNaN};
}

MetricsReport evaluate(const PairedMeasurements& p, double threshold) {
  p.validate();
  MetricsReport r;
  r.n = p.size();
  r.threshold = threshold;
  r.mae = mae(p);
  r.r2 = r2(p);
  r.pearson_r = pearson_r(p);
  const auto l = loa(p);
  r.loa_low = l.low;
  r.loa_high = l.high;
  std::vector<std::uint8_t> labels(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) labels[i] = p.a[i] > threshold;
  try {
    r.roc_auc = roc_auc(p.b, labels);
  } catch (const ValidationError&) {
    r.roc_auc = kNaN;
  }
  const auto s = screen_at_threshold(p, threshold);
  r.sensitivity = s.sensitivity;
  r.specificity = s.specificity;
  return r;
}

BlandAltmanData bland_altman_data(const PairedMeasurements& p) {
  p.validate();
  BlandAltmanData out;
  out.points.reserve(p.size());
  for (std::size_t i = 0; i < p.size(); ++i)
    out.points.push_back({0.5 * (p.a[i] + p.b[i]), p.a[i] - p.b[i]});
  out.limits = loa(p);
  return out;
}

std::vector<Outlier> top_outliers(const PairedMeasurements& p, std::size_t k) {
  p.validate();
  std::vector<Outlier> all;
  all.reserve(p.size());
  for (std::size_t i = 0; i < p.size(); ++i)
    all.push_back({p.ids.empty() ? std::to_string(i) : p.ids[i], p.a[i], p.b[i],
                   std::abs(p.a[i] - p.b[i])});
  std::stable_sort(all.begin(), all.end(), [](const Outlier& x, const Outlier& y) {
    if (x.abs_difference != y.abs_difference) return x.abs_difference > y.abs_difference;
    return x.id < y.id;
  });
  if (all.size() > k) all.resize(k);
  return all;
}

std::string bland_altman_svg(const PairedMeasurements& p, const std::string& title,
                             const std::string& name_a, const std::string& name_b) {
  const BlandAltmanData ba = bland_altman_data(p);
  constexpr double W = 640, H = 420, L = 70, R = 20, T = 40, B = 60;
  double xmin = ba.points.front().mean, xmax = xmin;
  double ymin = std::min(ba.limits.low, 0.0), ymax = std::max(ba.limits.high, 0.0);
  for (const auto& pt : ba.points) {
    xmin = std::min(xmin, pt.mean);
    xmax = std::max(xmax, pt.mean);
    ymin = std::min(ymin, pt.difference);
    ymax = std::max(ymax, pt.difference);
  }
  if (xmax - xmin < 1e-9) { xmin -= 1; xmax += 1; }
  const double ypad = 0.1 * std::max(ymax - ymin, 1e-9);
  ymin -= ypad;
  ymax += ypad;
  auto sx = [&](double x) { return L + (x - xmin) / (xmax - xmin) * (W - L - R); };
  auto sy = [&](double y) { return T + (ymax - y) / (ymax - ymin) * (H - T - B); };

  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(2);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" << title << "</text>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B
     << "\" stroke=\"black\"/>\n";
  os << "<text x=\"" << W / 2 << "\" y=\"" << H - 20 << "\" text-anchor=\"middle\" font-size=\"12\">Mean of "
     << name_a << " and " << name_b << " (FF)</text>\n";
  os << "<text x=\"18\" y=\"" << H / 2 << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 18 "
     << H / 2 << ")\">" << name_a << " - " << name_b << " (FF)</text>\n";
  auto hline = [&](double y, const char* dash, const char* color) {
    os << "<line x1=\"" << L << "\" y1=\"" << sy(y) << "\" x2=\"" << W - R << "\" y2=\"" << sy(y)
       << "\" stroke=\"" << color << "\"" << (dash[0] ? " stroke-dasharray=\"" : "") << dash
       << (dash[0] ? "\"" : "") << "/>\n";
  };
  hline(0.0, "", "#999999");
  hline(ba.limits.mean_difference, "", "#444444");
  hline(ba.limits.low, "6,4", "#c00000");
  hline(ba.limits.high, "6,4", "#c00000");
  for (const auto& pt : ba.points)
    os << "<circle cx=\"" << sx(pt.mean) << "\" cy=\"" << sy(pt.difference)
       << "\" r=\"2.5\" fill=\"#1f4e9c\" fill-opacity=\"0.6\"/>\n";
  os << "<text x=\"" << W - R << "\" y=\"" << sy(ba.limits.high) - 4
     << "\" text-anchor=\"end\" font-size=\"11\">+1.96 SD: " << ba.limits.high << "</text>\n";
  os << "<text x=\"" << W - R << "\" y=\"" << sy(ba.limits.low) + 14
     << "\" text-anchor=\"end\" font-size=\"11\">-1.96 SD: " << ba.limits.low << "</text>\n";
  os << "</svg>\n";
  return os.str();
}

}  // namespace liverfat::stats
