#pragma once

// End-to-end study over files: cohort -> preprocess -> atlas and network ->
// comparison report. Every stage reads and writes plain files under three
// roots (cohort, work, out) and is deterministic given the config.
//
// Units: truth.csv stores fractions; atlas, network and report files store
// FF points (percent).

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "liverfat/atlas.hpp"
#include "liverfat/nn/network.hpp"
#include "liverfat/nn/train.hpp"
#include "liverfat/phantom.hpp"
#include "liverfat/preprocess.hpp"
#include "liverfat/stats.hpp"

namespace liverfat {

struct StudyConfig {
  std::filesystem::path cohort_dir = "cohort";
  std::filesystem::path work_dir = "work";
  std::filesystem::path output_dir = "report";

  std::uint64_t seed = 1;
  unsigned workers = 0;  // 0 = hardware concurrency

  CohortSpec cohort;  // seed is taken from `seed`
  int split_a = -1;   // -1: three quarters of the cohort
  int split_b = -1;   // -1: the rest
  int split_c = -1;   // -1: all of B

  int template_count = 3;
  double template_ff_low = 0.08;
  double template_ff_high = 0.20;

  RoiConfig roi;
  LayoutConfig layout;
  AtlasConfig atlas;
  std::string net_layers = "conv(3,2,8) relu maxpool conv(3,1,16) relu maxpool linear(1)";
  nn::TrainConfig train = nn::TrainConfig::desk();
  int cv_folds = 10;

  static StudyConfig desk();
  static StudyConfig full_scale();

  void validate() const;
  unsigned worker_count() const;
  CohortSpec cohort_spec() const;
  std::array<int, 3> splits() const;  // resolved sizes of A, B, C
  nn::NetworkConfig network() const;
  ResampleSpec resample_spec() const;
};

/// Flat "key = value" text, '#' starts a comment. Unknown keys and malformed
/// values throw ValidationError.
void apply_config(StudyConfig& cfg, std::string_view text);
void apply_config_file(StudyConfig& cfg, const std::filesystem::path& path);
std::map<std::string, std::string> parse_key_values(std::string_view text);

struct SubjectRow {
  std::string id;
  double liver_ff = 0.0;       // fraction
  double reference_ff = 0.0;   // fraction, simulated ROI reference
  char split = 'A';            // 'A' labeled, 'B' unlabeled
  bool in_c = false;           // comparison subset, C is a subset of B
};

std::vector<SubjectRow> read_subjects(const std::filesystem::path& cohort_dir);

/// Subjects that failed a stage, with messages; the stage still writes the rest.
struct StageFailures {
  std::vector<std::pair<std::string, std::string>> items;
  bool empty() const { return items.empty(); }
};

void run_cohort_generate(const StudyConfig& cfg, std::ostream& log);
StageFailures run_preprocess(const StudyConfig& cfg, std::ostream& log);
StageFailures run_atlas(const StudyConfig& cfg, bool dump_masks, std::ostream& log);
CalibrationModel run_atlas_calibrate(const StudyConfig& cfg, std::ostream& log);
void run_net_cv(const StudyConfig& cfg, std::ostream& log);
void run_net_train_full(const StudyConfig& cfg, std::ostream& log);
void run_net_infer(const StudyConfig& cfg, const std::filesystem::path& model, std::ostream& log);

struct ComparisonRow {
  std::string name;
  std::string dataset;
  stats::MetricsReport metrics;
};

/// Table rows in order: Reference vs Network (A), Reference vs Atlas (A),
/// Atlas vs Network (A), Atlas vs Network (C). Writes comparison.csv,
/// truth_comparison.csv, outliers.csv and one Bland-Altman SVG per row.
std::vector<ComparisonRow> run_report(const StudyConfig& cfg, std::ostream& log);

/// Same layout, but with phantom truth as the first method.
std::vector<ComparisonRow> truth_rows(const StudyConfig& cfg);

CalibrationModel read_calibration(const std::filesystem::path& path);
void write_calibration(const std::filesystem::path& path, const CalibrationModel& m);

/// subject_id -> value columns of a CSV written by a stage.
std::map<std::string, double> read_value_column(const std::filesystem::path& csv,
                                                std::string_view column);

}  // namespace liverfat
