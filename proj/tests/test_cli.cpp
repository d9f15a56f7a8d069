#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <set>

#include "liverfat/stats.hpp"
#include "liverfat/study.hpp"
#include "liverfat/util.hpp"

using namespace liverfat;
namespace fs = std::filesystem;

namespace {

class Sandbox {
 public:
  Sandbox() {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    root_ = fs::temp_directory_path() /
            ("liverfat_cli_" + std::string(info->name()) + "_" + std::to_string(::getpid()));
    fs::remove_all(root_);
    fs::create_directories(root_);
  }
  ~Sandbox() { fs::remove_all(root_); }

  const fs::path& root() const { return root_; }

  void write_config(const std::string& text) const { write_text(root_ / "study.cfg", text); }

  /// Runs the CLI with the sandbox roots and returns its exit status.
  int run(const std::string& args) const {
    const std::string cmd = std::string(LIVERFAT_CLI_PATH) + " --cohort " + (root_ / "cohort").string() +
                            " --work " + (root_ / "work").string() + " --out " + (root_ / "report").string() +
                            (fs::exists(root_ / "study.cfg") ? " --config " + (root_ / "study.cfg").string() : "") +
                            " " + args + " > " + (root_ / "stdout.txt").string() + " 2> " +
                            (root_ / "stderr.txt").string();
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  std::string manifest(const std::string& dir) const {
    const auto bytes = read_bytes(root_ / dir / "manifest.csv");
    return std::string(bytes.begin(), bytes.end());
  }

 private:
  fs::path root_;
};

constexpr const char* kSmallStudy = R"(# tiny study
cohort.n = 12
split.a = 8
split.b = 4
split.c = 2
templates.count = 2
train.iterations = 40
train.drop_window = 10
train.batch_size = 8
cv.folds = 2
workers = 1
)";

}  // namespace

TEST(Cli, FullPipelineIsDeterministic) {
  Sandbox box;
  box.write_config(kSmallStudy);
  ASSERT_EQ(box.run("--seed 5 cohort generate"), 0);
  const std::string cohort_manifest = box.manifest("cohort");
  ASSERT_EQ(box.run("--seed 5 cohort generate"), 0);
  EXPECT_EQ(box.manifest("cohort"), cohort_manifest);

  const CsvTable truth = read_csv(box.root() / "cohort" / "truth.csv");
  ASSERT_EQ(truth.rows.size(), 12u);
  std::vector<double> ff;
  for (std::size_t i = 0; i < truth.rows.size(); ++i) ff.push_back(std::stod(truth.cell(i, "liver_ff")));
  std::sort(ff.begin(), ff.end());
  const double med = 0.5 * (ff[5] + ff[6]);
  EXPECT_GE(med, 0.0);
  EXPECT_LE(med, 0.20);

  const auto subjects = read_subjects(box.root() / "cohort");
  std::size_t na = 0, nb = 0, nc = 0;
  for (const auto& s : subjects) {
    na += s.split == 'A';
    nb += s.split == 'B';
    nc += s.in_c;
    if (s.in_c) {
      EXPECT_EQ(s.split, 'B');
    }
  }
  EXPECT_EQ(na, 8u);
  EXPECT_EQ(nb, 4u);
  EXPECT_EQ(nc, 2u);

  ASSERT_EQ(box.run("preprocess run"), 0);
  for (const auto& s : subjects) EXPECT_TRUE(fs::exists(box.root() / "work" / "prep" / (s.id + ".pgm")));
  const std::string prep_manifest = box.manifest("work/prep");
  ASSERT_EQ(box.run("preprocess run"), 0);
  EXPECT_EQ(box.manifest("work/prep"), prep_manifest);

  ASSERT_EQ(box.run("atlas run"), 0);
  ASSERT_EQ(box.run("atlas calibrate"), 0);
  const auto atlas = read_value_column(box.root() / "work" / "atlas" / "atlas.csv", "corrected_ff");
  const auto raw = read_value_column(box.root() / "work" / "atlas" / "atlas.csv", "raw_ff");
  EXPECT_EQ(atlas.size(), 12u);
  // Least squares on A cannot do worse than the identity map in squared error.
  double sse_raw = 0, sse_cal = 0;
  for (const auto& s : subjects) {
    if (s.split != 'A') continue;
    sse_raw += std::pow(raw.at(s.id) - 100 * s.reference_ff, 2);
    sse_cal += std::pow(atlas.at(s.id) - 100 * s.reference_ff, 2);
  }
  EXPECT_LE(sse_cal, sse_raw + 1e-9);
  const std::string atlas_manifest = box.manifest("work/atlas");
  ASSERT_EQ(box.run("atlas run"), 0);
  EXPECT_EQ(box.manifest("work/atlas"), atlas_manifest);

  ASSERT_EQ(box.run("net cv"), 0);
  const CsvTable folds = read_csv(box.root() / "work" / "net" / "cv" / "folds.csv");
  std::set<std::string> covered;
  for (std::size_t i = 0; i < folds.rows.size(); ++i) EXPECT_TRUE(covered.insert(folds.cell(i, "subject_id")).second);
  EXPECT_EQ(covered.size(), na);
  const auto cv = read_value_column(box.root() / "work" / "net" / "cv" / "cv_predictions.csv", "prediction");
  EXPECT_EQ(cv.size(), na);
  for (const auto& s : subjects) {
    if (s.split == 'A') {
      EXPECT_EQ(cv.count(s.id), 1u);
    }
  }
  const std::string cv_manifest = box.manifest("work/net/cv");
  ASSERT_EQ(box.run("net cv"), 0);
  EXPECT_EQ(box.manifest("work/net/cv"), cv_manifest);

  ASSERT_EQ(box.run("net train-full"), 0);
  ASSERT_EQ(box.run("net infer"), 0);
  const auto infer = read_value_column(box.root() / "work" / "net" / "infer" / "predictions.csv", "prediction");
  EXPECT_EQ(infer.size(), nb);
  const std::string infer_manifest = box.manifest("work/net/infer");
  ASSERT_EQ(box.run("net train-full"), 0);
  ASSERT_EQ(box.run("net infer"), 0);
  EXPECT_EQ(box.manifest("work/net/infer"), infer_manifest);

  ASSERT_EQ(box.run("report compare"), 0);
  const CsvTable cmp = read_csv(box.root() / "report" / "comparison.csv");
  ASSERT_EQ(cmp.rows.size(), 4u);
  EXPECT_EQ(cmp.header, (std::vector<std::string>{"comparison", "dataset", "n", "MAE", "R2", "LoA_low", "LoA_high",
                                                  "ROC_AUC", "Sens", "Spec", "pearson_r"}));
  EXPECT_EQ(cmp.rows[0][0], "Reference vs Network");
  EXPECT_EQ(cmp.rows[1][0], "Reference vs Atlas");
  EXPECT_EQ(cmp.rows[2][0], "Atlas vs Network");
  EXPECT_EQ(cmp.rows[3][0], "Atlas vs Network");
  EXPECT_EQ(cmp.rows[3][1], "C");
  std::size_t svgs = 0;
  for (const auto& e : fs::directory_iterator(box.root() / "report")) svgs += e.path().extension() == ".svg";
  EXPECT_EQ(svgs, 4u);

  // Row 2 recomputed directly from the stage files.
  stats::PairedMeasurements p;
  for (const auto& s : subjects) {
    if (s.split != 'A') continue;
    p.ids.push_back(s.id);
    p.a.push_back(100 * s.reference_ff);
    p.b.push_back(atlas.at(s.id));
  }
  const auto m = stats::evaluate(p);
  EXPECT_EQ(cmp.cell(1, "MAE"), fmt_double(m.mae));
  EXPECT_EQ(cmp.cell(1, "R2"), fmt_double(m.r2));
  EXPECT_EQ(cmp.cell(1, "LoA_low"), fmt_double(m.loa_low));
  EXPECT_EQ(cmp.cell(1, "n"), std::to_string(na));
  const std::string report_manifest = box.manifest("report");
  ASSERT_EQ(box.run("report compare"), 0);
  EXPECT_EQ(box.manifest("report"), report_manifest);
}

TEST(Cli, CalibrateRecoversSyntheticLine) {
  Sandbox box;
  CsvTable truth, splits, atlas;
  truth.header = {"subject_id", "liver_ff", "reference_roi_ff"};
  splits.header = {"subject_id", "split", "in_c"};
  atlas.header = {"subject_id", "raw_ff", "corrected_ff", "surviving_voxels"};
  for (int i = 0; i < 10; ++i) {
    const double raw = 1.0 + 2.0 * i;
    const std::string id = "sub-" + std::to_string(100 + i);
    truth.rows.push_back({id, fmt_double(0.01 * raw), fmt_double((0.9 * raw - 0.8) / 100.0)});
    splits.rows.push_back({id, i < 8 ? "A" : "B", "0"});
    atlas.rows.push_back({id, fmt_double(raw), "nan", "100"});
  }
  write_csv(box.root() / "cohort" / "truth.csv", truth);
  write_csv(box.root() / "cohort" / "splits.csv", splits);
  write_csv(box.root() / "work" / "atlas" / "atlas.csv", atlas);
  write_manifest(box.root() / "work" / "atlas", {"atlas.csv"});
  ASSERT_EQ(box.run("atlas calibrate"), 0);
  const CalibrationModel m = read_calibration(box.root() / "work" / "atlas" / "calibration.txt");
  EXPECT_NEAR(m.slope, 0.9, 1e-9);
  EXPECT_NEAR(m.intercept, -0.8, 1e-9);
  const auto corrected = read_value_column(box.root() / "work" / "atlas" / "atlas.csv", "corrected_ff");
  EXPECT_NEAR(corrected.at("sub-109"), 0.9 * 19.0 - 0.8, 1e-9);
}

TEST(Cli, ExitCodes) {
  Sandbox box;
  EXPECT_EQ(box.run("--help"), 0);
  EXPECT_EQ(box.run("frobnicate"), 1);
  EXPECT_EQ(box.run("cohort"), 1);
  EXPECT_EQ(box.run("preprocess run"), 1);  // no cohort yet
  EXPECT_EQ(box.run("--seed notanumber cohort generate"), 1);
  box.write_config("cohort.n = 4\nno.such.key = 3\n");
  EXPECT_EQ(box.run("cohort generate"), 1);
  box.write_config("cohort.n = 4\nsplit.a = 3\nsplit.b = 3\n");
  EXPECT_EQ(box.run("cohort generate"), 1);
  box.write_config("cohort.n = 4\ncv.folds = 2\ntemplates.count = 1\n");
  ASSERT_EQ(box.run("cohort generate"), 0);
  fs::remove_all(box.root() / "cohort" / "templates");
  ASSERT_EQ(box.run("preprocess run"), 0);
  EXPECT_EQ(box.run("atlas run"), 1);  // missing templates
  EXPECT_EQ(box.run("net infer"), 1);  // no model
  EXPECT_EQ(box.run("report compare"), 1);
  // A corrupt station file is a per-subject runtime failure.
  const auto subjects = read_subjects(box.root() / "cohort");
  write_text(box.root() / "cohort" / "volumes" / (subjects[0].id + "_s0.rvf"), "garbage");
  EXPECT_EQ(box.run("preprocess run"), 2);
  const auto err = read_bytes(box.root() / "stderr.txt");
  EXPECT_NE(std::string(err.begin(), err.end()).find(subjects[0].id), std::string::npos);
}

TEST(Cli, RefusesToClearForeignDirectory) {
  Sandbox box;
  write_text(box.root() / "cohort" / "notes.txt", "keep me");
  box.write_config("cohort.n = 4\ncv.folds = 2\n");
  EXPECT_EQ(box.run("cohort generate"), 1);
  EXPECT_TRUE(fs::exists(box.root() / "cohort" / "notes.txt"));
}
