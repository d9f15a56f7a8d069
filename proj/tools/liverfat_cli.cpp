// liverfat: phantom liver-fat study driver.
//
// Exit codes: 0 success, 1 invalid input or usage, 2 runtime failure.

#include <CLI11.hpp>

#include <iostream>
#include <optional>

#include "liverfat/error.hpp"
#include "liverfat/study.hpp"

namespace {

struct GlobalOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> workers;
  bool full_scale = false;
  std::string cohort, work, out;
  std::optional<int> n;
};

liverfat::StudyConfig build_config(const GlobalOptions& g) {
  liverfat::StudyConfig cfg = g.full_scale ? liverfat::StudyConfig::full_scale() : liverfat::StudyConfig::desk();
  if (!g.config.empty()) liverfat::apply_config_file(cfg, g.config);
  if (g.seed) cfg.seed = *g.seed;
  if (g.workers) cfg.workers = *g.workers;
  if (!g.cohort.empty()) cfg.cohort_dir = g.cohort;
  if (!g.work.empty()) cfg.work_dir = g.work;
  if (!g.out.empty()) cfg.output_dir = g.out;
  if (g.n) cfg.cohort.n_subjects = *g.n;
  return cfg;
}

int report_failures(const liverfat::StageFailures& f) {
  if (f.empty()) return 0;
  std::cerr << f.items.size() << " subject(s) failed:\n";
  for (const auto& [id, msg] : f.items) std::cerr << "  " << id << ": " << msg << '\n';
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Liver fat quantification study on synthetic phantoms"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalOptions g;
  app.add_option("--config", g.config, "key = value config file");
  app.add_option("--seed", g.seed, "study seed");
  app.add_option("--workers", g.workers, "worker threads (0 = all cores)");
  app.add_flag("--full-scale", g.full_scale, "full-scale grids, layout and training schedule");
  app.add_option("--cohort", g.cohort, "cohort directory");
  app.add_option("--work", g.work, "work directory for stage outputs");
  app.add_option("--out", g.out, "report directory");

  auto* cohort = app.add_subcommand("cohort", "synthetic cohort")->require_subcommand(1);
  auto* cohort_generate = cohort->add_subcommand("generate", "write phantoms, truth.csv, splits.csv, templates");
  cohort_generate->add_option("--n", g.n, "number of subjects");

  auto* preprocess = app.add_subcommand("preprocess", "Dixon preprocessing")->require_subcommand(1);
  auto* preprocess_run = preprocess->add_subcommand("run", "fat fractions, body masks and network inputs");

  auto* atlas = app.add_subcommand("atlas", "multi-atlas baseline")->require_subcommand(1);
  auto* atlas_run = atlas->add_subcommand("run", "register templates and measure liver FF");
  bool dump_masks = false;
  atlas_run->add_flag("--dump-masks", dump_masks, "write warped template masks");
  auto* atlas_calibrate = atlas->add_subcommand("calibrate", "fit linear correction on dataset A");

  auto* net = app.add_subcommand("net", "CNN regressor")->require_subcommand(1);
  auto* net_cv = net->add_subcommand("cv", "k-fold cross-validation on dataset A");
  auto* net_train = net->add_subcommand("train-full", "train on all of dataset A");
  auto* net_infer = net->add_subcommand("infer", "predict dataset B");
  std::string model;
  net_infer->add_option("--model", model, "checkpoint (default: work/net/full/model.ffn)");

  auto* report = app.add_subcommand("report", "method comparison")->require_subcommand(1);
  auto* report_compare = report->add_subcommand("compare", "comparison table, Bland-Altman plots, outliers");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    const liverfat::StudyConfig cfg = build_config(g);
    if (cohort_generate->parsed()) {
      liverfat::run_cohort_generate(cfg, std::cout);
    } else if (preprocess_run->parsed()) {
      return report_failures(liverfat::run_preprocess(cfg, std::cout));
    } else if (atlas_run->parsed()) {
      return report_failures(liverfat::run_atlas(cfg, dump_masks, std::cout));
    } else if (atlas_calibrate->parsed()) {
      liverfat::run_atlas_calibrate(cfg, std::cout);
    } else if (net_cv->parsed()) {
      liverfat::run_net_cv(cfg, std::cout);
    } else if (net_train->parsed()) {
      liverfat::run_net_train_full(cfg, std::cout);
    } else if (net_infer->parsed()) {
      liverfat::run_net_infer(cfg, model, std::cout);
    } else if (report_compare->parsed()) {
      liverfat::run_report(cfg, std::cout);
    }
  } catch (const liverfat::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
