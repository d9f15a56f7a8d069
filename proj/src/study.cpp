#include "liverfat/study.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <ostream>
#include <random>

#include "liverfat/error.hpp"
#include "liverfat/rvf.hpp"
#include "liverfat/util.hpp"

namespace liverfat {

namespace fs = std::filesystem;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

constexpr std::uint64_t kSplitStream = 0x5b117;
constexpr std::uint64_t kTemplateStream = 0x7e3a;
constexpr std::uint64_t kRoiStream = 0x4e0f;
constexpr std::uint64_t kCvStream = 0xcf01;
constexpr std::uint64_t kTrainStream = 0x7a15;

double parse_value(const std::string& s) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw ValidationError("bad number in CSV: '" + s + "'");
  return v;
}

fs::path volumes_dir(const StudyConfig& c) { return c.cohort_dir / "volumes"; }
fs::path templates_dir(const StudyConfig& c) { return c.cohort_dir / "templates"; }
fs::path prep_dir(const StudyConfig& c) { return c.work_dir / "prep"; }
fs::path atlas_dir(const StudyConfig& c) { return c.work_dir / "atlas"; }
fs::path net_dir(const StudyConfig& c) { return c.work_dir / "net"; }

std::string station_file(const std::string& id, int k) { return id + "_s" + std::to_string(k) + ".rvf"; }

std::string fold_name(int f) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "fold_%02d", f);
  return buf;
}

std::vector<std::string> relative_files(const fs::path& dir) {
  std::vector<std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const std::string rel = fs::relative(e.path(), dir).generic_string();
    if (rel != "manifest.csv") out.push_back(rel);
  }
  return out;
}

void finish_stage(const fs::path& dir) { write_manifest(dir, relative_files(dir)); }

// Only directories previously written by a stage (they carry a manifest) are
// cleared; anything else non-empty is left alone.
void reset_dir(const fs::path& dir) {
  if (fs::exists(dir) && !fs::is_empty(dir) && !fs::exists(dir / "manifest.csv"))
    throw ValidationError("refusing to overwrite " + dir.string() + ": not a stage output directory");
  fs::remove_all(dir);
  fs::create_directories(dir);
}

struct LoadedStations {
  StationStack water, fat;
};

LoadedStations load_stations(const StudyConfig& cfg, const std::string& id) {
  LoadedStations s;
  for (int k = 0;; ++k) {
    const fs::path p = volumes_dir(cfg) / station_file(id, k);
    if (!fs::exists(p)) break;
    auto ch = rvf::read(p);
    if (ch.size() != 2) throw RuntimeFailure(p.string() + ": expected water and fat channels");
    s.water.stations.push_back(std::move(ch[0]));
    s.fat.stations.push_back(std::move(ch[1]));
  }
  if (s.water.stations.empty()) throw RuntimeFailure("no station files for " + id);
  return s;
}

std::vector<Template> load_templates(const StudyConfig& cfg) {
  std::vector<fs::path> files;
  if (fs::is_directory(templates_dir(cfg))) {
    for (const auto& e : fs::directory_iterator(templates_dir(cfg)))
      if (e.path().extension() == ".rvf") files.push_back(e.path());
  }
  if (files.empty()) throw ValidationError("no templates in " + templates_dir(cfg).string());
  std::sort(files.begin(), files.end());
  std::vector<Template> out;
  for (const auto& f : files) {
    auto ch = rvf::read(f);
    if (ch.size() != 3) throw ValidationError(f.string() + ": template needs 3 channels");
    Template t{f.stem().string(), ChannelPair{ch[0], ch[1]}, BinaryMask::from_volume(ch[2])};
    t.validate();
    out.push_back(std::move(t));
  }
  return out;
}

struct Prepared {
  ChannelPair channels;
  BinaryMask body;
};

Prepared load_prepared(const StudyConfig& cfg, const std::string& id) {
  auto ch = rvf::read(prep_dir(cfg) / (id + "_prep.rvf"));
  if (ch.size() != 3) throw RuntimeFailure(id + ": preprocessed file needs 3 channels");
  return {ChannelPair{ch[0], ch[1]}, BinaryMask::from_volume(ch[2])};
}

SliceImage load_input(const StudyConfig& cfg, const std::string& id) {
  return read_pgm(prep_dir(cfg) / (id + ".pgm"));
}

std::vector<const SubjectRow*> with_split(const std::vector<SubjectRow>& rows, char split) {
  std::vector<const SubjectRow*> out;
  for (const auto& r : rows)
    if (r.split == split) out.push_back(&r);
  return out;
}

void write_predictions(const fs::path& path, const std::vector<std::pair<std::string, double>>& rows) {
  CsvTable t;
  t.header = {"subject_id", "prediction"};
  for (const auto& [id, v] : rows) t.rows.push_back({id, fmt_double(v)});
  write_csv(path, t);
}

nn::Network train_on(const StudyConfig& cfg, const std::vector<const SubjectRow*>& rows,
                     std::uint64_t seed, const fs::path& log_path) {
  std::vector<nn::TrainingSample> data;
  data.reserve(rows.size());
  for (const SubjectRow* r : rows)
    data.push_back({load_input(cfg, r->id), static_cast<float>(r->reference_ff * 100.0)});
  nn::TrainConfig tc = cfg.train;
  tc.seed = seed;
  nn::TrainResult res = nn::train(data, cfg.network(), tc);
  nn::write_training_log(log_path, res.log);
  return std::move(res.network);
}

}  // namespace

std::map<std::string, double> read_value_column(const fs::path& csv, std::string_view column) {
  const CsvTable t = read_csv(csv);
  std::map<std::string, double> out;
  for (std::size_t i = 0; i < t.rows.size(); ++i) out[t.cell(i, "subject_id")] = parse_value(t.cell(i, column));
  return out;
}

std::vector<SubjectRow> read_subjects(const fs::path& cohort_dir) {
  const fs::path truth = cohort_dir / "truth.csv";
  const fs::path splits = cohort_dir / "splits.csv";
  if (!fs::exists(truth) || !fs::exists(splits))
    throw ValidationError("no cohort in " + cohort_dir.string() + " (truth.csv/splits.csv missing)");
  const CsvTable t = read_csv(truth);
  const CsvTable s = read_csv(splits);
  std::map<std::string, std::pair<char, bool>> split_of;
  for (std::size_t i = 0; i < s.rows.size(); ++i) {
    const std::string& sp = s.cell(i, "split");
    if (sp != "A" && sp != "B") throw ValidationError("splits.csv: unknown split '" + sp + "'");
    split_of[s.cell(i, "subject_id")] = {sp[0], s.cell(i, "in_c") == "1"};
  }
  std::vector<SubjectRow> out;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    SubjectRow r;
    r.id = t.cell(i, "subject_id");
    r.liver_ff = parse_value(t.cell(i, "liver_ff"));
    r.reference_ff = parse_value(t.cell(i, "reference_roi_ff"));
    const auto it = split_of.find(r.id);
    if (it == split_of.end()) throw ValidationError("splits.csv has no row for " + r.id);
    r.split = it->second.first;
    r.in_c = it->second.second;
    if (r.in_c && r.split != 'B') throw ValidationError(r.id + ": subset C must lie inside B");
    out.push_back(std::move(r));
  }
  if (out.empty()) throw ValidationError("cohort in " + cohort_dir.string() + " is empty");
  std::sort(out.begin(), out.end(), [](const SubjectRow& a, const SubjectRow& b) { return a.id < b.id; });
  return out;
}

CalibrationModel read_calibration(const fs::path& path) {
  if (!fs::exists(path)) throw ValidationError("no calibration model at " + path.string());
  const auto bytes = read_bytes(path);
  const auto kv = parse_key_values(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
  const auto slope = kv.find("slope");
  const auto intercept = kv.find("intercept");
  if (slope == kv.end() || intercept == kv.end()) throw ValidationError(path.string() + ": needs slope and intercept");
  return {parse_value(slope->second), parse_value(intercept->second)};
}

void write_calibration(const fs::path& path, const CalibrationModel& m) {
  write_text(path, "slope = " + fmt_double(m.slope) + "\nintercept = " + fmt_double(m.intercept) + "\n");
}

void run_cohort_generate(const StudyConfig& cfg, std::ostream& log) {
  cfg.validate();
  const CohortSpec cohort = cfg.cohort_spec();
  const int n = cohort.n_subjects;
  reset_dir(cfg.cohort_dir);
  fs::create_directories(volumes_dir(cfg));
  fs::create_directories(templates_dir(cfg));

  std::vector<std::string> ids(static_cast<std::size_t>(n));
  std::vector<double> liver_ff(ids.size()), reference(ids.size());
  parallel_for(ids.size(), cfg.worker_count(), [&](std::size_t i) {
    const CohortSubject sub = cohort_subject(cohort, static_cast<int>(i));
    const PhantomVolumes ph = generate_phantom(sub.spec);
    for (std::size_t k = 0; k < ph.water.stations.size(); ++k)
      rvf::write(volumes_dir(cfg) / station_file(sub.id, static_cast<int>(k)),
                 {ph.water.stations[k], ph.fat.stations[k]});
    rvf::write(volumes_dir(cfg) / (sub.id + "_truth.rvf"),
               {ph.truth.liver_mask.to_volume(), ph.truth.body_mask_truth.to_volume()});
    const Volume3 ff = fat_fraction(fuse_stations(ph.water), fuse_stations(ph.fat));
    ids[i] = sub.id;
    liver_ff[i] = ph.truth.liver_ff;
    reference[i] = reference_roi_measurement(ff, ph.truth.liver_mask, mix_seed(cohort.seed, kRoiStream + i), cfg.roi);
  });

  CsvTable truth;
  truth.header = {"subject_id", "liver_ff", "reference_roi_ff"};
  for (std::size_t i = 0; i < ids.size(); ++i)
    truth.rows.push_back({ids[i], fmt_double(liver_ff[i]), fmt_double(reference[i])});
  write_csv(cfg.cohort_dir / "truth.csv", truth);

  const auto [na, nb, nc] = cfg.splits();
  std::vector<std::size_t> order(ids.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 rng(mix_seed(cohort.seed, kSplitStream));
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<char> split(ids.size(), 'A');
  std::vector<bool> in_c(ids.size(), false);
  for (int i = na; i < na + nb; ++i) split[order[i]] = 'B';
  for (int i = na; i < na + nc; ++i) in_c[order[i]] = true;
  CsvTable splits;
  splits.header = {"subject_id", "split", "in_c"};
  for (std::size_t i = 0; i < ids.size(); ++i)
    splits.rows.push_back({ids[i], std::string(1, split[i]), in_c[i] ? "1" : "0"});
  write_csv(cfg.cohort_dir / "splits.csv", splits);

  CohortSpec tcohort = cohort;
  tcohort.seed = mix_seed(cohort.seed, kTemplateStream);
  tcohort.ff_low = cfg.template_ff_low;
  tcohort.ff_high = cfg.template_ff_high;
  const ResampleSpec rs = cfg.resample_spec();
  parallel_for(static_cast<std::size_t>(cfg.template_count), cfg.worker_count(), [&](std::size_t t) {
    const CohortSubject sub = cohort_subject(tcohort, static_cast<int>(t));
    const PhantomVolumes ph = generate_phantom(sub.spec);
    const PreprocessedSubject p = preprocess_subject(ph.water, ph.fat, &rs, cfg.layout);
    const ChannelPair ch = ChannelPair{p.water_fraction, p.fat_fraction}.masked(p.body);
    char name[32];
    std::snprintf(name, sizeof name, "tpl-%02d.rvf", static_cast<int>(t));
    rvf::write(templates_dir(cfg) / name, {ch.water_fraction, ch.fat_fraction, ph.truth.liver_mask.to_volume()});
  });

  finish_stage(cfg.cohort_dir);
  log << "cohort: " << n << " subjects (A " << na << ", B " << nb << ", C " << nc << "), "
      << cfg.template_count << " templates -> " << cfg.cohort_dir.string() << '\n';
}

StageFailures run_preprocess(const StudyConfig& cfg, std::ostream& log) {
  cfg.validate();
  const auto subjects = read_subjects(cfg.cohort_dir);
  reset_dir(prep_dir(cfg));
  const ResampleSpec rs = cfg.resample_spec();

  struct Out {
    bool ok = false;
    std::string error;
    ComposedInput input;
    double seconds = 0.0;
  };
  std::vector<Out> out(subjects.size());
  parallel_for(subjects.size(), cfg.worker_count(), [&](std::size_t i) {
    const auto t0 = std::chrono::steady_clock::now();
    try {
      const LoadedStations st = load_stations(cfg, subjects[i].id);
      PreprocessedSubject p = preprocess_subject(st.water, st.fat, &rs, cfg.layout);
      write_pgm(prep_dir(cfg) / (subjects[i].id + ".pgm"), p.input.image);
      rvf::write(prep_dir(cfg) / (subjects[i].id + "_prep.rvf"),
                 {p.water_fraction, p.fat_fraction, p.body.to_volume()});
      out[i].input = std::move(p.input);
      out[i].ok = true;
    } catch (const std::exception& e) {
      out[i].error = e.what();
    }
    out[i].seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  });

  StageFailures failures;
  CsvTable sidecar;
  sidecar.header = {"subject_id", "coronal_y", "sagittal_x", "rows_kept", "coronal_x0", "sagittal_y0", "width", "height"};
  for (std::size_t i = 0; i < subjects.size(); ++i) {
    const auto& o = out[i];
    char line[96];
    std::snprintf(line, sizeof line, "%s %.3f s%s\n", subjects[i].id.c_str(), o.seconds, o.ok ? "" : " FAILED");
    log << line;
    if (!o.ok) {
      failures.items.emplace_back(subjects[i].id, o.error);
      continue;
    }
    const auto& in = o.input;
    sidecar.rows.push_back({subjects[i].id, std::to_string(in.selection.coronal_y), std::to_string(in.selection.sagittal_x),
                            std::to_string(in.rows_kept), std::to_string(in.coronal_x0), std::to_string(in.sagittal_y0),
                            std::to_string(in.image.width), std::to_string(in.image.height)});
  }
  write_csv(prep_dir(cfg) / "inputs.csv", sidecar);
  finish_stage(prep_dir(cfg));
  return failures;
}

StageFailures run_atlas(const StudyConfig& cfg, bool dump_masks, std::ostream& log) {
  cfg.validate();
  const auto subjects = read_subjects(cfg.cohort_dir);
  const auto templates = load_templates(cfg);
  const fs::path model_path = atlas_dir(cfg) / "calibration.txt";
  std::optional<CalibrationModel> model;
  if (fs::exists(model_path)) model = read_calibration(model_path);
  reset_dir(atlas_dir(cfg));
  if (model) write_calibration(model_path, *model);

  struct Out {
    double raw = kNaN;
    std::size_t surviving = 0;
    std::string error;
  };
  std::vector<Out> out(subjects.size());
  parallel_for(subjects.size(), cfg.worker_count(), [&](std::size_t i) {
    const std::string& id = subjects[i].id;
    try {
      const Prepared p = load_prepared(cfg, id);
      const AtlasResult r = atlas_measure(p.channels, p.body, templates, cfg.atlas);
      out[i].raw = r.raw_ff * 100.0;
      out[i].surviving = r.surviving_voxels;
      if (dump_masks) {
        std::vector<Volume3> ch;
        for (const auto& m : r.warped_masks) ch.push_back(m.to_volume());
        rvf::write(atlas_dir(cfg) / "masks" / (id + "_warped.rvf"), ch);
      }
    } catch (const std::exception& e) {
      out[i].error = e.what();
    }
  });

  StageFailures failures;
  CsvTable t;
  t.header = {"subject_id", "raw_ff", "corrected_ff", "surviving_voxels"};
  for (std::size_t i = 0; i < subjects.size(); ++i) {
    const auto& o = out[i];
    if (!o.error.empty()) {
      failures.items.emplace_back(subjects[i].id, o.error);
      log << subjects[i].id << " FAILED: " << o.error << '\n';
    }
    const double corrected = model && std::isfinite(o.raw) ? apply_calibration(*model, o.raw) : kNaN;
    t.rows.push_back({subjects[i].id, fmt_double(o.raw), fmt_double(corrected), std::to_string(o.surviving)});
  }
  write_csv(atlas_dir(cfg) / "atlas.csv", t);
  finish_stage(atlas_dir(cfg));
  log << "atlas: " << subjects.size() - failures.items.size() << " of " << subjects.size()
      << " subjects measured with " << templates.size() << " templates\n";
  return failures;
}

CalibrationModel run_atlas_calibrate(const StudyConfig& cfg, std::ostream& log) {
  const auto subjects = read_subjects(cfg.cohort_dir);
  const fs::path atlas_csv = atlas_dir(cfg) / "atlas.csv";
  if (!fs::exists(atlas_csv)) throw ValidationError("no atlas results at " + atlas_csv.string());
  CsvTable t = read_csv(atlas_csv);
  std::map<std::string, double> raw;
  for (std::size_t i = 0; i < t.rows.size(); ++i) raw[t.cell(i, "subject_id")] = parse_value(t.cell(i, "raw_ff"));

  std::vector<double> x, y;
  for (const SubjectRow* r : with_split(subjects, 'A')) {
    const auto it = raw.find(r->id);
    if (it == raw.end() || !std::isfinite(it->second)) continue;
    x.push_back(it->second);
    y.push_back(r->reference_ff * 100.0);
  }
  const CalibrationModel m = fit_calibration(x, y);
  write_calibration(atlas_dir(cfg) / "calibration.txt", m);
  const int col = t.column("corrected_ff");
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const double r = parse_value(t.cell(i, "raw_ff"));
    t.rows[i][static_cast<std::size_t>(col)] = fmt_double(std::isfinite(r) ? apply_calibration(m, r) : kNaN);
  }
  write_csv(atlas_csv, t);
  finish_stage(atlas_dir(cfg));
  log << "calibration on " << x.size() << " A subjects: reference = " << fmt_double(m.slope) << " * raw + "
      << fmt_double(m.intercept) << '\n';
  return m;
}

void run_net_cv(const StudyConfig& cfg, std::ostream& log) {
  cfg.validate();
  const auto subjects = read_subjects(cfg.cohort_dir);
  const auto a = with_split(subjects, 'A');
  std::map<std::string, const SubjectRow*> by_id;
  std::vector<std::string> ids;
  for (const SubjectRow* r : a) {
    by_id[r->id] = r;
    ids.push_back(r->id);
  }
  const nn::CvPlan plan = nn::make_cv_plan(ids, cfg.cv_folds, mix_seed(cfg.seed, kCvStream));
  const fs::path dir = net_dir(cfg) / "cv";
  reset_dir(dir);

  CsvTable folds;
  folds.header = {"subject_id", "fold"};
  for (int f = 0; f < plan.k; ++f)
    for (const auto& id : plan.folds[f]) folds.rows.push_back({id, std::to_string(f)});
  std::sort(folds.rows.begin(), folds.rows.end());
  write_csv(dir / "folds.csv", folds);

  std::vector<std::vector<std::pair<std::string, double>>> preds(static_cast<std::size_t>(plan.k));
  parallel_for(preds.size(), cfg.worker_count(), [&](std::size_t f) {
    std::vector<const SubjectRow*> train_rows;
    for (std::size_t g = 0; g < plan.folds.size(); ++g)
      if (g != f)
        for (const auto& id : plan.folds[g]) train_rows.push_back(by_id.at(id));
    nn::Network net = train_on(cfg, train_rows, mix_seed(cfg.seed, kTrainStream + f),
                               dir / (fold_name(static_cast<int>(f)) + "_log.csv"));
    for (const auto& id : plan.folds[f]) preds[f].emplace_back(id, nn::predict(net, load_input(cfg, id)));
    write_predictions(dir / (fold_name(static_cast<int>(f)) + ".csv"), preds[f]);
  });

  std::vector<std::pair<std::string, double>> merged;
  for (const auto& p : preds) merged.insert(merged.end(), p.begin(), p.end());
  std::sort(merged.begin(), merged.end());
  write_predictions(dir / "cv_predictions.csv", merged);
  finish_stage(dir);
  log << "net cv: " << plan.k << " folds over " << ids.size() << " A subjects\n";
}

void run_net_train_full(const StudyConfig& cfg, std::ostream& log) {
  cfg.validate();
  const auto subjects = read_subjects(cfg.cohort_dir);
  const fs::path dir = net_dir(cfg) / "full";
  reset_dir(dir);
  const auto a = with_split(subjects, 'A');
  const nn::Network net = train_on(cfg, a, mix_seed(cfg.seed, kTrainStream + 1000), dir / "train_log.csv");
  nn::save_checkpoint(dir / "model.ffn", net);
  finish_stage(dir);
  log << "net train-full: " << a.size() << " A subjects -> " << (dir / "model.ffn").string() << '\n';
}

void run_net_infer(const StudyConfig& cfg, const fs::path& model, std::ostream& log) {
  cfg.validate();
  const auto subjects = read_subjects(cfg.cohort_dir);
  const fs::path model_path = model.empty() ? net_dir(cfg) / "full" / "model.ffn" : model;
  if (!fs::exists(model_path)) throw ValidationError("no model at " + model_path.string());
  nn::Network net = nn::load_checkpoint(model_path);
  const fs::path dir = net_dir(cfg) / "infer";
  reset_dir(dir);
  std::vector<std::pair<std::string, double>> preds;
  for (const SubjectRow* r : with_split(subjects, 'B')) preds.emplace_back(r->id, nn::predict(net, load_input(cfg, r->id)));
  write_predictions(dir / "predictions.csv", preds);
  finish_stage(dir);
  log << "net infer: " << preds.size() << " B subjects\n";
}

namespace {

struct MethodValues {
  std::map<std::string, double> reference, truth, atlas, network_cv, network_infer;
};

MethodValues collect(const StudyConfig& cfg, const std::vector<SubjectRow>& subjects) {
  MethodValues v;
  for (const auto& r : subjects) {
    v.reference[r.id] = r.reference_ff * 100.0;
    v.truth[r.id] = r.liver_ff * 100.0;
  }
  const fs::path atlas_csv = atlas_dir(cfg) / "atlas.csv";
  const fs::path cv_csv = net_dir(cfg) / "cv" / "cv_predictions.csv";
  const fs::path infer_csv = net_dir(cfg) / "infer" / "predictions.csv";
  for (const auto& p : {atlas_csv, cv_csv, infer_csv})
    if (!fs::exists(p)) throw ValidationError("missing stage output " + p.string());
  v.atlas = read_value_column(atlas_csv, "corrected_ff");
  v.network_cv = read_value_column(cv_csv, "prediction");
  v.network_infer = read_value_column(infer_csv, "prediction");
  return v;
}

stats::PairedMeasurements pair_up(const std::vector<SubjectRow>& subjects, bool subset_c,
                                  const std::map<std::string, double>& a,
                                  const std::map<std::string, double>& b) {
  stats::PairedMeasurements p;
  for (const auto& r : subjects) {
    if (subset_c ? !r.in_c : r.split != 'A') continue;
    const auto ia = a.find(r.id);
    const auto ib = b.find(r.id);
    if (ia == a.end() || ib == b.end() || !std::isfinite(ia->second) || !std::isfinite(ib->second)) continue;
    p.ids.push_back(r.id);
    p.a.push_back(ia->second);
    p.b.push_back(ib->second);
  }
  return p;
}

struct PairSpec {
  std::string name_a, name_b;
  bool subset_c;
  const std::map<std::string, double>* a;
  const std::map<std::string, double>* b;
};

std::string slug(const std::string& s) {
  std::string out;
  for (char ch : s) out.push_back(std::isalnum(static_cast<unsigned char>(ch)) ? static_cast<char>(std::tolower(ch)) : '_');
  return out;
}

std::vector<ComparisonRow> evaluate_pairs(const std::vector<SubjectRow>& subjects, const std::vector<PairSpec>& specs,
                                          const fs::path* svg_dir,
                                          std::vector<stats::PairedMeasurements>* pairs_out = nullptr) {
  std::vector<ComparisonRow> rows;
  for (const auto& s : specs) {
    const auto p = pair_up(subjects, s.subset_c, *s.a, *s.b);
    if (p.size() < 2) throw ValidationError(s.name_a + " vs " + s.name_b + ": fewer than two paired subjects");
    const std::string dataset = s.subset_c ? "C" : "A";
    rows.push_back({s.name_a + " vs " + s.name_b, dataset, stats::evaluate(p)});
    if (svg_dir != nullptr) {
      const std::string title = rows.back().name + " (" + dataset + ")";
      write_text(*svg_dir / ("bland_altman_" + slug(s.name_a + "_vs_" + s.name_b) + "_" + dataset + ".svg"),
                 stats::bland_altman_svg(p, title, s.name_a, s.name_b));
    }
    if (pairs_out != nullptr) pairs_out->push_back(p);
  }
  return rows;
}

void write_rows(const fs::path& path, const std::vector<ComparisonRow>& rows) {
  CsvTable t;
  t.header = {"comparison", "dataset", "n", "MAE", "R2", "LoA_low", "LoA_high", "ROC_AUC", "Sens", "Spec", "pearson_r"};
  for (const auto& r : rows) {
    const auto& m = r.metrics;
    t.rows.push_back({r.name, r.dataset, std::to_string(m.n), fmt_double(m.mae), fmt_double(m.r2),
                      fmt_double(m.loa_low), fmt_double(m.loa_high), fmt_double(m.roc_auc),
                      fmt_double(m.sensitivity), fmt_double(m.specificity), fmt_double(m.pearson_r)});
  }
  write_csv(path, t);
}

std::vector<PairSpec> table_specs(const MethodValues& v, bool truth_first) {
  const auto* first = truth_first ? &v.truth : &v.reference;
  const std::string first_name = truth_first ? "Truth" : "Reference";
  std::vector<PairSpec> specs = {
      {first_name, "Network", false, first, &v.network_cv},
      {first_name, "Atlas", false, first, &v.atlas},
  };
  if (truth_first) {
    specs.push_back({"Truth", "Network", true, &v.truth, &v.network_infer});
    specs.push_back({"Truth", "Atlas", true, &v.truth, &v.atlas});
  } else {
    specs.push_back({"Atlas", "Network", false, &v.atlas, &v.network_cv});
    specs.push_back({"Atlas", "Network", true, &v.atlas, &v.network_infer});
  }
  return specs;
}

}  // namespace

std::vector<ComparisonRow> truth_rows(const StudyConfig& cfg) {
  const auto subjects = read_subjects(cfg.cohort_dir);
  const MethodValues v = collect(cfg, subjects);
  return evaluate_pairs(subjects, table_specs(v, true), nullptr);
}

std::vector<ComparisonRow> run_report(const StudyConfig& cfg, std::ostream& log) {
  const auto subjects = read_subjects(cfg.cohort_dir);
  const MethodValues v = collect(cfg, subjects);
  reset_dir(cfg.output_dir);
  std::vector<stats::PairedMeasurements> pairs;
  const auto rows = evaluate_pairs(subjects, table_specs(v, false), &cfg.output_dir, &pairs);
  write_rows(cfg.output_dir / "comparison.csv", rows);
  write_rows(cfg.output_dir / "truth_comparison.csv", evaluate_pairs(subjects, table_specs(v, true), nullptr));

  CsvTable out;
  out.header = {"rank", "subject_id", "reference", "network", "abs_difference", "atlas"};
  const auto top = stats::top_outliers(pairs.front(), 10);
  for (std::size_t i = 0; i < top.size(); ++i) {
    const auto it = v.atlas.find(top[i].id);
    out.rows.push_back({std::to_string(i + 1), top[i].id, fmt_double(top[i].a), fmt_double(top[i].b),
                        fmt_double(top[i].abs_difference), fmt_double(it == v.atlas.end() ? kNaN : it->second)});
  }
  write_csv(cfg.output_dir / "outliers.csv", out);
  finish_stage(cfg.output_dir);

  for (const auto& r : rows) {
    char line[200];
    std::snprintf(line, sizeof line, "%-22s %s  n=%-4zu MAE %.2f  R2 %.3f  LoA %.2f..%.2f  AUC %.3f\n", r.name.c_str(),
                  r.dataset.c_str(), r.metrics.n, r.metrics.mae, r.metrics.r2, r.metrics.loa_low, r.metrics.loa_high,
                  r.metrics.roc_auc);
    log << line;
  }
  return rows;
}

}  // namespace liverfat
