#include <charconv>
#include <functional>
#include <thread>

#include "liverfat/error.hpp"
#include "liverfat/study.hpp"
#include "liverfat/util.hpp"

namespace liverfat {

StudyConfig StudyConfig::desk() {
  StudyConfig c;
  c.cohort.base.noise_sigma = 0.02;
  c.cohort.base.bias_amplitude = 0.1;
  return c;
}

StudyConfig StudyConfig::full_scale() {
  StudyConfig c = desk();
  const PhantomSpec desk_base = c.cohort.base;
  c.cohort.base = PhantomSpec::full_scale();
  c.cohort.base.noise_sigma = desk_base.noise_sigma;
  c.cohort.base.bias_amplitude = desk_base.bias_amplitude;
  c.cohort.base.station_count = 6;
  c.layout = LayoutConfig::full_scale();
  c.atlas.erosion_diameter = 7;
  c.train = nn::TrainConfig{};
  c.roi.radius = 3;
  return c;
}

CohortSpec StudyConfig::cohort_spec() const {
  CohortSpec c = cohort;
  c.seed = seed;
  return c;
}

std::array<int, 3> StudyConfig::splits() const {
  const int n = cohort.n_subjects;
  const int a = split_a >= 0 ? split_a : (3 * n) / 4;
  const int b = split_b >= 0 ? split_b : n - a;
  const int c = split_c >= 0 ? split_c : b;
  return {a, b, c};
}

unsigned StudyConfig::worker_count() const {
  return workers > 0 ? workers : default_workers();
}

nn::NetworkConfig StudyConfig::network() const {
  return nn::NetworkConfig::parse(net_layers, {1, layout.out_height, layout.out_width});
}

ResampleSpec StudyConfig::resample_spec() const {
  return {cohort.base.grid.spacing, cohort.base.grid.dims};
}

void StudyConfig::validate() const {
  cohort_spec().validate();
  const auto [a, b, c] = splits();
  require(a >= 1 && b >= 0 && c >= 0, "split sizes must be non-negative and A non-empty");
  require(a + b == cohort.n_subjects, "split sizes A + B must equal the cohort size");
  require(c <= b, "comparison subset C must fit inside B");
  require(template_count >= 1, "need at least one template");
  require(template_ff_low >= 0.0 && template_ff_low <= template_ff_high && template_ff_high <= 0.5,
          "template FF bounds must satisfy 0 <= low <= high <= 0.5");
  require(roi.radius >= 0 && roi.erosion_diameter >= 1 && roi.erosion_diameter % 2 == 1,
          "roi radius must be >= 0 and erosion diameter odd");
  require(cv_folds >= 2 && cv_folds <= a, "cv folds must be in [2, |A|]");
  require(cohort_dir != work_dir && cohort_dir != output_dir && work_dir != output_dir,
          "cohort, work and output directories must differ");
  layout.validate();
  atlas.registration.validate();
  require(atlas.erosion_diameter >= 1 && atlas.erosion_diameter % 2 == 1, "atlas erosion diameter must be odd");
  train.validate();
  network();
}

std::map<std::string, std::string> parse_key_values(std::string_view text) {
  std::map<std::string, std::string> out;
  int line_no = 0;
  auto trim = [](std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return std::string_view{};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  };
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    require(eq != std::string_view::npos, "config line " + std::to_string(line_no) + ": expected key = value");
    const std::string key(trim(line.substr(0, eq)));
    require(!key.empty(), "config line " + std::to_string(line_no) + ": empty key");
    out[key] = std::string(trim(line.substr(eq + 1)));
  }
  return out;
}

namespace {

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  require(ec == std::errc() && ptr == v.data() + v.size(), "config " + key + ": bad number '" + v + "'");
  return out;
}

using Setter = std::function<void(StudyConfig&, const std::string&, const std::string&)>;

template <typename T, typename Get>
Setter number(Get get) {
  return [get](StudyConfig& c, const std::string& k, const std::string& v) { get(c) = parse_number<T>(k, v); };
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"cohort_dir", [](StudyConfig& c, const std::string&, const std::string& v) { c.cohort_dir = v; }},
      {"work_dir", [](StudyConfig& c, const std::string&, const std::string& v) { c.work_dir = v; }},
      {"output_dir", [](StudyConfig& c, const std::string&, const std::string& v) { c.output_dir = v; }},
      {"seed", number<std::uint64_t>([](StudyConfig& c) -> auto& { return c.seed; })},
      {"workers", number<unsigned>([](StudyConfig& c) -> auto& { return c.workers; })},
      {"cohort.n", number<int>([](StudyConfig& c) -> auto& { return c.cohort.n_subjects; })},
      {"cohort.ff_low", number<double>([](StudyConfig& c) -> auto& { return c.cohort.ff_low; })},
      {"cohort.ff_high", number<double>([](StudyConfig& c) -> auto& { return c.cohort.ff_high; })},
      {"cohort.body_scale_low", number<double>([](StudyConfig& c) -> auto& { return c.cohort.body_scale_low; })},
      {"cohort.body_scale_high", number<double>([](StudyConfig& c) -> auto& { return c.cohort.body_scale_high; })},
      {"cohort.liver_shift_mm", number<double>([](StudyConfig& c) -> auto& { return c.cohort.liver_shift_mm; })},
      {"cohort.liver_scale_low", number<double>([](StudyConfig& c) -> auto& { return c.cohort.liver_scale_low; })},
      {"cohort.liver_scale_high", number<double>([](StudyConfig& c) -> auto& { return c.cohort.liver_scale_high; })},
      {"phantom.noise_sigma", number<double>([](StudyConfig& c) -> auto& { return c.cohort.base.noise_sigma; })},
      {"phantom.bias_amplitude", number<double>([](StudyConfig& c) -> auto& { return c.cohort.base.bias_amplitude; })},
      {"phantom.subcutaneous_ff", number<double>([](StudyConfig& c) -> auto& { return c.cohort.base.subcutaneous_ff; })},
      {"phantom.lean_ff", number<double>([](StudyConfig& c) -> auto& { return c.cohort.base.lean_ff; })},
      {"phantom.station_count", number<int>([](StudyConfig& c) -> auto& { return c.cohort.base.station_count; })},
      {"phantom.station_overlap", number<int>([](StudyConfig& c) -> auto& { return c.cohort.base.station_overlap; })},
      {"split.a", number<int>([](StudyConfig& c) -> auto& { return c.split_a; })},
      {"split.b", number<int>([](StudyConfig& c) -> auto& { return c.split_b; })},
      {"split.c", number<int>([](StudyConfig& c) -> auto& { return c.split_c; })},
      {"templates.count", number<int>([](StudyConfig& c) -> auto& { return c.template_count; })},
      {"templates.ff_low", number<double>([](StudyConfig& c) -> auto& { return c.template_ff_low; })},
      {"templates.ff_high", number<double>([](StudyConfig& c) -> auto& { return c.template_ff_high; })},
      {"roi.radius", number<int>([](StudyConfig& c) -> auto& { return c.roi.radius; })},
      {"roi.erosion_diameter", number<int>([](StudyConfig& c) -> auto& { return c.roi.erosion_diameter; })},
      {"layout.height", number<int>([](StudyConfig& c) -> auto& { return c.layout.out_height; })},
      {"layout.width", number<int>([](StudyConfig& c) -> auto& { return c.layout.out_width; })},
      {"layout.coronal_crop_width", number<int>([](StudyConfig& c) -> auto& { return c.layout.coronal_crop_width; })},
      {"layout.sagittal_crop_width", number<int>([](StudyConfig& c) -> auto& { return c.layout.sagittal_crop_width; })},
      {"registration.pyramid_levels", number<int>([](StudyConfig& c) -> auto& { return c.atlas.registration.pyramid_levels; })},
      {"registration.search_radius", number<int>([](StudyConfig& c) -> auto& { return c.atlas.registration.search_radius; })},
      {"registration.displacement_step", number<int>([](StudyConfig& c) -> auto& { return c.atlas.registration.displacement_step; })},
      {"registration.regularization", number<double>([](StudyConfig& c) -> auto& { return c.atlas.registration.regularization; })},
      {"registration.sweeps_per_level", number<int>([](StudyConfig& c) -> auto& { return c.atlas.registration.sweeps_per_level; })},
      {"registration.control_stride", number<int>([](StudyConfig& c) -> auto& { return c.atlas.registration.control_stride; })},
      {"registration.max_displacement", number<int>([](StudyConfig& c) -> auto& { return c.atlas.registration.max_displacement; })},
      {"atlas.erosion_diameter", number<int>([](StudyConfig& c) -> auto& { return c.atlas.erosion_diameter; })},
      {"net.layers", [](StudyConfig& c, const std::string&, const std::string& v) { c.net_layers = v; }},
      {"train.batch_size", number<int>([](StudyConfig& c) -> auto& { return c.train.batch_size; })},
      {"train.iterations", number<int>([](StudyConfig& c) -> auto& { return c.train.total_iterations; })},
      {"train.base_lr", number<float>([](StudyConfig& c) -> auto& { return c.train.base_lr; })},
      {"train.lr_drop_factor", number<float>([](StudyConfig& c) -> auto& { return c.train.lr_drop_factor; })},
      {"train.drop_window", number<int>([](StudyConfig& c) -> auto& { return c.train.drop_window; })},
      {"train.translation_range", number<int>([](StudyConfig& c) -> auto& { return c.train.translation_range; })},
      {"cv.folds", number<int>([](StudyConfig& c) -> auto& { return c.cv_folds; })},
  };
  return table;
}

}  // namespace

void apply_config(StudyConfig& cfg, std::string_view text) {
  for (const auto& [key, value] : parse_key_values(text)) {
    const auto it = setters().find(key);
    require(it != setters().end(), "unknown config key: " + key);
    it->second(cfg, key, value);
  }
}

void apply_config_file(StudyConfig& cfg, const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ValidationError("config file not found: " + path.string());
  const auto bytes = read_bytes(path);
  apply_config(cfg, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

}  // namespace liverfat
