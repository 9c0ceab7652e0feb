#include "lidarseg/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace lidarseg {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* first = text.data();
  const char* last = first + text.size();
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) throw ConfigError("config: " + key + ": cannot parse '" + text + "'");
  return value;
}

const std::array<std::string, kNumFineLabels> kMixKeys = {"people", "car", "trunk", "bush", "building", "cyclist",
                                                          "unknown"};

}  // namespace

Config Config::parse(std::istream& is) {
  Config cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || key.find('.') == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": key must look like section.name");
    }
    cfg.values_[key] = value;
  }
  return cfg;
}

Config Config::parse_string(const std::string& text) {
  std::istringstream is(text);
  return parse(is);
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config: " + path.string());
  return parse(is);
}

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double Config::get_double(const std::string& key, double fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : parse_number<double>(key, it->second);
}

long long Config::get_int(const std::string& key, long long fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : parse_number<long long>(key, it->second);
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  if (it->second == "true" || it->second == "1" || it->second == "yes") return true;
  if (it->second == "false" || it->second == "0" || it->second == "no") return false;
  throw ConfigError("config: " + key + ": expected a boolean, got '" + it->second + "'");
}

std::vector<std::string> Config::get_list(const std::string& key, const std::vector<std::string>& fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::vector<std::string> out;
  std::stringstream ss(it->second);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void Config::reject_unknown(const std::set<std::string>& known) const {
  for (const auto& [key, value] : values_) {
    if (!known.count(key)) throw ConfigError("config: unknown key '" + key + "'");
  }
}

std::string mode_name(FinetuneMode mode) {
  switch (mode) {
    case FinetuneMode::Baseline: return "baseline";
    case FinetuneMode::Pretrain: return "pretrain";
    case FinetuneMode::PretrainFixed: return "pretrain-fix";
  }
  return "?";
}

std::string subset_name(const SubsetSize& s) { return s ? std::to_string(*s) : "all"; }

void ExperimentConfig::validate() const {
  try {
    corpus.validate();
    pipeline.sensor.validate();
    pipeline.segmentation.validate();
    pipeline.crop.validate();
    network.validate();
    schedule.validate();
    pretrain_schedule.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (network.input_size != pipeline.crop.out_size) throw ConfigError("config: network input must match crop size");
  if (train_frames < 0 || test_frames < 0) throw ConfigError("config: frame counts must be >= 0");
  if (seeds.empty()) throw ConfigError("config: experiment.seeds needs at least one seed");
  if (subsets.empty()) throw ConfigError("config: experiment.subsets needs at least one entry");
  if (modes.empty()) throw ConfigError("config: experiment.modes needs at least one entry");
  for (const auto& s : subsets) {
    if (s && *s < 1) throw ConfigError("config: subset sizes must be >= 1");
  }
}

const std::set<std::string>& known_config_keys() {
  static const std::set<std::string> keys = [] {
    std::set<std::string> k = {
        "corpus.train_frames", "corpus.test_frames", "corpus.objects_per_frame",
        "corpus.noise_stddev", "corpus.intensity_jitter", "corpus.seed",
        "corpus.ground_z", "corpus.min_object_range", "corpus.max_object_range",
        "corpus.clearance", "sensor.rows", "sensor.cols",
        "sensor.elev_min", "sensor.elev_max", "sensor.max_range",
        "segmentation.range_diff_threshold", "segmentation.min_segment_cells", "segmentation.ground_removal",
        "segmentation.ground_z_threshold", "crop.window_rows", "crop.window_cols",
        "crop.out_size", "crop.range_norm_max", "crop.height_norm_min",
        "crop.height_norm_max", "network.conv_channels", "network.fc_width",
        "network.kernel_size", "train.batch_size", "train.lr",
        "train.checkpoint_every", "train.loss_stop", "train.loss_window",
        "train.max_iterations", "pretrain.max_iterations", "pretrain.checkpoint_every",
        "experiment.subsets", "experiment.seeds", "experiment.modes",
        "experiment.selection", "experiment.save_checkpoints"};
    for (const auto& c : kMixKeys) k.insert("corpus.mix." + c);
    return k;
  }();
  return keys;
}

ExperimentConfig experiment_config_from(const Config& cfg) {
  cfg.reject_unknown(known_config_keys());
  ExperimentConfig out;

  SensorModel& sensor = out.pipeline.sensor;
  sensor.n_rows = static_cast<int>(cfg.get_int("sensor.rows", sensor.n_rows));
  sensor.n_cols = static_cast<int>(cfg.get_int("sensor.cols", sensor.n_cols));
  sensor.elev_min_deg = cfg.get_double("sensor.elev_min", sensor.elev_min_deg);
  sensor.elev_max_deg = cfg.get_double("sensor.elev_max", sensor.elev_max_deg);
  sensor.max_range = cfg.get_double("sensor.max_range", sensor.max_range);

  CorpusSpec& corpus = out.corpus;
  corpus.sensor = sensor;
  out.train_frames = static_cast<int>(cfg.get_int("corpus.train_frames", out.train_frames));
  out.test_frames = static_cast<int>(cfg.get_int("corpus.test_frames", out.test_frames));
  corpus.n_frames = out.train_frames;
  corpus.objects_per_frame = static_cast<int>(cfg.get_int("corpus.objects_per_frame", corpus.objects_per_frame));
  corpus.noise_stddev = cfg.get_double("corpus.noise_stddev", corpus.noise_stddev);
  corpus.intensity_jitter = cfg.get_double("corpus.intensity_jitter", corpus.intensity_jitter);
  corpus.seed = static_cast<std::uint64_t>(cfg.get_int("corpus.seed", static_cast<long long>(corpus.seed)));
  corpus.ground_z = cfg.get_double("corpus.ground_z", corpus.ground_z);
  corpus.min_object_range = cfg.get_double("corpus.min_object_range", corpus.min_object_range);
  corpus.max_object_range = cfg.get_double("corpus.max_object_range", corpus.max_object_range);
  corpus.clearance = cfg.get_double("corpus.clearance", corpus.clearance);
  for (std::size_t i = 0; i < kMixKeys.size(); ++i) {
    corpus.class_mix[i] = cfg.get_double("corpus.mix." + kMixKeys[i], corpus.class_mix[i]);
  }

  SegmentationParams& seg = out.pipeline.segmentation;
  seg.range_diff_threshold = cfg.get_double("segmentation.range_diff_threshold", seg.range_diff_threshold);
  seg.min_segment_cells = static_cast<int>(cfg.get_int("segmentation.min_segment_cells", seg.min_segment_cells));
  seg.ground_removal = cfg.get_bool("segmentation.ground_removal", seg.ground_removal);
  seg.ground_z_threshold = cfg.get_double("segmentation.ground_z_threshold", seg.ground_z_threshold);

  CropParams& crop = out.pipeline.crop;
  crop.window_rows = static_cast<int>(cfg.get_int("crop.window_rows", crop.window_rows));
  crop.window_cols = static_cast<int>(cfg.get_int("crop.window_cols", crop.window_cols));
  crop.out_size = static_cast<int>(cfg.get_int("crop.out_size", crop.out_size));
  crop.range_norm_max = cfg.get_double("crop.range_norm_max", crop.range_norm_max);
  crop.height_norm_min = cfg.get_double("crop.height_norm_min", crop.height_norm_min);
  crop.height_norm_max = cfg.get_double("crop.height_norm_max", crop.height_norm_max);

  nn::NetworkConfig& net = out.network;
  net.input_size = crop.out_size;
  const auto channels = cfg.get_list("network.conv_channels", {});
  if (!channels.empty()) {
    if (channels.size() != 3) throw ConfigError("config: network.conv_channels needs three values");
    for (std::size_t i = 0; i < 3; ++i) net.conv_channels[i] = parse_number<int>("network.conv_channels", channels[i]);
  }
  net.fc_width = static_cast<int>(cfg.get_int("network.fc_width", net.fc_width));
  net.kernel_size = static_cast<int>(cfg.get_int("network.kernel_size", net.kernel_size));

  TrainSchedule& sched = out.schedule;
  sched.batch_size = static_cast<int>(cfg.get_int("train.batch_size", sched.batch_size));
  sched.lr = cfg.get_double("train.lr", sched.lr);
  sched.checkpoint_every = static_cast<int>(cfg.get_int("train.checkpoint_every", sched.checkpoint_every));
  sched.loss_stop = cfg.get_double("train.loss_stop", sched.loss_stop);
  sched.loss_window = static_cast<int>(cfg.get_int("train.loss_window", sched.loss_window));
  sched.max_iterations = static_cast<int>(cfg.get_int("train.max_iterations", sched.max_iterations));
  out.pretrain_schedule = sched;
  out.pretrain_schedule.max_iterations =
      static_cast<int>(cfg.get_int("pretrain.max_iterations", sched.max_iterations));
  out.pretrain_schedule.checkpoint_every =
      static_cast<int>(cfg.get_int("pretrain.checkpoint_every", sched.checkpoint_every));

  if (cfg.has("experiment.subsets")) {
    out.subsets.clear();
    for (const auto& s : cfg.get_list("experiment.subsets", {})) {
      out.subsets.push_back(s == "all" ? SubsetSize{} : SubsetSize{parse_number<std::size_t>("experiment.subsets", s)});
    }
  }
  if (cfg.has("experiment.seeds")) {
    out.seeds.clear();
    for (const auto& s : cfg.get_list("experiment.seeds", {})) {
      out.seeds.push_back(parse_number<std::uint64_t>("experiment.seeds", s));
    }
  }
  if (cfg.has("experiment.modes")) {
    out.modes.clear();
    for (const auto& m : cfg.get_list("experiment.modes", {})) {
      if (m == "baseline") out.modes.push_back(FinetuneMode::Baseline);
      else if (m == "pretrain") out.modes.push_back(FinetuneMode::Pretrain);
      else if (m == "pretrain-fix") out.modes.push_back(FinetuneMode::PretrainFixed);
      else throw ConfigError("config: experiment.modes: unknown mode '" + m + "'");
    }
  }
  const std::string selection = cfg.get_string("experiment.selection", "test");
  if (selection == "test") out.selection = SelectionMode::TestSet;
  else if (selection == "validation") out.selection = SelectionMode::Validation;
  else throw ConfigError("config: experiment.selection must be test or validation");
  out.save_checkpoints = cfg.get_bool("experiment.save_checkpoints", out.save_checkpoints);

  out.validate();
  return out;
}

void write_experiment_config(std::ostream& os, const ExperimentConfig& c) {
  os << std::setprecision(17);
  os << "corpus.train_frames = " << c.train_frames << '\n';
  os << "corpus.test_frames = " << c.test_frames << '\n';
  os << "corpus.objects_per_frame = " << c.corpus.objects_per_frame << '\n';
  os << "corpus.noise_stddev = " << c.corpus.noise_stddev << '\n';
  os << "corpus.intensity_jitter = " << c.corpus.intensity_jitter << '\n';
  os << "corpus.seed = " << c.corpus.seed << '\n';
  os << "corpus.ground_z = " << c.corpus.ground_z << '\n';
  os << "corpus.min_object_range = " << c.corpus.min_object_range << '\n';
  os << "corpus.max_object_range = " << c.corpus.max_object_range << '\n';
  os << "corpus.clearance = " << c.corpus.clearance << '\n';
  for (std::size_t i = 0; i < kMixKeys.size(); ++i) os << "corpus.mix." << kMixKeys[i] << " = " << c.corpus.class_mix[i] << '\n';
  const SensorModel& s = c.pipeline.sensor;
  os << "sensor.rows = " << s.n_rows << '\n' << "sensor.cols = " << s.n_cols << '\n';
  os << "sensor.elev_min = " << s.elev_min_deg << '\n' << "sensor.elev_max = " << s.elev_max_deg << '\n';
  os << "sensor.max_range = " << s.max_range << '\n';
  const SegmentationParams& g = c.pipeline.segmentation;
  os << "segmentation.range_diff_threshold = " << g.range_diff_threshold << '\n';
  os << "segmentation.min_segment_cells = " << g.min_segment_cells << '\n';
  os << "segmentation.ground_removal = " << (g.ground_removal ? "true" : "false") << '\n';
  os << "segmentation.ground_z_threshold = " << g.ground_z_threshold << '\n';
  const CropParams& p = c.pipeline.crop;
  os << "crop.window_rows = " << p.window_rows << '\n' << "crop.window_cols = " << p.window_cols << '\n';
  os << "crop.out_size = " << p.out_size << '\n' << "crop.range_norm_max = " << p.range_norm_max << '\n';
  os << "crop.height_norm_min = " << p.height_norm_min << '\n' << "crop.height_norm_max = " << p.height_norm_max << '\n';
  os << "network.conv_channels = " << c.network.conv_channels[0] << ',' << c.network.conv_channels[1] << ','
     << c.network.conv_channels[2] << '\n';
  os << "network.fc_width = " << c.network.fc_width << '\n' << "network.kernel_size = " << c.network.kernel_size << '\n';
  const TrainSchedule& t = c.schedule;
  os << "train.batch_size = " << t.batch_size << '\n' << "train.lr = " << t.lr << '\n';
  os << "train.checkpoint_every = " << t.checkpoint_every << '\n' << "train.loss_stop = " << t.loss_stop << '\n';
  os << "train.loss_window = " << t.loss_window << '\n' << "train.max_iterations = " << t.max_iterations << '\n';
  os << "pretrain.max_iterations = " << c.pretrain_schedule.max_iterations << '\n';
  os << "pretrain.checkpoint_every = " << c.pretrain_schedule.checkpoint_every << '\n';
  os << "experiment.subsets = ";
  for (std::size_t i = 0; i < c.subsets.size(); ++i) os << (i ? "," : "") << subset_name(c.subsets[i]);
  os << "\nexperiment.seeds = ";
  for (std::size_t i = 0; i < c.seeds.size(); ++i) os << (i ? "," : "") << c.seeds[i];
  os << "\nexperiment.modes = ";
  for (std::size_t i = 0; i < c.modes.size(); ++i) os << (i ? "," : "") << mode_name(c.modes[i]);
  os << "\nexperiment.selection = " << (c.selection == SelectionMode::TestSet ? "test" : "validation") << '\n';
  os << "experiment.save_checkpoints = " << (c.save_checkpoints ? "true" : "false") << '\n';
}

}  // namespace lidarseg
