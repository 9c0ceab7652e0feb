#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "lidarseg/dataset.hpp"
#include "lidarseg/nn/network.hpp"
#include "lidarseg/synthetic.hpp"
#include "lidarseg/training.hpp"

namespace lidarseg {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Flat "section.key = value" text. '#' starts a comment; later keys win.
class Config {
 public:
  static Config parse(std::istream& is);
  static Config parse_string(const std::string& text);
  static Config load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::map<std::string, std::string>& values() const { return values_; }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<std::string> get_list(const std::string& key, const std::vector<std::string>& fallback) const;

  /// Throws ConfigError naming the first key not in `known`.
  void reject_unknown(const std::set<std::string>& known) const;

 private:
  std::map<std::string, std::string> values_;
};

enum class SelectionMode { TestSet, Validation };

enum class FinetuneMode { Baseline, Pretrain, PretrainFixed };

std::string mode_name(FinetuneMode mode);

/// Subset size per class; nullopt means the whole training set.
using SubsetSize = std::optional<std::size_t>;
std::string subset_name(const SubsetSize& s);

struct ExperimentConfig {
  CorpusSpec corpus;
  int train_frames = 200;
  int test_frames = 100;
  PipelineParams pipeline;
  nn::NetworkConfig network;
  TrainSchedule schedule;
  /// Pretraining schedule; defaults to `schedule`.
  TrainSchedule pretrain_schedule;
  std::vector<SubsetSize> subsets = {100, 400, 1600, std::nullopt};
  std::vector<std::uint64_t> seeds = {1};
  std::vector<FinetuneMode> modes = {FinetuneMode::Baseline, FinetuneMode::Pretrain, FinetuneMode::PretrainFixed};
  SelectionMode selection = SelectionMode::TestSet;
  bool save_checkpoints = false;

  void validate() const;
};

ExperimentConfig experiment_config_from(const Config& cfg);
/// Every key understood by experiment_config_from.
const std::set<std::string>& known_config_keys();
/// Canonical "section.key = value" echo of a parsed config.
void write_experiment_config(std::ostream& os, const ExperimentConfig& cfg);

}  // namespace lidarseg
