#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "lidarseg/config.hpp"
#include "lidarseg/evaluation.hpp"
#include "lidarseg/training.hpp"

namespace lidarseg {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Corpus directory layout: manifest.txt (config echo), then per split a
/// frames.txt ("frame_id seed file" lines) next to the LSEG frame files.
void write_corpus(const std::filesystem::path& dir, const ExperimentConfig& cfg);
std::vector<PointCloud> load_split(const std::filesystem::path& split_dir);

/// Corpus frames for one split, generated in memory.
std::vector<PointCloud> generate_split(const ExperimentConfig& cfg, Split split);

/// One shared sample pool seen three ways: with rule labels, with
/// majority-vote fine labels, and with fine labels merged onto the rule
/// classes. Segments without any labeled point are dropped.
struct CorpusSamples {
  LabeledSet auto_labeled;
  LabeledSet manual;
  LabeledSet merged_truth;
};

CorpusSamples corpus_samples(const std::vector<PointCloud>& clouds, const PipelineParams& params);

struct CellResult {
  SubsetSize subset;
  FinetuneMode mode = FinetuneMode::Baseline;
  std::uint64_t seed = 0;
  std::size_t train_size = 0;
  bool failed = false;
  std::string error;
  EvalReport report;
  std::int64_t selected_iteration = 0;
};

struct SeedPretrain {
  std::uint64_t seed = 0;
  bool failed = false;
  std::string error;
  EvalReport report;  // 5-class, on merged test truth
  std::int64_t selected_iteration = 0;
};

struct ExperimentReport {
  EvalReport rule_based;
  std::vector<SeedPretrain> pretrained;
  std::vector<CellResult> cells;
  std::size_t train_samples = 0;
  std::size_t test_samples = 0;

  bool any_failed() const;
  const CellResult* find(const SubsetSize& subset, FinetuneMode mode, std::uint64_t seed) const;
  /// Mean over seeds of a cell's mean F1 (failed cells skipped).
  double mean_over_seeds(const SubsetSize& subset, FinetuneMode mode) const;
};

struct ExperimentOptions {
  int jobs = 1;
  std::ostream* log = nullptr;
};

/// Rule-based scoring, per-seed pretraining, then every subset x mode x seed
/// fine-tuning run, with report files written under `out_dir`.
ExperimentReport run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                                 const ExperimentOptions& options = {});

/// report.txt: the rule vs pretrained table and the fine-tuning grid.
void write_experiment_tables(std::ostream& os, const ExperimentConfig& cfg, const ExperimentReport& report);
/// per_class.csv rows: run,seed,class,precision,recall,f1.
void write_per_class_csv(std::ostream& os, const ExperimentReport& report);
/// mean_f1_vs_subset.csv rows: subset,mode,mean_f1 (averaged over seeds).
void write_mean_series_csv(std::ostream& os, const ExperimentConfig& cfg, const ExperimentReport& report);

}  // namespace lidarseg
