#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "lidarseg/evaluation.hpp"
#include "lidarseg/nn/network.hpp"
#include "lidarseg/nn/optim.hpp"
#include "lidarseg/rules.hpp"
#include "lidarseg/samples.hpp"

namespace lidarseg {

/// Samples paired with class ids over one label set. Samples live in a
/// shared pool so subsets and splits do not copy image data.
class LabeledSet {
 public:
  LabeledSet() = default;
  LabeledSet(std::vector<Sample> samples, std::vector<int> labels, LabelSet set);
  LabeledSet(std::shared_ptr<const std::vector<Sample>> pool, std::vector<std::size_t> index, std::vector<int> labels,
             LabelSet set);

  std::size_t size() const { return index_.size(); }
  bool empty() const { return index_.empty(); }
  LabelSet label_set() const { return set_; }
  int classes() const { return label_count(set_); }
  const Sample& sample(std::size_t i) const { return (*pool_)[index_[i]]; }
  int label(std::size_t i) const { return labels_[i]; }
  const std::vector<int>& labels() const { return labels_; }

  /// Subset by positions into this set.
  LabeledSet select(const std::vector<std::size_t>& positions) const;
  std::vector<std::size_t> class_histogram() const;

 private:
  std::shared_ptr<const std::vector<Sample>> pool_ = std::make_shared<std::vector<Sample>>();
  std::vector<std::size_t> index_;
  std::vector<int> labels_;
  LabelSet set_ = LabelSet::Fine;
};

/// NHWC batch of the given samples.
nn::Tensor4 make_batch(const LabeledSet& data, const std::vector<std::size_t>& positions);

/// Arg-max class per sample, evaluated in fixed-size batches.
std::vector<int> predict(const nn::NetworkParams& params, const LabeledSet& data, int batch_size = 16);

EvalReport evaluate_params(const nn::NetworkParams& params, const LabeledSet& data);

struct TrainSchedule {
  int batch_size = 2;
  double lr = 1e-4;
  int checkpoint_every = 100;
  double loss_stop = 1e-4;
  int loss_window = 100;
  int max_iterations = 5000;
  std::uint64_t shuffle_seed = 0;

  void validate() const;
};

struct CheckpointEntry {
  std::int64_t iteration = 0;
  double loss = 0.0;
  std::string path;
  double selection_f1 = 0.0;
};

struct RunRecord {
  std::vector<CheckpointEntry> checkpoints;
  std::size_t selected = 0;
  /// Full snapshot (params and optimizer state) of the selected checkpoint.
  nn::Checkpoint selected_state;
  EvalReport selected_report;
  bool aborted = false;
  std::string abort_reason;

  const CheckpointEntry& selected_entry() const { return checkpoints.at(selected); }
  const nn::NetworkParams& selected_params() const { return selected_state.params; }
};

struct TrainOptions {
  TrainSchedule schedule;
  bool frozen_conv = false;
  /// Set used to score every checkpoint; the training data when absent.
  const LabeledSet* selection_set = nullptr;
  /// Checkpoint files are written here when set.
  std::optional<std::filesystem::path> checkpoint_dir;
  /// Resume from this snapshot instead of starting at the initial params.
  const nn::Checkpoint* resume = nullptr;
  /// Called after every optimizer step with (iteration, batch loss).
  std::function<void(std::int64_t, double)> on_step;
};

/// Sample positions consumed at a given iteration. Each epoch is a fresh
/// permutation seeded from (shuffle_seed, epoch), so the stream is a pure
/// function of the iteration number.
std::vector<std::size_t> minibatch_positions(std::size_t dataset_size, const TrainSchedule& sched,
                                             std::int64_t iteration);

/// Minibatch ADAM on cross-entropy. Checkpoints at iteration 0, every
/// checkpoint_every steps and at the end; stops once the running mean of the
/// last `loss_window` batch losses drops below loss_stop or max_iterations
/// is reached. The checkpoint with the highest selection-set mean F1 is
/// selected (earliest on ties). A non-finite loss or gradient aborts the
/// run and keeps what was checkpointed so far.
RunRecord train(const nn::NetworkParams& init, const LabeledSet& data, const TrainOptions& options);

class EmptyDataError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Seeded uniform sampling without replacement of min(n, available) items
/// per class; original order is kept.
LabeledSet subset_per_class(const LabeledSet& data, std::size_t n_per_class, std::uint64_t seed);

/// Seeded split holding out `fraction` of each class (at least one item of
/// every class with two or more items).
std::pair<LabeledSet, LabeledSet> holdout_split(const LabeledSet& data, double fraction, std::uint64_t seed);

inline constexpr double kPretrainHoldout = 0.1;

struct PretrainResult {
  nn::NetworkParams params;
  RunRecord record;
};

/// Trains a fresh K=5 net on rule labels and keeps the checkpoint that
/// scores best on a 10% held-out slice of the same auto-labeled data.
PretrainResult pretrain(const LabeledSet& data_auto, const nn::NetworkConfig& cfg, const TrainSchedule& sched,
                        std::uint64_t seed, std::optional<std::filesystem::path> checkpoint_dir = std::nullopt);

/// Transfers the conv stack of `theta_r` into a fresh 7-class head and
/// trains on manual labels, optionally with the conv stack frozen.
RunRecord finetune(const nn::NetworkParams& theta_r, const LabeledSet& data_manual, const TrainSchedule& sched,
                   bool frozen_conv, std::uint64_t seed, const LabeledSet* selection_set = nullptr,
                   std::optional<std::filesystem::path> checkpoint_dir = std::nullopt);

/// Baseline counterpart of finetune: truncated-normal init of a 7-class net,
/// same shuffle stream as finetune for the same seed.
RunRecord train_from_scratch(const nn::NetworkConfig& cfg, const LabeledSet& data_manual, const TrainSchedule& sched,
                             std::uint64_t seed, const LabeledSet* selection_set = nullptr,
                             std::optional<std::filesystem::path> checkpoint_dir = std::nullopt);

/// "iteration loss selection_f1 path" per checkpoint, then a "selected" line.
void write_run_record(std::ostream& os, const RunRecord& record);

}  // namespace lidarseg
