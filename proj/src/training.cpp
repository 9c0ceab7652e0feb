#include "lidarseg/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <random>

namespace lidarseg {

namespace {

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = a * 0x9E3779B97F4A7C15ULL + b + 0x632BE59BD9B4E019ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

std::string checkpoint_name(std::int64_t iteration) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "ckpt_%06lld.lckp", static_cast<long long>(iteration));
  return buf;
}

constexpr std::uint64_t kShuffleStream = 0x5348554646ULL;
constexpr std::uint64_t kBaselineInitStream = 0x494E4954ULL;

}  // namespace

LabeledSet::LabeledSet(std::vector<Sample> samples, std::vector<int> labels, LabelSet set)
    : pool_(std::make_shared<const std::vector<Sample>>(std::move(samples))), labels_(std::move(labels)), set_(set) {
  if (pool_->size() != labels_.size()) throw std::invalid_argument("LabeledSet: sample/label count mismatch");
  index_.resize(pool_->size());
  std::iota(index_.begin(), index_.end(), std::size_t{0});
  for (int l : labels_) {
    if (l < 0 || l >= label_count(set_)) throw std::invalid_argument("LabeledSet: label outside label set");
  }
}

LabeledSet::LabeledSet(std::shared_ptr<const std::vector<Sample>> pool, std::vector<std::size_t> index,
                       std::vector<int> labels, LabelSet set)
    : pool_(std::move(pool)), index_(std::move(index)), labels_(std::move(labels)), set_(set) {
  if (index_.size() != labels_.size()) throw std::invalid_argument("LabeledSet: index/label count mismatch");
  for (std::size_t i : index_) {
    if (i >= pool_->size()) throw std::invalid_argument("LabeledSet: index outside pool");
  }
  for (int l : labels_) {
    if (l < 0 || l >= label_count(set_)) throw std::invalid_argument("LabeledSet: label outside label set");
  }
}

LabeledSet LabeledSet::select(const std::vector<std::size_t>& positions) const {
  std::vector<std::size_t> idx;
  std::vector<int> lab;
  idx.reserve(positions.size());
  lab.reserve(positions.size());
  for (std::size_t p : positions) {
    idx.push_back(index_.at(p));
    lab.push_back(labels_.at(p));
  }
  return LabeledSet(pool_, std::move(idx), std::move(lab), set_);
}

std::vector<std::size_t> LabeledSet::class_histogram() const {
  std::vector<std::size_t> h(static_cast<std::size_t>(classes()), 0);
  for (int l : labels_) ++h[static_cast<std::size_t>(l)];
  return h;
}

nn::Tensor4 make_batch(const LabeledSet& data, const std::vector<std::size_t>& positions) {
  const int s = data.sample(positions.front()).size();
  nn::Tensor4 batch(static_cast<int>(positions.size()), s, s, 3);
  for (std::size_t b = 0; b < positions.size(); ++b) {
    const Sample& smp = data.sample(positions[b]);
    if (smp.size() != s) throw nn::ShapeError("make_batch: mixed sample sizes");
    for (int ch = 0; ch < 3; ++ch) {
      const Plane& plane = smp.channels[static_cast<std::size_t>(ch)];
      for (int r = 0; r < s; ++r) {
        for (int c = 0; c < s; ++c) batch(static_cast<int>(b), r, c, ch) = plane(r, c);
      }
    }
  }
  return batch;
}

std::vector<int> predict(const nn::NetworkParams& params, const LabeledSet& data, int batch_size) {
  std::vector<int> out;
  out.reserve(data.size());
  std::vector<std::size_t> positions;
  for (std::size_t start = 0; start < data.size(); start += static_cast<std::size_t>(batch_size)) {
    positions.clear();
    for (std::size_t i = start; i < std::min(data.size(), start + static_cast<std::size_t>(batch_size)); ++i) {
      positions.push_back(i);
    }
    const nn::Matrix probs = nn::forward(params, make_batch(data, positions));
    for (Eigen::Index r = 0; r < probs.rows(); ++r) {
      Eigen::Index arg = 0;
      probs.row(r).maxCoeff(&arg);
      out.push_back(static_cast<int>(arg));
    }
  }
  return out;
}

EvalReport evaluate_params(const nn::NetworkParams& params, const LabeledSet& data) {
  const std::vector<int> preds = predict(params, data);
  return evaluate(preds, data.labels(), data.label_set());
}

void TrainSchedule::validate() const {
  if (batch_size < 1) throw std::invalid_argument("schedule: batch_size must be >= 1");
  if (!(lr > 0.0)) throw std::invalid_argument("schedule: lr must be > 0");
  if (checkpoint_every < 1) throw std::invalid_argument("schedule: checkpoint_every must be >= 1");
  if (!(loss_stop > 0.0)) throw std::invalid_argument("schedule: loss_stop must be > 0");
  if (loss_window < 1) throw std::invalid_argument("schedule: loss_window must be >= 1");
  if (max_iterations < 0) throw std::invalid_argument("schedule: max_iterations must be >= 0");
}

std::vector<std::size_t> minibatch_positions(std::size_t dataset_size, const TrainSchedule& sched,
                                             std::int64_t iteration) {
  std::vector<std::size_t> out;
  out.reserve(static_cast<std::size_t>(sched.batch_size));
  std::int64_t cached_epoch = -1;
  std::vector<std::size_t> perm(dataset_size);
  for (int j = 0; j < sched.batch_size; ++j) {
    const auto pos = static_cast<std::uint64_t>(iteration) * static_cast<std::uint64_t>(sched.batch_size) +
                     static_cast<std::uint64_t>(j);
    const auto epoch = static_cast<std::int64_t>(pos / dataset_size);
    if (epoch != cached_epoch) {
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      std::mt19937_64 rng(mix_seed(sched.shuffle_seed, static_cast<std::uint64_t>(epoch)));
      std::shuffle(perm.begin(), perm.end(), rng);
      cached_epoch = epoch;
    }
    out.push_back(perm[pos % dataset_size]);
  }
  return out;
}

RunRecord train(const nn::NetworkParams& init, const LabeledSet& data, const TrainOptions& options) {
  const TrainSchedule& sched = options.schedule;
  sched.validate();
  if (data.empty()) throw EmptyDataError("train: empty training set");
  const nn::NetworkParams& start = options.resume ? options.resume->params : init;
  if (start.config.n_classes != data.classes()) {
    throw std::invalid_argument("train: network head width does not match the label set");
  }
  const LabeledSet& selection = options.selection_set ? *options.selection_set : data;
  if (selection.classes() != data.classes()) throw std::invalid_argument("train: selection set uses another label set");
  if (options.checkpoint_dir) std::filesystem::create_directories(*options.checkpoint_dir);

  nn::Checkpoint state;
  if (options.resume) {
    state = *options.resume;
  } else {
    state.params = init;
    state.adam = nn::AdamState::for_params(init, {sched.lr, 0.9, 0.999, 1e-8});
  }

  RunRecord record;
  double best_f1 = -1.0;
  auto checkpoint = [&](std::int64_t iteration, double loss) {
    CheckpointEntry entry;
    entry.iteration = iteration;
    entry.loss = loss;
    if (options.checkpoint_dir) {
      const auto path = *options.checkpoint_dir / checkpoint_name(iteration);
      nn::save_checkpoint(path, state);
      entry.path = path.string();
    }
    EvalReport report = evaluate_params(state.params, selection);
    entry.selection_f1 = report.mean_f1;
    if (report.mean_f1 > best_f1) {
      best_f1 = report.mean_f1;
      record.selected = record.checkpoints.size();
      record.selected_state = state;
      record.selected_report = std::move(report);
    }
    record.checkpoints.push_back(entry);
  };

  std::vector<int> labels;
  auto batch_labels = [&](const std::vector<std::size_t>& positions) {
    labels.clear();
    for (std::size_t p : positions) labels.push_back(data.label(p));
    return std::span<const int>(labels);
  };

  std::int64_t iteration = state.adam.t;
  if (iteration == 0) {
    const auto positions = minibatch_positions(data.size(), sched, 0);
    const nn::Matrix probs = nn::forward(state.params, make_batch(data, positions));
    checkpoint(0, nn::cross_entropy(probs, batch_labels(positions)));
  }

  while (iteration < sched.max_iterations) {
    const auto positions = minibatch_positions(data.size(), sched, iteration);
    nn::LossAndGradients lg = nn::backward(state.params, make_batch(data, positions), batch_labels(positions));
    if (!std::isfinite(lg.loss)) {
      record.aborted = true;
      record.abort_reason = "non-finite loss at iteration " + std::to_string(iteration + 1);
      break;
    }
    if (options.frozen_conv) {
      for (auto& layer : lg.grads.conv) {
        layer.weight.setZero();
        layer.bias.setZero();
      }
    }
    try {
      nn::adam_step(state.params, lg.grads, state.adam);
    } catch (const nn::NumericError& e) {
      record.aborted = true;
      record.abort_reason = std::string(e.what()) + " at iteration " + std::to_string(iteration + 1);
      break;
    }
    iteration = state.adam.t;
    if (options.on_step) options.on_step(iteration, lg.loss);

    state.loss_window.push_back(lg.loss);
    if (static_cast<int>(state.loss_window.size()) > sched.loss_window) {
      state.loss_window.erase(state.loss_window.begin());
    }
    const double running = mean_of(state.loss_window);
    const bool converged = static_cast<int>(state.loss_window.size()) == sched.loss_window && running < sched.loss_stop;
    if (iteration % sched.checkpoint_every == 0 || converged || iteration == sched.max_iterations) {
      checkpoint(iteration, running);
    }
    if (converged) break;
  }

  // A resumed run that stops before its next checkpoint still reports one.
  if (record.checkpoints.empty() && !record.aborted) checkpoint(iteration, mean_of(state.loss_window));
  return record;
}

LabeledSet subset_per_class(const LabeledSet& data, std::size_t n_per_class, std::uint64_t seed) {
  if (n_per_class < 1) throw std::invalid_argument("subset_per_class: n_per_class must be >= 1");
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(data.classes()));
  for (std::size_t i = 0; i < data.size(); ++i) by_class[static_cast<std::size_t>(data.label(i))].push_back(i);

  std::vector<std::size_t> keep;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& members = by_class[c];
    std::mt19937_64 rng(mix_seed(seed, c));
    std::shuffle(members.begin(), members.end(), rng);
    const std::size_t take = std::min(n_per_class, members.size());
    keep.insert(keep.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(take));
  }
  std::sort(keep.begin(), keep.end());
  return data.select(keep);
}

std::pair<LabeledSet, LabeledSet> holdout_split(const LabeledSet& data, double fraction, std::uint64_t seed) {
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(data.classes()));
  for (std::size_t i = 0; i < data.size(); ++i) by_class[static_cast<std::size_t>(data.label(i))].push_back(i);
  std::vector<std::size_t> train_pos;
  std::vector<std::size_t> held_pos;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& members = by_class[c];
    std::mt19937_64 rng(mix_seed(seed ^ 0x484F4C44ULL, c));
    std::shuffle(members.begin(), members.end(), rng);
    std::size_t n_held = 0;
    if (members.size() >= 2) {
      n_held = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(fraction * static_cast<double>(members.size()))));
      n_held = std::min(n_held, members.size() - 1);
    }
    held_pos.insert(held_pos.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n_held));
    train_pos.insert(train_pos.end(), members.begin() + static_cast<std::ptrdiff_t>(n_held), members.end());
  }
  std::sort(train_pos.begin(), train_pos.end());
  std::sort(held_pos.begin(), held_pos.end());
  return {data.select(train_pos), data.select(held_pos)};
}

PretrainResult pretrain(const LabeledSet& data_auto, const nn::NetworkConfig& cfg, const TrainSchedule& sched,
                        std::uint64_t seed, std::optional<std::filesystem::path> checkpoint_dir) {
  if (data_auto.empty()) throw EmptyDataError("pretrain: empty auto-labeled set");
  if (data_auto.label_set() != LabelSet::Rule) throw std::invalid_argument("pretrain: expects rule labels");
  nn::NetworkConfig rule_cfg = cfg;
  rule_cfg.n_classes = kNumRuleLabels;

  auto [train_part, held] = holdout_split(data_auto, kPretrainHoldout, seed);
  TrainOptions opts;
  opts.schedule = sched;
  opts.schedule.shuffle_seed = mix_seed(seed, kShuffleStream);
  opts.selection_set = held.empty() ? nullptr : &held;
  opts.checkpoint_dir = std::move(checkpoint_dir);
  RunRecord record = train(nn::init_params(rule_cfg, seed), train_part.empty() ? data_auto : train_part, opts);
  nn::NetworkParams params = record.selected_params();
  return {std::move(params), std::move(record)};
}

RunRecord finetune(const nn::NetworkParams& theta_r, const LabeledSet& data_manual, const TrainSchedule& sched,
                   bool frozen_conv, std::uint64_t seed, const LabeledSet* selection_set,
                   std::optional<std::filesystem::path> checkpoint_dir) {
  if (data_manual.empty()) throw EmptyDataError("finetune: empty manual set");
  if (data_manual.label_set() != LabelSet::Fine) throw std::invalid_argument("finetune: expects fine labels");
  TrainOptions opts;
  opts.schedule = sched;
  opts.schedule.shuffle_seed = mix_seed(seed, kShuffleStream);
  opts.frozen_conv = frozen_conv;
  opts.selection_set = selection_set;
  opts.checkpoint_dir = std::move(checkpoint_dir);
  return train(nn::replace_head(theta_r, kNumFineLabels, seed), data_manual, opts);
}

RunRecord train_from_scratch(const nn::NetworkConfig& cfg, const LabeledSet& data_manual, const TrainSchedule& sched,
                             std::uint64_t seed, const LabeledSet* selection_set,
                             std::optional<std::filesystem::path> checkpoint_dir) {
  if (data_manual.empty()) throw EmptyDataError("train_from_scratch: empty manual set");
  nn::NetworkConfig fine_cfg = cfg;
  fine_cfg.n_classes = data_manual.classes();
  TrainOptions opts;
  opts.schedule = sched;
  opts.schedule.shuffle_seed = mix_seed(seed, kShuffleStream);
  opts.selection_set = selection_set;
  opts.checkpoint_dir = std::move(checkpoint_dir);
  return train(nn::init_params(fine_cfg, mix_seed(seed, kBaselineInitStream)), data_manual, opts);
}

void write_run_record(std::ostream& os, const RunRecord& record) {
  os << std::fixed << std::setprecision(6);
  for (const auto& c : record.checkpoints) {
    os << c.iteration << ' ' << c.loss << ' ' << c.selection_f1 << ' ' << (c.path.empty() ? "-" : c.path) << '\n';
  }
  if (!record.checkpoints.empty()) os << "selected " << record.selected_entry().iteration << '\n';
  if (record.aborted) os << "aborted " << record.abort_reason << '\n';
  os.unsetf(std::ios::floatfield);
}

}  // namespace lidarseg
