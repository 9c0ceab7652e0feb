#include "lidarseg/experiment.hpp"

#include <atomic>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iomanip>
#include <mutex>
#include <numeric>
#include <ostream>
#include <sstream>
#include <thread>

namespace lidarseg {

namespace fs = std::filesystem;

namespace {

const char* split_name(Split split) { return split == Split::Train ? "train" : "test"; }

std::string frame_file(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%05d.lseg", index);
  return buf;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write " + path.string());
  return os;
}

CorpusSpec split_spec(const ExperimentConfig& cfg, Split split) {
  CorpusSpec spec = cfg.corpus;
  spec.sensor = cfg.pipeline.sensor;
  spec.n_frames = split == Split::Train ? cfg.train_frames : cfg.test_frames;
  return spec;
}

/// Runs task(i) for i in [0, n) on up to `jobs` threads.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& task) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, jobs)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> threads;
  for (std::size_t w = 0; w < workers; ++w) {
    threads.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) task(i);
    });
  }
  for (auto& t : threads) t.join();
}

/// Per-class precision/recall/F1 averaged over reports sharing a label set.
EvalReport average_reports(const std::vector<const EvalReport*>& reports) {
  EvalReport out;
  if (reports.empty()) return out;
  out = *reports.front();
  out.confusion = {};
  for (auto& c : out.classes) c.precision = c.recall = c.f1 = 0.0;
  out.mean_f1 = 0.0;
  out.sample_count = 0;
  for (const EvalReport* r : reports) {
    for (std::size_t i = 0; i < out.classes.size(); ++i) {
      out.classes[i].precision += r->classes[i].precision;
      out.classes[i].recall += r->classes[i].recall;
      out.classes[i].f1 += r->classes[i].f1;
    }
    out.mean_f1 += r->mean_f1;
    out.sample_count += r->sample_count;
  }
  const double n = static_cast<double>(reports.size());
  for (auto& c : out.classes) {
    c.precision /= n;
    c.recall /= n;
    c.f1 /= n;
  }
  out.mean_f1 /= n;
  return out;
}

std::string cell_name(const SubsetSize& subset, FinetuneMode mode) { return mode_name(mode) + "-" + subset_name(subset); }

std::string run_dir_name(const std::string& name, std::uint64_t seed) {
  return name + "_seed" + std::to_string(seed);
}

/// Persists a run: record.txt with checkpoint paths relative to the run
/// directory, the selected snapshot and the test-set evaluation.
void persist_run(const fs::path& run_dir, RunRecord record, const EvalReport& test_report) {
  for (auto& c : record.checkpoints) {
    if (!c.path.empty()) c.path = fs::path(c.path).lexically_relative(run_dir).generic_string();
  }
  {
    auto os = open_out(run_dir / "record.txt");
    write_run_record(os, record);
  }
  nn::save_checkpoint(run_dir / "selected.lckp", record.selected_state);
  auto os = open_out(run_dir / "test_eval.txt");
  write_report_structured(os, test_report);
}

class Logger {
 public:
  explicit Logger(std::ostream* os) : os_(os) {}
  void operator()(const std::string& line) {
    if (!os_) return;
    std::lock_guard<std::mutex> lock(mu_);
    *os_ << line << '\n' << std::flush;
  }

 private:
  std::ostream* os_;
  std::mutex mu_;
};

}  // namespace

void write_corpus(const fs::path& dir, const ExperimentConfig& cfg) {
  cfg.validate();
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create " + dir.string() + ": " + ec.message());
  {
    auto os = open_out(dir / "manifest.txt");
    write_experiment_config(os, cfg);
  }
  for (Split split : {Split::Train, Split::Test}) {
    const fs::path split_dir = dir / split_name(split);
    fs::create_directories(split_dir, ec);
    if (ec) throw DataError("cannot create " + split_dir.string() + ": " + ec.message());
    const CorpusSpec spec = split_spec(cfg, split);
    auto index = open_out(split_dir / "frames.txt");
    for (const Frame& f : generate_corpus(spec, split)) {
      const int i = static_cast<int>(f.cloud.frame_id);
      save_cloud(split_dir / frame_file(i), f.cloud);
      index << i << ' ' << f.seed << ' ' << frame_file(i) << '\n';
    }
  }
}

std::vector<PointCloud> load_split(const fs::path& split_dir) {
  std::ifstream index(split_dir / "frames.txt");
  if (!index) throw DataError("missing frame index in " + split_dir.string());
  std::vector<PointCloud> clouds;
  std::string line;
  while (std::getline(index, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::int64_t frame_id = 0;
    std::uint64_t seed = 0;
    std::string file;
    if (!(ls >> frame_id >> seed >> file)) throw DataError("malformed frame index line: " + line);
    try {
      clouds.push_back(load_cloud(split_dir / file, frame_id));
    } catch (const FormatError& e) {
      throw DataError(e.what());
    }
  }
  return clouds;
}

std::vector<PointCloud> generate_split(const ExperimentConfig& cfg, Split split) {
  std::vector<PointCloud> clouds;
  for (Frame& f : generate_corpus(split_spec(cfg, split), split)) clouds.push_back(std::move(f.cloud));
  return clouds;
}

CorpusSamples corpus_samples(const std::vector<PointCloud>& clouds, const PipelineParams& params) {
  SampleTable table = build_sample_table(clouds, params);
  auto pool = std::make_shared<std::vector<Sample>>();
  std::vector<int> rule;
  std::vector<int> truth;
  for (std::size_t i = 0; i < table.size(); ++i) {
    if (table.truth[i] < 0) continue;
    pool->push_back(std::move(table.samples[i]));
    rule.push_back(table.rule_labels[i]);
    truth.push_back(table.truth[i]);
  }
  std::vector<std::size_t> index(pool->size());
  std::iota(index.begin(), index.end(), std::size_t{0});
  std::shared_ptr<const std::vector<Sample>> shared = std::move(pool);
  std::vector<int> merged = merge_to_rule_classes(truth);
  return {LabeledSet(shared, index, std::move(rule), LabelSet::Rule),
          LabeledSet(shared, index, std::move(truth), LabelSet::Fine),
          LabeledSet(shared, index, std::move(merged), LabelSet::Rule)};
}

bool ExperimentReport::any_failed() const {
  for (const auto& p : pretrained) {
    if (p.failed) return true;
  }
  for (const auto& c : cells) {
    if (c.failed) return true;
  }
  return false;
}

const CellResult* ExperimentReport::find(const SubsetSize& subset, FinetuneMode mode, std::uint64_t seed) const {
  for (const auto& c : cells) {
    if (c.subset == subset && c.mode == mode && c.seed == seed) return &c;
  }
  return nullptr;
}

double ExperimentReport::mean_over_seeds(const SubsetSize& subset, FinetuneMode mode) const {
  double sum = 0.0;
  int n = 0;
  for (const auto& c : cells) {
    if (c.subset == subset && c.mode == mode && !c.failed) {
      sum += c.report.mean_f1;
      ++n;
    }
  }
  return n ? sum / n : 0.0;
}

ExperimentReport run_experiment(const ExperimentConfig& cfg, const fs::path& out_dir,
                                 const ExperimentOptions& options) {
  cfg.validate();
  Logger log(options.log);
  std::error_code ec;
  fs::create_directories(out_dir / "runs", ec);
  if (ec) throw DataError("cannot create " + out_dir.string() + ": " + ec.message());
  fs::create_directories(out_dir / "confusion");
  {
    auto os = open_out(out_dir / "config.txt");
    write_experiment_config(os, cfg);
  }

  log("generating corpora");
  const CorpusSamples train = corpus_samples(generate_split(cfg, Split::Train), cfg.pipeline);
  const CorpusSamples test = corpus_samples(generate_split(cfg, Split::Test), cfg.pipeline);
  if (train.manual.empty()) throw DataError("training corpus produced no samples");
  if (test.manual.empty()) throw DataError("test corpus produced no samples");

  ExperimentReport report;
  report.train_samples = train.manual.size();
  report.test_samples = test.manual.size();
  report.rule_based = evaluate(test.auto_labeled.labels(), test.merged_truth.labels(), LabelSet::Rule);
  log("rule-based mean F1 " + std::to_string(report.rule_based.mean_f1));

  // Pretraining, one run per seed.
  report.pretrained.resize(cfg.seeds.size());
  std::vector<nn::NetworkParams> theta(cfg.seeds.size());
  parallel_for(cfg.seeds.size(), options.jobs, [&](std::size_t i) {
    SeedPretrain& out = report.pretrained[i];
    out.seed = cfg.seeds[i];
    const fs::path run_dir = out_dir / "runs" / run_dir_name("pretrain", out.seed);
    try {
      fs::create_directories(run_dir);
      std::optional<fs::path> ckpt_dir;
      if (cfg.save_checkpoints) ckpt_dir = run_dir / "checkpoints";
      PretrainResult res = pretrain(train.auto_labeled, cfg.network, cfg.pretrain_schedule, out.seed, ckpt_dir);
      if (res.record.aborted) throw nn::NumericError(res.record.abort_reason);
      out.report = evaluate_params(res.params, test.merged_truth);
      out.selected_iteration = res.record.selected_entry().iteration;
      persist_run(run_dir, std::move(res.record), out.report);
      theta[i] = std::move(res.params);
      log("pretrain seed " + std::to_string(out.seed) + " mean F1 " + std::to_string(out.report.mean_f1));
    } catch (const std::exception& e) {
      out.failed = true;
      out.error = e.what();
      log("pretrain seed " + std::to_string(out.seed) + " failed: " + out.error);
    }
  });

  // Validation selection holds out a slice of the manual training set per seed.
  std::vector<LabeledSet> pool(cfg.seeds.size());
  std::vector<LabeledSet> validation(cfg.seeds.size());
  for (std::size_t i = 0; i < cfg.seeds.size(); ++i) {
    if (cfg.selection == SelectionMode::Validation) {
      std::tie(pool[i], validation[i]) = holdout_split(train.manual, kPretrainHoldout, cfg.seeds[i]);
    } else {
      pool[i] = train.manual;
    }
  }

  struct Job {
    std::size_t seed_index;
    SubsetSize subset;
    FinetuneMode mode;
  };
  std::vector<Job> jobs;
  for (const auto& subset : cfg.subsets) {
    for (FinetuneMode mode : cfg.modes) {
      for (std::size_t i = 0; i < cfg.seeds.size(); ++i) jobs.push_back({i, subset, mode});
    }
  }
  report.cells.resize(jobs.size());
  parallel_for(jobs.size(), options.jobs, [&](std::size_t j) {
    const Job& job = jobs[j];
    CellResult& cell = report.cells[j];
    cell.subset = job.subset;
    cell.mode = job.mode;
    cell.seed = cfg.seeds[job.seed_index];
    const std::string name = cell_name(job.subset, job.mode);
    const fs::path run_dir = out_dir / "runs" / run_dir_name(name, cell.seed);
    try {
      // Every mode of a (subset, seed) pair sees the same manual subset.
      const LabeledSet& source = pool[job.seed_index];
      const LabeledSet data = job.subset ? subset_per_class(source, *job.subset, cell.seed) : source;
      cell.train_size = data.size();
      const LabeledSet* selection =
          cfg.selection == SelectionMode::TestSet ? &test.manual : &validation[job.seed_index];
      if (selection->empty()) selection = nullptr;
      fs::create_directories(run_dir);
      std::optional<fs::path> ckpt_dir;
      if (cfg.save_checkpoints) ckpt_dir = run_dir / "checkpoints";

      RunRecord record;
      if (job.mode == FinetuneMode::Baseline) {
        record = train_from_scratch(cfg.network, data, cfg.schedule, cell.seed, selection, ckpt_dir);
      } else {
        if (report.pretrained[job.seed_index].failed) throw std::runtime_error("pretraining failed for this seed");
        record = finetune(theta[job.seed_index], data, cfg.schedule, job.mode == FinetuneMode::PretrainFixed,
                          cell.seed, selection, ckpt_dir);
      }
      if (record.aborted) throw nn::NumericError(record.abort_reason);
      cell.report = evaluate_params(record.selected_params(), test.manual);
      cell.selected_iteration = record.selected_entry().iteration;
      persist_run(run_dir, std::move(record), cell.report);
      log(name + " seed " + std::to_string(cell.seed) + " mean F1 " + std::to_string(cell.report.mean_f1));
    } catch (const std::exception& e) {
      cell.failed = true;
      cell.error = e.what();
      log(name + " seed " + std::to_string(cell.seed) + " failed: " + cell.error);
    }
  });

  {
    auto os = open_out(out_dir / "report.txt");
    write_experiment_tables(os, cfg, report);
  }
  {
    auto os = open_out(out_dir / "per_class.csv");
    write_per_class_csv(os, report);
  }
  {
    auto os = open_out(out_dir / "mean_f1_vs_subset.csv");
    write_mean_series_csv(os, cfg, report);
  }
  {
    auto os = open_out(out_dir / "confusion" / "rule-based.csv");
    write_confusion_csv(os, report.rule_based.confusion);
  }
  for (const auto& p : report.pretrained) {
    if (p.failed) continue;
    auto os = open_out(out_dir / "confusion" / (run_dir_name("pretrained", p.seed) + ".csv"));
    write_confusion_csv(os, p.report.confusion);
  }
  for (const auto& c : report.cells) {
    if (c.failed) continue;
    auto os = open_out(out_dir / "confusion" / (run_dir_name(cell_name(c.subset, c.mode), c.seed) + ".csv"));
    write_confusion_csv(os, c.report.confusion);
  }
  return report;
}

void write_experiment_tables(std::ostream& os, const ExperimentConfig& cfg, const ExperimentReport& report) {
  os << "samples train " << report.train_samples << " test " << report.test_samples << "\n\n";

  os << "rule-based vs pretrained CNN (rule classes, test set, mean over seeds)\n";
  std::vector<std::pair<std::string, EvalReport>> rows = {{"rule-based", report.rule_based}};
  std::vector<const EvalReport*> pre;
  for (const auto& p : report.pretrained) {
    if (!p.failed) pre.push_back(&p.report);
  }
  if (!pre.empty()) rows.emplace_back("pretrained-cnn", average_reports(pre));
  write_report_table(os, rows);

  os << "\nfine-tuned classifiers (fine classes, test set, mean over seeds)\n";
  rows.clear();
  for (const auto& subset : cfg.subsets) {
    for (FinetuneMode mode : cfg.modes) {
      std::vector<const EvalReport*> reps;
      for (const auto& c : report.cells) {
        if (c.subset == subset && c.mode == mode && !c.failed) reps.push_back(&c.report);
      }
      if (!reps.empty()) rows.emplace_back(cell_name(subset, mode), average_reports(reps));
    }
  }
  write_report_table(os, rows);

  os << "\nper-seed mean F1\n";
  os << std::fixed << std::setprecision(1);
  for (const auto& p : report.pretrained) {
    os << "pretrained-cnn seed " << p.seed << ' ';
    if (p.failed) os << "FAILED " << p.error << '\n';
    else os << p.report.mean_f1 << " (iteration " << p.selected_iteration << ")\n";
  }
  for (const auto& c : report.cells) {
    os << cell_name(c.subset, c.mode) << " seed " << c.seed << ' ';
    if (c.failed) os << "FAILED " << c.error << '\n';
    else os << c.report.mean_f1 << " (n=" << c.train_size << ", iteration " << c.selected_iteration << ")\n";
  }
  os.unsetf(std::ios::floatfield);
}

void write_per_class_csv(std::ostream& os, const ExperimentReport& report) {
  os << "run,seed,class,precision,recall,f1\n";
  os << std::fixed << std::setprecision(4);
  auto rows = [&](const std::string& run, const std::string& seed, const EvalReport& r) {
    for (const auto& c : r.classes) {
      os << run << ',' << seed << ',' << c.name << ',' << c.precision << ',' << c.recall << ',' << c.f1 << '\n';
    }
  };
  rows("rule-based", "-", report.rule_based);
  for (const auto& p : report.pretrained) {
    if (!p.failed) rows("pretrained-cnn", std::to_string(p.seed), p.report);
  }
  for (const auto& c : report.cells) {
    if (!c.failed) rows(cell_name(c.subset, c.mode), std::to_string(c.seed), c.report);
  }
  os.unsetf(std::ios::floatfield);
}

void write_mean_series_csv(std::ostream& os, const ExperimentConfig& cfg, const ExperimentReport& report) {
  os << "subset,mode,mean_f1\n";
  os << std::fixed << std::setprecision(4);
  for (const auto& subset : cfg.subsets) {
    for (FinetuneMode mode : cfg.modes) {
      os << subset_name(subset) << ',' << mode_name(mode) << ',' << report.mean_over_seeds(subset, mode) << '\n';
    }
  }
  os.unsetf(std::ios::floatfield);
}

}  // namespace lidarseg
