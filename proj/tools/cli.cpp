#include "cli.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <map>
#include <ostream>

#include "lidarseg/config.hpp"
#include "lidarseg/experiment.hpp"

namespace lidarseg::cli {

namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config;
  std::string out;
  std::uint64_t seed = 1;
  bool seed_given = false;
  int jobs = 1;
  bool verbose = false;
};

ExperimentConfig load_config(const std::string& path) {
  if (path.empty()) {
    ExperimentConfig cfg;
    cfg.validate();
    return cfg;
  }
  return experiment_config_from(Config::load(path));
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write " + path.string());
  return os;
}

std::vector<PointCloud> load_corpus_split(const std::string& corpus, const std::string& split) {
  if (split != "train" && split != "test") throw ConfigError("--split must be train or test");
  const fs::path dir = fs::path(corpus) / split;
  if (!fs::exists(dir)) throw DataError("no " + split + " split under " + corpus);
  return load_split(dir);
}

nn::Checkpoint read_checkpoint(const std::string& path) {
  try {
    return nn::load_checkpoint(path);
  } catch (const FormatError& e) {
    throw DataError(e.what());
  }
}

void check_input_size(const ExperimentConfig& cfg, const nn::NetworkConfig& net) {
  if (net.input_size != cfg.pipeline.crop.out_size) {
    throw ConfigError("checkpoint input size " + std::to_string(net.input_size) + " does not match crop.out_size " +
                      std::to_string(cfg.pipeline.crop.out_size));
  }
}

void persist(const fs::path& out_dir, const RunRecord& record, const std::string& snapshot) {
  fs::create_directories(out_dir);
  RunRecord rel = record;
  for (auto& c : rel.checkpoints) {
    if (!c.path.empty()) c.path = fs::path(c.path).lexically_relative(out_dir).generic_string();
  }
  auto os = open_out(out_dir / "record.txt");
  write_run_record(os, rel);
  nn::save_checkpoint(out_dir / snapshot, record.selected_state);
}

/// Rule labels keyed by (frame_id, segment_id), as written by autolabel.
std::vector<int> labels_from_file(const std::string& path, const std::vector<Sample>& samples) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open label file " + path);
  std::map<std::pair<std::int64_t, int>, int> by_key;
  try {
    for (const auto& r : read_label_records(is, LabelSet::Rule)) by_key[{r.frame_id, r.segment_id}] = r.label;
  } catch (const FormatError& e) {
    throw DataError(e.what());
  }
  std::vector<int> out;
  for (const Sample& s : samples) {
    const auto it = by_key.find({s.frame_id, s.segment_id});
    if (it == by_key.end()) {
      throw DataError("label file has no entry for frame " + std::to_string(s.frame_id) + " segment " +
                      std::to_string(s.segment_id));
    }
    out.push_back(it->second);
  }
  return out;
}

int cmd_synth(const Common& c, std::ostream& out) {
  ExperimentConfig cfg = load_config(c.config);
  if (c.seed_given) cfg.corpus.seed = c.seed;
  write_corpus(c.out, cfg);
  out << "wrote " << cfg.train_frames << " train and " << cfg.test_frames << " test frames to " << c.out << '\n';
  return kOk;
}

int cmd_autolabel(const Common& c, const std::string& corpus, const std::string& split, std::ostream& out) {
  const ExperimentConfig cfg = load_config(c.config);
  const auto clouds = load_corpus_split(corpus, split);
  std::vector<LabelRecord> records;
  std::vector<std::size_t> counts(kNumRuleLabels, 0);
  for (const PointCloud& cloud : clouds) {
    const FrameData fd = process_frame(cloud, cfg.pipeline);
    for (std::size_t i = 0; i < fd.segments.size(); ++i) {
      records.push_back({fd.frame_id, fd.segments[i].id, fd.rule_labels[i]});
      ++counts[static_cast<std::size_t>(fd.rule_labels[i])];
    }
  }
  {
    auto os = open_out(c.out);
    write_label_records(os, LabelSet::Rule, records);
  }
  for (int l = 0; l < kNumRuleLabels; ++l) {
    out << label_name(LabelSet::Rule, l) << ' ' << counts[static_cast<std::size_t>(l)] << '\n';
  }
  out << "total " << records.size() << '\n';
  return kOk;
}

int cmd_pretrain(const Common& c, const std::string& corpus, const std::string& labels, bool save_all,
                 std::ostream& out, std::ostream& err) {
  const ExperimentConfig cfg = load_config(c.config);
  SampleTable table = build_sample_table(load_corpus_split(corpus, "train"), cfg.pipeline);
  std::vector<int> auto_labels = labels.empty() ? table.rule_labels : labels_from_file(labels, table.samples);
  const LabeledSet data(std::move(table.samples), std::move(auto_labels), LabelSet::Rule);
  std::optional<fs::path> ckpt_dir;
  if (save_all) ckpt_dir = fs::path(c.out) / "checkpoints";
  if (c.verbose) err << "pretraining on " << data.size() << " auto-labeled samples\n";
  const PretrainResult res = pretrain(data, cfg.network, cfg.pretrain_schedule, c.seed, ckpt_dir);
  if (res.record.aborted) throw nn::NumericError(res.record.abort_reason);
  persist(c.out, res.record, "theta_r.lckp");
  out << "selected iteration " << res.record.selected_entry().iteration << " holdout mean F1 "
      << res.record.selected_report.mean_f1 << '\n';
  return kOk;
}

int cmd_finetune(const Common& c, const std::string& corpus, const std::string& init, const std::string& subset,
                 bool frozen, bool save_all, std::ostream& out, std::ostream& err) {
  const ExperimentConfig cfg = load_config(c.config);
  if (frozen && init.empty()) throw ConfigError("--frozen needs --init");
  const CorpusSamples train = corpus_samples(load_corpus_split(corpus, "train"), cfg.pipeline);
  const CorpusSamples test = corpus_samples(load_corpus_split(corpus, "test"), cfg.pipeline);

  LabeledSet source = train.manual;
  LabeledSet validation;
  if (cfg.selection == SelectionMode::Validation) {
    std::tie(source, validation) = holdout_split(train.manual, kPretrainHoldout, c.seed);
  }
  LabeledSet data = source;
  if (subset != "all") {
    std::size_t n = 0;
    try {
      n = std::stoul(subset);
    } catch (const std::exception&) {
      throw ConfigError("--subset must be a positive count or 'all'");
    }
    if (n < 1) throw ConfigError("--subset must be a positive count or 'all'");
    data = subset_per_class(source, n, c.seed);
  }
  const LabeledSet* selection = cfg.selection == SelectionMode::TestSet ? &test.manual : &validation;
  if (selection->empty()) selection = nullptr;

  std::optional<fs::path> ckpt_dir;
  if (save_all) ckpt_dir = fs::path(c.out) / "checkpoints";
  if (c.verbose) err << "fine-tuning on " << data.size() << " manual samples\n";
  RunRecord record;
  if (init.empty()) {
    record = train_from_scratch(cfg.network, data, cfg.schedule, c.seed, selection, ckpt_dir);
  } else {
    const nn::Checkpoint theta = read_checkpoint(init);
    check_input_size(cfg, theta.params.config);
    record = finetune(theta.params, data, cfg.schedule, frozen, c.seed, selection, ckpt_dir);
  }
  if (record.aborted) throw nn::NumericError(record.abort_reason);
  persist(c.out, record, "selected.lckp");
  const EvalReport report = evaluate_params(record.selected_params(), test.manual);
  auto os = open_out(fs::path(c.out) / "test_eval.txt");
  write_report_structured(os, report);
  out << "selected iteration " << record.selected_entry().iteration << " test mean F1 " << report.mean_f1 << '\n';
  return kOk;
}

int cmd_eval(const Common& c, const std::string& corpus, const std::string& checkpoint, bool rules,
             const std::string& split, std::ostream& out) {
  if (rules == !checkpoint.empty()) throw ConfigError("eval needs exactly one of --checkpoint or --rules");
  const ExperimentConfig cfg = load_config(c.config);
  const CorpusSamples data = corpus_samples(load_corpus_split(corpus, split), cfg.pipeline);
  EvalReport report;
  std::string name;
  if (rules) {
    report = evaluate(data.auto_labeled.labels(), data.merged_truth.labels(), LabelSet::Rule);
    name = "rule-based";
  } else {
    const nn::Checkpoint ckpt = read_checkpoint(checkpoint);
    check_input_size(cfg, ckpt.params.config);
    const int k = ckpt.params.config.n_classes;
    if (k == kNumRuleLabels) {
      report = evaluate_params(ckpt.params, data.merged_truth);
    } else if (k == kNumFineLabels) {
      report = evaluate_params(ckpt.params, data.manual);
    } else {
      throw DataError("checkpoint has " + std::to_string(k) + " classes; expected 5 or 7");
    }
    name = fs::path(checkpoint).stem().string();
  }
  write_report_table(out, {{name, report}});
  if (!c.out.empty()) {
    fs::create_directories(c.out);
    auto rep = open_out(fs::path(c.out) / "eval.txt");
    write_report_structured(rep, report);
    auto cm = open_out(fs::path(c.out) / "confusion.csv");
    write_confusion_csv(cm, report.confusion);
  }
  return kOk;
}

int cmd_experiment(const Common& c, std::ostream& out, std::ostream& err) {
  ExperimentConfig cfg = load_config(c.config);
  if (c.seed_given) cfg.seeds = {c.seed};
  if (c.jobs < 1) throw ConfigError("--jobs must be >= 1");
  ExperimentOptions opts;
  opts.jobs = c.jobs;
  opts.log = c.verbose ? &err : nullptr;
  const ExperimentReport report = run_experiment(cfg, c.out, opts);
  write_experiment_tables(out, cfg, report);
  if (report.any_failed()) {
    err << "some runs failed; see report.txt\n";
    return kFailedRuns;
  }
  return kOk;
}

void add_common(CLI::App* sub, Common& c, bool out_required) {
  sub->add_option("--config", c.config, "Config file (section.key = value)")->check(CLI::ExistingFile);
  auto* out = sub->add_option("--out", c.out, "Output path");
  if (out_required) out->required();
  sub->add_option("--seed", c.seed, "Random seed");
  sub->add_option("--jobs", c.jobs, "Parallel runs");
  sub->add_flag("--verbose,-v", c.verbose, "Progress on stderr");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"LiDAR segment classification with rule-based pretraining"};
  app.name(args.empty() ? "lidarseg" : fs::path(args[0]).filename().string());
  app.require_subcommand(1);

  Common c;
  std::string corpus, label_split = "train", eval_split = "test", labels, init, subset = "all", checkpoint;
  bool frozen = false, rules = false, save_all = false;

  auto* synth = app.add_subcommand("synth", "Generate train/test corpora");
  add_common(synth, c, true);

  auto* autolabel = app.add_subcommand("autolabel", "Segment and rule-label a corpus split");
  add_common(autolabel, c, true);
  autolabel->add_option("--corpus", corpus, "Corpus directory")->required();
  autolabel->add_option("--split", label_split, "train or test")->capture_default_str();

  auto* pre = app.add_subcommand("pretrain", "Pretrain on rule labels");
  add_common(pre, c, true);
  pre->add_option("--corpus", corpus, "Corpus directory")->required();
  pre->add_option("--labels", labels, "Label file from autolabel (default: recompute)");
  pre->add_flag("--save-checkpoints", save_all, "Keep every checkpoint");

  auto* fine = app.add_subcommand("finetune", "Train on manual labels, from --init or from scratch");
  add_common(fine, c, true);
  fine->add_option("--corpus", corpus, "Corpus directory")->required();
  fine->add_option("--init", init, "Pretrained checkpoint (omit for random init)");
  fine->add_option("--subset", subset, "Samples per class, or 'all'");
  fine->add_flag("--frozen", frozen, "Keep the conv layers fixed");
  fine->add_flag("--save-checkpoints", save_all, "Keep every checkpoint");

  auto* ev = app.add_subcommand("eval", "Score a checkpoint or the rule classifier");
  add_common(ev, c, false);
  ev->add_option("--corpus", corpus, "Corpus directory")->required();
  ev->add_option("--checkpoint", checkpoint, "Checkpoint to score");
  ev->add_flag("--rules", rules, "Score the rule classifier");
  ev->add_option("--split", eval_split, "train or test")->capture_default_str();

  auto* exp = app.add_subcommand("experiment", "Run the full rule/pretrain/fine-tune protocol");
  add_common(exp, c, true);

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kConfigError;
  }
  for (auto* sub : app.get_subcommands()) {
    if (sub->count("--seed")) c.seed_given = true;
  }

  try {
    if (synth->parsed()) return cmd_synth(c, out);
    if (autolabel->parsed()) return cmd_autolabel(c, corpus, label_split, out);
    if (pre->parsed()) return cmd_pretrain(c, corpus, labels, save_all, out, err);
    if (fine->parsed()) return cmd_finetune(c, corpus, init, subset, frozen, save_all, out, err);
    if (ev->parsed()) return cmd_eval(c, corpus, checkpoint, rules, eval_split, out);
    if (exp->parsed()) return cmd_experiment(c, out, err);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const nn::NumericError& e) {
    err << "numeric abort: " << e.what() << '\n';
    return kNumericAbort;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kDataError;
  }
  return kConfigError;
}

}  // namespace lidarseg::cli
