#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "lidarseg/rules.hpp"

namespace lidarseg {

using CountMatrix = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Rows are ground truth, columns are predictions.
struct ConfusionMatrix {
  CountMatrix counts;
  std::vector<std::string> class_names;

  int classes() const { return static_cast<int>(counts.rows()); }
  std::int64_t total() const { return counts.sum(); }
};

struct ClassScore {
  std::string name;
  double precision = 0.0;  // x100
  double recall = 0.0;     // x100
  double f1 = 0.0;         // x100
};

struct EvalReport {
  std::vector<ClassScore> classes;
  double mean_f1 = 0.0;
  ConfusionMatrix confusion;
  std::int64_t sample_count = 0;
};

ConfusionMatrix confusion(std::span<const int> preds, std::span<const int> truths, int classes,
                          std::vector<std::string> class_names = {});

/// F1 = 2 * recall * precision / (recall + precision) * 100 per class, with
/// 0/0 taken as 0; the mean runs over every class, present or not.
EvalReport f1_scores(const ConfusionMatrix& cm);

inline EvalReport evaluate(std::span<const int> preds, std::span<const int> truths, LabelSet set) {
  return f1_scores(confusion(preds, truths, label_count(set), label_names(set)));
}

/// Fine ground truth mapped onto the rule label set: bush and cyclist become
/// unknown.
RuleLabel merge_to_rule_class(FineLabel truth);
std::vector<int> merge_to_rule_classes(std::span<const int> fine_truths);

/// Rule/pretrained predictions mapped onto the fine label set by name.
int rule_to_fine(RuleLabel label);

/// Table row: name, per-class F1 and mean, aligned.
void write_report_table(std::ostream& os, const std::vector<std::pair<std::string, EvalReport>>& rows);
/// "class precision recall f1" per line, then "mean f1".
void write_report_structured(std::ostream& os, const EvalReport& report);
void write_confusion_csv(std::ostream& os, const ConfusionMatrix& cm);

}  // namespace lidarseg
