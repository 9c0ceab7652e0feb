#include "lidarseg/evaluation.hpp"

#include <algorithm>
#include <iomanip>
#include <ostream>
#include <stdexcept>

namespace lidarseg {

ConfusionMatrix confusion(std::span<const int> preds, std::span<const int> truths, int classes,
                          std::vector<std::string> class_names) {
  if (preds.size() != truths.size()) throw std::invalid_argument("confusion: length mismatch");
  if (classes < 1) throw std::invalid_argument("confusion: need at least one class");
  if (class_names.empty()) {
    for (int i = 0; i < classes; ++i) class_names.push_back("class" + std::to_string(i));
  }
  if (static_cast<int>(class_names.size()) != classes) {
    throw std::invalid_argument("confusion: class name count mismatch");
  }
  ConfusionMatrix cm{CountMatrix::Zero(classes, classes), std::move(class_names)};
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const int t = truths[i];
    const int p = preds[i];
    if (t < 0 || t >= classes || p < 0 || p >= classes) throw std::invalid_argument("confusion: class id out of range");
    ++cm.counts(t, p);
  }
  return cm;
}

EvalReport f1_scores(const ConfusionMatrix& cm) {
  EvalReport r;
  r.confusion = cm;
  r.sample_count = cm.total();
  const int k = cm.classes();
  double sum = 0.0;
  for (int c = 0; c < k; ++c) {
    const auto tp = static_cast<double>(cm.counts(c, c));
    const auto col = static_cast<double>(cm.counts.col(c).sum());
    const auto row = static_cast<double>(cm.counts.row(c).sum());
    const double precision = col > 0 ? tp / col : 0.0;
    const double recall = row > 0 ? tp / row : 0.0;
    const double f1 = precision + recall > 0 ? 2.0 * recall * precision / (recall + precision) * 100.0 : 0.0;
    const auto idx = static_cast<std::size_t>(c);
    std::string name = idx < cm.class_names.size() ? cm.class_names[idx] : std::to_string(c);
    r.classes.push_back({std::move(name), precision * 100.0, recall * 100.0, f1});
    sum += f1;
  }
  r.mean_f1 = k > 0 ? sum / k : 0.0;
  return r;
}

RuleLabel merge_to_rule_class(FineLabel truth) {
  switch (truth) {
    case FineLabel::People: return RuleLabel::People;
    case FineLabel::Car: return RuleLabel::Car;
    case FineLabel::Trunk: return RuleLabel::Trunk;
    case FineLabel::Building: return RuleLabel::Building;
    case FineLabel::Bush:
    case FineLabel::Cyclist:
    case FineLabel::Unknown: return RuleLabel::Unknown;
  }
  throw std::invalid_argument("merge_to_rule_class: invalid label");
}

std::vector<int> merge_to_rule_classes(std::span<const int> fine_truths) {
  std::vector<int> out;
  out.reserve(fine_truths.size());
  for (int t : fine_truths) {
    if (t < 0 || t >= kNumFineLabels) throw std::invalid_argument("merge_to_rule_classes: invalid label");
    out.push_back(static_cast<int>(merge_to_rule_class(static_cast<FineLabel>(t))));
  }
  return out;
}

int rule_to_fine(RuleLabel label) {
  return *parse_label(LabelSet::Fine, label_name(label));
}

void write_report_table(std::ostream& os, const std::vector<std::pair<std::string, EvalReport>>& rows) {
  if (rows.empty()) return;
  std::size_t name_w = 10;
  for (const auto& [name, rep] : rows) name_w = std::max(name_w, name.size());
  const auto& header = rows.front().second.classes;

  os << std::left << std::setw(static_cast<int>(name_w)) << "classifier";
  for (const auto& c : header) os << ' ' << std::right << std::setw(9) << c.name;
  os << ' ' << std::setw(10) << "mean" << '\n';
  for (const auto& [name, rep] : rows) {
    os << std::left << std::setw(static_cast<int>(name_w)) << name << std::right << std::fixed << std::setprecision(1);
    for (const auto& c : rep.classes) os << ' ' << std::setw(9) << c.f1;
    os << ' ' << std::setw(10) << rep.mean_f1 << '\n';
  }
  os.unsetf(std::ios::floatfield);
}

void write_report_structured(std::ostream& os, const EvalReport& report) {
  os << std::fixed << std::setprecision(6);
  for (const auto& c : report.classes) {
    os << c.name << ' ' << c.precision << ' ' << c.recall << ' ' << c.f1 << '\n';
  }
  os << "mean " << report.mean_f1 << '\n';
  os << "samples " << report.sample_count << '\n';
  os.unsetf(std::ios::floatfield);
}

void write_confusion_csv(std::ostream& os, const ConfusionMatrix& cm) {
  os << "truth\\pred";
  for (const auto& n : cm.class_names) os << ',' << n;
  os << '\n';
  for (int r = 0; r < cm.classes(); ++r) {
    os << cm.class_names[static_cast<std::size_t>(r)];
    for (int c = 0; c < cm.classes(); ++c) os << ',' << cm.counts(r, c);
    os << '\n';
  }
}

}  // namespace lidarseg
