#include <doctest.h>

#include <random>
#include <sstream>

#include "lidarseg/evaluation.hpp"

using namespace lidarseg;

namespace {

/// Expands a count matrix into (pred, truth) pairs.
void expand(const std::vector<std::vector<int>>& cm, std::vector<int>& preds, std::vector<int>& truths) {
  for (std::size_t t = 0; t < cm.size(); ++t) {
    for (std::size_t p = 0; p < cm[t].size(); ++p) {
      for (int i = 0; i < cm[t][p]; ++i) {
        preds.push_back(static_cast<int>(p));
        truths.push_back(static_cast<int>(t));
      }
    }
  }
}

}  // namespace

TEST_CASE("two-class example F1") {
  std::vector<int> preds, truths;
  expand({{8, 2}, {4, 6}}, preds, truths);
  const EvalReport r = f1_scores(confusion(preds, truths, 2));
  const double p = 8.0 / 12.0, rc = 8.0 / 10.0;
  CHECK(r.classes[0].f1 == doctest::Approx(2 * p * rc / (p + rc) * 100));
  CHECK(r.classes[0].f1 == doctest::Approx(72.73).epsilon(1e-4));
  CHECK(r.classes[0].precision == doctest::Approx(66.6667).epsilon(1e-5));
  CHECK(r.classes[0].recall == doctest::Approx(80.0));
  CHECK(r.sample_count == 20);
}

TEST_CASE("precision and recall of one half give F1 of exactly 50") {
  std::vector<int> preds, truths;
  expand({{1, 1}, {1, 1}}, preds, truths);
  const EvalReport r = f1_scores(confusion(preds, truths, 2));
  CHECK(r.classes[0].f1 == 50.0);
  CHECK(r.mean_f1 == 50.0);
}

TEST_CASE("absent classes score zero and still count in the mean") {
  const std::vector<int> preds = {0, 0, 1};
  const std::vector<int> truths = {0, 0, 1};
  const EvalReport r = f1_scores(confusion(preds, truths, 3));
  CHECK(r.classes[2].f1 == 0.0);
  CHECK(r.classes[2].precision == 0.0);
  CHECK(r.mean_f1 == doctest::Approx(200.0 / 3.0));
}

TEST_CASE("mean equals the average of per-class scores") {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> c(0, 6);
  std::vector<int> preds, truths;
  for (int i = 0; i < 500; ++i) {
    preds.push_back(c(rng));
    truths.push_back(c(rng));
  }
  const EvalReport r = evaluate(preds, truths, LabelSet::Fine);
  double s = 0.0;
  for (const auto& k : r.classes) s += k.f1;
  CHECK(r.mean_f1 == doctest::Approx(s / 7));
  CHECK(r.classes[3].name == "bush");
}

TEST_CASE("confusion totals are conserved") {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> c(0, 4);
  std::vector<int> preds, truths;
  for (int i = 0; i < 10000; ++i) {
    preds.push_back(c(rng));
    truths.push_back(c(rng));
  }
  const ConfusionMatrix cm = confusion(preds, truths, 5);
  CHECK(cm.total() == 10000);
  for (int k = 0; k < 5; ++k) {
    CHECK(cm.counts.row(k).sum() == std::count(truths.begin(), truths.end(), k));
    CHECK(cm.counts.col(k).sum() == std::count(preds.begin(), preds.end(), k));
  }
}

TEST_CASE("confusion rejects bad input") {
  const std::vector<int> a = {0, 1};
  const std::vector<int> b = {0};
  const std::vector<int> out = {0, 5};
  CHECK_THROWS_AS(confusion(a, b, 2), std::invalid_argument);
  CHECK_THROWS_AS(confusion(out, a, 2), std::invalid_argument);
}

TEST_CASE("bush and cyclist merge into unknown") {
  const std::vector<int> fine = {static_cast<int>(FineLabel::Bush), static_cast<int>(FineLabel::Cyclist),
                                 static_cast<int>(FineLabel::People), static_cast<int>(FineLabel::Building)};
  const auto merged = merge_to_rule_classes(fine);
  CHECK(merged == std::vector<int>{static_cast<int>(RuleLabel::Unknown), static_cast<int>(RuleLabel::Unknown),
                                   static_cast<int>(RuleLabel::People), static_cast<int>(RuleLabel::Building)});
  for (int r = 0; r < kNumRuleLabels; ++r) {
    CHECK(label_name(LabelSet::Fine, rule_to_fine(static_cast<RuleLabel>(r))) == label_name(LabelSet::Rule, r));
  }
}

TEST_CASE("report writers") {
  std::vector<int> preds, truths;
  expand({{8, 2}, {4, 6}}, preds, truths);
  const EvalReport r = f1_scores(confusion(preds, truths, 2, {"a", "b"}));
  std::ostringstream csv;
  write_confusion_csv(csv, r.confusion);
  CHECK(csv.str() == "truth\\pred,a,b\na,8,2\nb,4,6\n");
  std::ostringstream table;
  write_report_table(table, {{"x", r}});
  CHECK(table.str().find("72.7") != std::string::npos);
  std::ostringstream structured;
  write_report_structured(structured, r);
  CHECK(structured.str().rfind("a 66.666667 80.000000 72.727273\n", 0) == 0);
}

TEST_CASE("unnamed classes are reported by index") {
  ConfusionMatrix cm;
  cm.counts = CountMatrix::Ones(2, 2);
  const EvalReport r = f1_scores(cm);
  REQUIRE(r.classes.size() == 2);
  CHECK(r.classes[1].name == "1");
  CHECK(r.classes[0].f1 == 50.0);
}
