#pragma once

#include <array>
#include <iosfwd>
#include <optional>
#include <string_view>
#include <vector>

#include "lidarseg/geometry.hpp"
#include "lidarseg/segmentation.hpp"

namespace lidarseg {

/// The five classes the rule classifier and the pretrained net can emit.
enum class RuleLabel : int { People = 0, Car, Trunk, Building, Unknown };

/// The seven manually annotated classes.
enum class FineLabel : int { People = 0, Car, Trunk, Bush, Building, Cyclist, Unknown };

inline constexpr int kNumRuleLabels = 5;
inline constexpr int kNumFineLabels = 7;

enum class LabelSet { Rule, Fine };

int label_count(LabelSet set);
std::string_view label_name(RuleLabel label);
std::string_view label_name(FineLabel label);
std::string_view label_name(LabelSet set, int id);
std::optional<int> parse_label(LabelSet set, std::string_view name);
std::vector<std::string> label_names(LabelSet set);

struct SegmentFeatures {
  double width_m = 0.0;
  double height_m = 0.0;
};

class CorruptSegmentError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Height is the z extent of the segment's points; width is the largest
/// horizontal distance between any two of them.
SegmentFeatures compute_features(const Segment& seg, const PointCloud& cloud, const RangeImage& img);

/// Largest pairwise xy distance, via convex hull.
double max_horizontal_extent(std::vector<Eigen::Vector2d> pts);

/// Hand-written width/height rules. Intervals are closed and the first
/// matching branch wins.
RuleLabel classify_rules(const SegmentFeatures& f);

struct SegmentLabel {
  int segment_id = 0;
  RuleLabel label = RuleLabel::Unknown;
};

std::vector<SegmentLabel> autolabel_frame(const RangeImage& img, const PointCloud& cloud,
                                          const std::vector<Segment>& segs);

/// One "frame_id segment_id label_name" line per labeled segment. The same
/// format carries auto labels and manual (fine) labels.
struct LabelRecord {
  std::int64_t frame_id = 0;
  int segment_id = 0;
  int label = 0;
};

void write_label_records(std::ostream& os, LabelSet set, const std::vector<LabelRecord>& records);
std::vector<LabelRecord> read_label_records(std::istream& is, LabelSet set);

}  // namespace lidarseg
