#include "lidarseg/rules.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

namespace lidarseg {

namespace {

constexpr std::array<std::string_view, kNumRuleLabels> kRuleNames = {
    "people", "car", "trunk", "building", "unknown"};
constexpr std::array<std::string_view, kNumFineLabels> kFineNames = {
    "people", "car", "trunk", "bush", "building", "cyclist", "unknown"};

bool within(double v, double lo, double hi) { return v >= lo && v <= hi; }

double cross(const Eigen::Vector2d& o, const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
  return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
}

}  // namespace

int label_count(LabelSet set) { return set == LabelSet::Rule ? kNumRuleLabels : kNumFineLabels; }

std::string_view label_name(RuleLabel label) { return kRuleNames.at(static_cast<int>(label)); }
std::string_view label_name(FineLabel label) { return kFineNames.at(static_cast<int>(label)); }

std::string_view label_name(LabelSet set, int id) {
  return set == LabelSet::Rule ? kRuleNames.at(id) : kFineNames.at(id);
}

std::optional<int> parse_label(LabelSet set, std::string_view name) {
  const int n = label_count(set);
  for (int i = 0; i < n; ++i) {
    if (label_name(set, i) == name) return i;
  }
  return std::nullopt;
}

std::vector<std::string> label_names(LabelSet set) {
  std::vector<std::string> out;
  for (int i = 0; i < label_count(set); ++i) out.emplace_back(label_name(set, i));
  return out;
}

double max_horizontal_extent(std::vector<Eigen::Vector2d> pts) {
  if (pts.size() < 2) return 0.0;
  std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) {
    return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
  });
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 2) return 0.0;

  // Andrew's monotone chain.
  std::vector<Eigen::Vector2d> hull(2 * pts.size());
  std::size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, lower = k + 1; i-- > 0;) {
    while (k >= lower && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  if (hull.size() < 2) hull = {pts.front(), pts.back()};

  double best = 0.0;
  for (std::size_t i = 0; i < hull.size(); ++i) {
    for (std::size_t j = i + 1; j < hull.size(); ++j) {
      best = std::max(best, (hull[i] - hull[j]).squaredNorm());
    }
  }
  return std::sqrt(best);
}

SegmentFeatures compute_features(const Segment& seg, const PointCloud& cloud, const RangeImage& img) {
  std::vector<Eigen::Vector2d> xy;
  xy.reserve(seg.cells.size());
  double zmin = std::numeric_limits<double>::infinity();
  double zmax = -std::numeric_limits<double>::infinity();
  for (const Cell& c : seg.cells) {
    const std::int32_t idx = img.point_index(c.row, c.col);
    if (idx < 0 || static_cast<std::size_t>(idx) >= cloud.size()) continue;
    const Eigen::Vector3d p = cloud.points[static_cast<std::size_t>(idx)].position.cast<double>();
    xy.emplace_back(p.x(), p.y());
    zmin = std::min(zmin, p.z());
    zmax = std::max(zmax, p.z());
  }
  if (xy.empty()) {
    throw CorruptSegmentError("segment " + std::to_string(seg.id) + " maps to no points");
  }
  return {max_horizontal_extent(std::move(xy)), zmax - zmin};
}

RuleLabel classify_rules(const SegmentFeatures& f) {
  const double w = f.width_m;
  const double z = f.height_m;
  if (within(w, 0.0, 2.5) && z > 2.0) return RuleLabel::Trunk;
  if (within(w, 0.0, 1.5) && w > 0.2) return RuleLabel::People;
  if (within(w, 1.5, 2.5) && z < 2.0) return RuleLabel::Car;
  if (within(w, 8.0, 15.0)) return RuleLabel::Building;
  return RuleLabel::Unknown;
}

std::vector<SegmentLabel> autolabel_frame(const RangeImage& img, const PointCloud& cloud,
                                          const std::vector<Segment>& segs) {
  std::vector<SegmentLabel> out;
  out.reserve(segs.size());
  for (const Segment& s : segs) {
    out.push_back({s.id, classify_rules(compute_features(s, cloud, img))});
  }
  return out;
}

void write_label_records(std::ostream& os, LabelSet set, const std::vector<LabelRecord>& records) {
  for (const auto& r : records) {
    os << r.frame_id << ' ' << r.segment_id << ' ' << label_name(set, r.label) << '\n';
  }
}

std::vector<LabelRecord> read_label_records(std::istream& is, LabelSet set) {
  std::vector<LabelRecord> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line.front() == '#') continue;
    std::istringstream ls(line);
    LabelRecord r;
    std::string name;
    if (!(ls >> r.frame_id >> r.segment_id >> name)) {
      throw FormatError("label file line " + std::to_string(lineno) + ": malformed");
    }
    const auto id = parse_label(set, name);
    if (!id) throw FormatError("label file line " + std::to_string(lineno) + ": unknown label " + name);
    r.label = *id;
    out.push_back(r);
  }
  return out;
}

}  // namespace lidarseg
