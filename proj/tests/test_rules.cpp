#include <doctest.h>

#include <random>
#include <sstream>

#include "lidarseg/rules.hpp"
#include "lidarseg/segmentation.hpp"
#include "lidarseg/synthetic.hpp"
#include "oracles.hpp"

using namespace lidarseg;

namespace {

RuleLabel rule(double w, double z) { return classify_rules({w, z}); }

/// One-row image whose cells point at the given cloud points in order.
struct Fixture {
  PointCloud cloud;
  RangeImage img;
  Segment seg;
};

Fixture fixture(const std::vector<Eigen::Vector3f>& pts) {
  Fixture f;
  f.img = RangeImage(1, static_cast<int>(pts.size()) + 1);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    LidarPoint p;
    p.position = pts[i];
    f.cloud.points.push_back(p);
    f.img.range(0, static_cast<int>(i)) = 1.0;
    f.img.point_index(0, static_cast<int>(i)) = static_cast<int>(i);
    f.seg.cells.push_back({0, static_cast<int>(i)});
  }
  return f;
}

}  // namespace

TEST_CASE("rule examples") {
  CHECK(rule(1.0, 1.7) == RuleLabel::People);
  CHECK(rule(2.0, 2.5) == RuleLabel::Trunk);
  CHECK(rule(2.0, 1.5) == RuleLabel::Car);
  CHECK(rule(10.0, 5.0) == RuleLabel::Building);
  CHECK(rule(0.1, 1.0) == RuleLabel::Unknown);
  CHECK(rule(5.0, 3.0) == RuleLabel::Unknown);
}

TEST_CASE("rule boundaries are closed and earlier branches win") {
  CHECK(rule(0.0, 2.01) == RuleLabel::Trunk);
  CHECK(rule(2.5, 2.01) == RuleLabel::Trunk);
  CHECK(rule(0.2, 1.0) == RuleLabel::Unknown);
  CHECK(rule(1.5, 1.0) == RuleLabel::People);
  CHECK(rule(2.5, 1.99) == RuleLabel::Car);
  CHECK(rule(2.0, 2.0) == RuleLabel::Unknown);
  CHECK(rule(8.0, 9.0) == RuleLabel::Building);
  CHECK(rule(15.0, 0.0) == RuleLabel::Building);
  CHECK(rule(15.01, 3.0) == RuleLabel::Unknown);
}

TEST_CASE("rules match the nested truth table on the full grid") {
  int mismatches = 0;
  for (int wi = 0; wi <= 160; ++wi) {
    for (int zi = 0; zi <= 60; ++zi) {
      const double w = wi / 10.0;
      const double z = zi / 10.0;
      if (rule(w, z) != oracle::rules_nested(w, z)) ++mismatches;
    }
  }
  CHECK(mismatches == 0);
}

TEST_CASE("raising height across 2 m never yields people or car for slim segments") {
  for (int wi = 0; wi <= 25; ++wi) {
    for (int zi = 21; zi <= 60; ++zi) {
      const RuleLabel l = rule(wi / 10.0, zi / 10.0);
      CHECK(l != RuleLabel::People);
      CHECK(l != RuleLabel::Car);
    }
  }
}

TEST_CASE("features from the three-point example") {
  Fixture f = fixture({{0, 0, 0}, {1, 0, 0}, {0, 0, 2.4f}});
  const SegmentFeatures feat = compute_features(f.seg, f.cloud, f.img);
  CHECK(feat.width_m == doctest::Approx(1.0));
  CHECK(feat.height_m == doctest::Approx(2.4));
}

TEST_CASE("single point has zero width and height") {
  Fixture f = fixture({{3, 4, 5}});
  const SegmentFeatures feat = compute_features(f.seg, f.cloud, f.img);
  CHECK(feat.width_m == 0.0);
  CHECK(feat.height_m == 0.0);
}

TEST_CASE("segment without mapped points is an error") {
  Fixture f = fixture({{1, 1, 1}});
  f.img.point_index(0, 0) = kNoPoint;
  CHECK_THROWS_AS(compute_features(f.seg, f.cloud, f.img), CorruptSegmentError);
}

TEST_CASE("width matches brute-force pairwise distance and ignores point order") {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> n(0.0, 3.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Eigen::Vector2d> pts(static_cast<std::size_t>(1 + trial % 60));
    for (auto& p : pts) p = {n(rng), n(rng)};
    if (trial % 10 == 0) {
      for (auto& p : pts) p.y() = 2.0 * p.x();  // collinear
    }
    const double expect = oracle::max_pairwise_xy(pts);
    CHECK(max_horizontal_extent(pts) == doctest::Approx(expect).epsilon(1e-12));
    std::shuffle(pts.begin(), pts.end(), rng);
    CHECK(max_horizontal_extent(pts) == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("autolabel keeps segment order and ids") {
  CHECK(autolabel_frame(RangeImage(2, 4), PointCloud{}, {}).empty());
  Fixture f = fixture({{0, 0, 0}, {1, 0, 0}, {0, 0, 1.5f}});
  Segment second = f.seg;
  second.id = 9;
  const auto labels = autolabel_frame(f.img, f.cloud, {f.seg, second});
  REQUIRE(labels.size() == 2);
  CHECK(labels[0].segment_id == 0);
  CHECK(labels[1].segment_id == 9);
  CHECK(labels[0].label == RuleLabel::People);
}

TEST_CASE("a lone car-sized box is labeled car") {
  Scene scene;
  SceneObject car;
  car.label = FineLabel::Car;
  car.x = 10;
  car.width = 1.8;
  car.depth = 1.8;
  car.height = 1.5;
  car.yaw = 0.0;  // an oblique face would fragment at grazing incidence
  scene.objects.push_back(car);
  scene.has_ground = false;
  SensorModel m;
  const PointCloud cloud = raycast(scene, m, 0.0, 1);
  const RangeImage img = project(cloud, m);
  SegmentationParams p;
  p.ground_removal = false;
  const auto segs = segment(img, p);
  REQUIRE(segs.size() == 1);
  const auto labels = autolabel_frame(img, cloud, segs);
  CHECK(labels[0].label == RuleLabel::Car);
}

TEST_CASE("label names round trip") {
  for (LabelSet set : {LabelSet::Rule, LabelSet::Fine}) {
    for (int i = 0; i < label_count(set); ++i) CHECK(parse_label(set, label_name(set, i)) == i);
  }
  CHECK_FALSE(parse_label(LabelSet::Rule, "bush").has_value());
  CHECK(parse_label(LabelSet::Fine, "bush") == 3);
}

TEST_CASE("label records round trip and reject unknown names") {
  const std::vector<LabelRecord> recs = {{0, 1, 2}, {5, 0, 4}, {12, 33, 0}};
  std::stringstream ss;
  write_label_records(ss, LabelSet::Rule, recs);
  CHECK(ss.str() == "0 1 trunk\n5 0 unknown\n12 33 people\n");
  const auto back = read_label_records(ss, LabelSet::Rule);
  REQUIRE(back.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back[i].frame_id == recs[i].frame_id);
    CHECK(back[i].segment_id == recs[i].segment_id);
    CHECK(back[i].label == recs[i].label);
  }
  std::stringstream bad("0 1 cyclist\n");
  CHECK_THROWS(read_label_records(bad, LabelSet::Rule));
}
