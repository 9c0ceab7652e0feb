#include <doctest.h>

#include <map>
#include <random>

#include "lidarseg/dataset.hpp"
#include "lidarseg/evaluation.hpp"
#include "lidarseg/synthetic.hpp"
#include "oracles.hpp"

using namespace lidarseg;

TEST_CASE("ray-primitive intersection agrees with a 1 mm marching oracle") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double ground_z = -1.73;
  int hits = 0;
  int misses = 0;
  for (int i = 0; i < 1000; ++i) {
    SceneObject o;
    o.shape = i % 2 ? Shape::Box : Shape::Cylinder;
    o.width = 0.3 + 3.0 * u(rng);
    o.depth = o.shape == Shape::Cylinder ? o.width : 0.3 + 3.0 * u(rng);
    o.height = 0.5 + 4.0 * u(rng);
    o.yaw = 3.14159 * u(rng);
    const double az = 6.28318 * u(rng);
    const double r = 4.0 + 8.0 * u(rng);
    o.x = r * std::cos(az);
    o.y = r * std::sin(az);
    // Aim near the object so most rays hit, some graze and some miss.
    const Eigen::Vector3d target(o.x + (u(rng) - 0.5) * 1.4 * std::max(o.width, o.depth),
                                 o.y + (u(rng) - 0.5) * 1.4 * std::max(o.width, o.depth),
                                 ground_z + (u(rng) * 1.3 - 0.15) * o.height);
    const Eigen::Vector3d origin = Eigen::Vector3d::Zero();
    const Eigen::Vector3d dir = target.normalized();
    const auto got = intersect(origin, dir, o, ground_z);
    const auto expect = oracle::march(o, origin, dir, ground_z, 1e-3, 16.0);
    REQUIRE(got.has_value() == expect.has_value());
    if (got) {
      ++hits;
      CHECK(std::abs(*got - *expect) <= 2e-3);
    } else {
      ++misses;
    }
  }
  CHECK(hits > 300);
  CHECK(misses > 100);
}

TEST_CASE("ground intersection") {
  const Eigen::Vector3d down = Eigen::Vector3d(1, 0, -1).normalized();
  const auto t = intersect_ground(Eigen::Vector3d::Zero(), down, -2.0);
  REQUIRE(t.has_value());
  CHECK(*t == doctest::Approx(2.0 * std::sqrt(2.0)));
  CHECK_FALSE(intersect_ground(Eigen::Vector3d::Zero(), Eigen::Vector3d(1, 0, 0), -2.0).has_value());
}

TEST_CASE("empty scene without ground casts no points") {
  Scene s;
  s.has_ground = false;
  CHECK(raycast(s, SensorModel{}, 0.02, 1).empty());
}

TEST_CASE("raycast is deterministic and labels hits") {
  CorpusSpec spec;
  const Scene scene = generate_scene(spec, 5);
  std::vector<int> idx_a, idx_b;
  const PointCloud a = raycast(scene, spec.sensor, 0.0, 3, &idx_a);
  const PointCloud b = raycast(scene, spec.sensor, 0.0, 3, &idx_b);
  REQUIRE(a.size() == b.size());
  CHECK(idx_a == idx_b);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a.points[i].position == b.points[i].position);
    const int expect = idx_a[i] == kGroundHit ? static_cast<int>(FineLabel::Unknown)
                                              : static_cast<int>(scene.objects[static_cast<std::size_t>(idx_a[i])].label);
    CHECK(a.points[i].gt_label == expect);
  }
}

TEST_CASE("scene objects respect class ranges and clearance") {
  CorpusSpec spec;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const Scene s = generate_scene(spec, seed);
    for (std::size_t i = 0; i < s.objects.size(); ++i) {
      const SceneObject& o = s.objects[i];
      const DimensionRange d = class_dimensions(o.label);
      CHECK(o.width >= d.width_min);
      CHECK(o.width <= d.width_max);
      CHECK(o.height >= d.height_min);
      CHECK(o.height <= d.height_max);
      CHECK(o.shape == class_shape(o.label));
      const double r = std::hypot(o.x, o.y);
      CHECK(r >= spec.min_object_range);
      CHECK(r <= spec.max_object_range);
      for (std::size_t j = 0; j < i; ++j) {
        const SceneObject& p = s.objects[j];
        CHECK(std::hypot(o.x - p.x, o.y - p.y) >= o.footprint_radius() + p.footprint_radius() + spec.clearance);
      }
    }
  }
}

TEST_CASE("overcrowded scenes drop objects with a warning") {
  CorpusSpec spec;
  spec.objects_per_frame = 400;
  spec.max_object_range = 8.0;
  std::vector<std::string> warnings;
  const Scene s = generate_scene(spec, 1, &warnings);
  CHECK(s.objects.size() + warnings.size() == 400);
  CHECK_FALSE(warnings.empty());
}

TEST_CASE("corpus generation is a pure function of its settings") {
  CorpusSpec spec;
  spec.n_frames = 2;
  const auto a = generate_corpus(spec, Split::Train);
  const auto b = generate_corpus(spec, Split::Train);
  const auto t = generate_corpus(spec, Split::Test);
  REQUIRE(a.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(a[i].seed == b[i].seed);
    CHECK(a[i].cloud.size() == b[i].cloud.size());
    CHECK(a[i].cloud.frame_id == static_cast<std::int64_t>(i));
    CHECK(a[i].seed != t[i].seed);
  }
  CHECK(a[0].cloud.points.back().position != t[0].cloud.points.back().position);
  spec.n_frames = 0;
  CHECK(generate_corpus(spec, Split::Train).empty());
}

TEST_CASE("invalid corpus specs are rejected") {
  CorpusSpec spec;
  spec.class_mix[0] = 0.5;
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  spec = CorpusSpec{};
  spec.min_object_range = 60;
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
}

TEST_CASE("segment majority labels match object identity at zero noise") {
  CorpusSpec spec;
  spec.n_frames = 10;
  spec.noise_stddev = 0.0;
  PipelineParams params;
  int total = 0;
  int agree = 0;
  for (const Frame& f : generate_corpus(spec, Split::Train)) {
    const RangeImage img = project(f.cloud, params.sensor);
    for (const Segment& s : segment(img, params.segmentation)) {
      std::map<int, int> votes;
      for (const Cell& c : s.cells) ++votes[f.object_index[static_cast<std::size_t>(img.point_index(c.row, c.col))]];
      const int obj = std::max_element(votes.begin(), votes.end(), [](auto& a, auto& b) { return a.second < b.second; })->first;
      const int obj_label = obj == kGroundHit ? static_cast<int>(FineLabel::Unknown)
                                              : static_cast<int>(f.scene.objects[static_cast<std::size_t>(obj)].label);
      ++total;
      if (majority_label(s, f.cloud, img) == obj_label) ++agree;
    }
  }
  REQUIRE(total > 100);
  CHECK(agree >= 0.99 * total);
}

TEST_CASE("rules reach a sane F1 on a noiseless corpus") {
  CorpusSpec spec;
  spec.n_frames = 20;
  spec.noise_stddev = 0.0;
  PipelineParams params;
  params.crop.out_size = 8;
  std::vector<PointCloud> clouds;
  for (Frame& f : generate_corpus(spec, Split::Test)) clouds.push_back(std::move(f.cloud));
  const SampleTable t = build_sample_table(clouds, params);
  std::vector<int> truth;
  std::vector<int> preds;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t.truth[i] < 0) continue;
    truth.push_back(t.truth[i]);
    preds.push_back(t.rule_labels[i]);
  }
  const EvalReport r = evaluate(preds, merge_to_rule_classes(truth), LabelSet::Rule);
  CHECK(r.mean_f1 > 40.0);
}
