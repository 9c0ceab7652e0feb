#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "lidarseg/geometry.hpp"
#include "lidarseg/rules.hpp"

namespace lidarseg {

enum class Shape { Box, Cylinder };

/// Upright primitive resting on the ground plane. For boxes `width` runs
/// along the local x axis and `depth` along local y; cylinders use `width`
/// as diameter.
struct SceneObject {
  FineLabel label = FineLabel::Unknown;
  Shape shape = Shape::Box;
  double x = 0.0;
  double y = 0.0;
  double yaw = 0.0;
  double width = 1.0;
  double depth = 1.0;
  double height = 1.0;
  double intensity = 0.5;

  /// Radius of the xy bounding circle.
  double footprint_radius() const;
};

struct Scene {
  std::vector<SceneObject> objects;
  bool has_ground = true;
  double ground_z = -1.73;
  std::uint64_t seed = 0;
};

struct DimensionRange {
  double width_min, width_max;
  double depth_min, depth_max;
  double height_min, height_max;
};

/// Per-class shape and size ranges used by generate_scene.
Shape class_shape(FineLabel label);
DimensionRange class_dimensions(FineLabel label);
double class_intensity(FineLabel label);
inline constexpr double kGroundIntensity = 0.15;

struct CorpusSpec {
  int n_frames = 1;
  int objects_per_frame = 16;
  /// Indexed by FineLabel.
  std::array<double, kNumFineLabels> class_mix = {0.16, 0.18, 0.16, 0.14, 0.08, 0.12, 0.16};
  SensorModel sensor;
  double noise_stddev = 0.02;
  /// Half-width of the uniform per-object offset from the class intensity.
  double intensity_jitter = 0.05;
  double ground_z = -1.73;
  double min_object_range = 3.0;
  double max_object_range = 50.0;
  double clearance = 1.0;
  std::uint64_t seed = 1;

  void validate() const;
};

enum class Split : std::uint64_t { Train = 1, Test = 2 };

/// Seed of frame `index` in a split; train and test streams never collide.
std::uint64_t frame_seed(const CorpusSpec& spec, Split split, int index);

/// Seeded object placement at 3-50 m with rejection of overlapping
/// footprints. Gives up on an object after a bounded number of retries and
/// appends a message to `warnings`.
Scene generate_scene(const CorpusSpec& spec, std::uint64_t seed, std::vector<std::string>* warnings = nullptr);

/// Distance along a unit ray to the nearest hit on the primitive, if any.
std::optional<double> intersect(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir, const SceneObject& obj,
                                double ground_z);
std::optional<double> intersect_ground(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir, double ground_z);

/// Index into scene.objects for object hits, kGroundHit for the ground.
inline constexpr int kGroundHit = -1;

/// Casts one ray per (row, col) bin center from the origin. Each hit becomes
/// a point carrying the hit object's label and intensity, with gaussian
/// range noise. `object_index` (optional) receives the hit object per point.
PointCloud raycast(const Scene& scene, const SensorModel& model, double noise_stddev, std::uint64_t noise_seed,
                   std::vector<int>* object_index = nullptr);

struct Frame {
  PointCloud cloud;
  std::vector<int> object_index;
  Scene scene;
  std::uint64_t seed = 0;
};

std::vector<Frame> generate_corpus(const CorpusSpec& spec, Split split);

}  // namespace lidarseg
