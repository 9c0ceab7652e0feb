#include "lidarseg/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

namespace lidarseg {

namespace {

constexpr int kPlacementRetries = 200;
constexpr double kFacadeJitter = std::numbers::pi / 6;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

std::optional<double> intersect_box(const Eigen::Vector3d& o, const Eigen::Vector3d& d, const SceneObject& b,
                                    double ground_z) {
  // Into the box frame: centered footprint, z from 0 to height.
  const double c = std::cos(b.yaw);
  const double s = std::sin(b.yaw);
  const Eigen::Vector3d rel(o.x() - b.x, o.y() - b.y, o.z() - ground_z);
  const Eigen::Vector3d lo_o(c * rel.x() + s * rel.y(), -s * rel.x() + c * rel.y(), rel.z());
  const Eigen::Vector3d lo_d(c * d.x() + s * d.y(), -s * d.x() + c * d.y(), d.z());
  const Eigen::Vector3d lo(-b.width / 2, -b.depth / 2, 0.0);
  const Eigen::Vector3d hi(b.width / 2, b.depth / 2, b.height);

  double t_near = -std::numeric_limits<double>::infinity();
  double t_far = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (std::abs(lo_d[a]) < 1e-15) {
      if (lo_o[a] < lo[a] || lo_o[a] > hi[a]) return std::nullopt;
      continue;
    }
    double t1 = (lo[a] - lo_o[a]) / lo_d[a];
    double t2 = (hi[a] - lo_o[a]) / lo_d[a];
    if (t1 > t2) std::swap(t1, t2);
    t_near = std::max(t_near, t1);
    t_far = std::min(t_far, t2);
    if (t_near > t_far) return std::nullopt;
  }
  if (t_far < 0.0) return std::nullopt;
  // The sensor never sits inside an object, so t_near is the entry point.
  if (t_near < 0.0) return std::nullopt;
  return t_near;
}

std::optional<double> intersect_cylinder(const Eigen::Vector3d& o, const Eigen::Vector3d& d, const SceneObject& cyl,
                                         double ground_z) {
  const double radius = cyl.width / 2;
  const double z0 = ground_z;
  const double z1 = ground_z + cyl.height;
  std::optional<double> best;
  auto consider = [&](double t) {
    if (t >= 0.0 && (!best || t < *best)) best = t;
  };

  const double ox = o.x() - cyl.x;
  const double oy = o.y() - cyl.y;
  const double a = d.x() * d.x() + d.y() * d.y();
  if (a > 1e-15) {
    const double b = 2.0 * (ox * d.x() + oy * d.y());
    const double c = ox * ox + oy * oy - radius * radius;
    const double disc = b * b - 4.0 * a * c;
    if (disc >= 0.0) {
      const double sq = std::sqrt(disc);
      // Numerically stable root pair.
      const double q = -0.5 * (b + std::copysign(sq, b));
      for (double t : {q / a, c / q}) {
        const double z = o.z() + t * d.z();
        if (z >= z0 && z <= z1) consider(t);
      }
    }
  }
  if (std::abs(d.z()) > 1e-15) {
    for (double zc : {z0, z1}) {
      const double t = (zc - o.z()) / d.z();
      const double px = ox + t * d.x();
      const double py = oy + t * d.y();
      if (px * px + py * py <= radius * radius) consider(t);
    }
  }
  return best;
}

}  // namespace

double SceneObject::footprint_radius() const {
  return shape == Shape::Cylinder ? width / 2 : 0.5 * std::hypot(width, depth);
}

Shape class_shape(FineLabel label) {
  switch (label) {
    case FineLabel::People:
    case FineLabel::Trunk:
    case FineLabel::Bush: return Shape::Cylinder;
    default: return Shape::Box;
  }
}

DimensionRange class_dimensions(FineLabel label) {
  switch (label) {
    case FineLabel::People: return {0.4, 0.9, 0.4, 0.9, 1.4, 1.9};
    case FineLabel::Car: return {1.6, 2.2, 1.8, 2.6, 1.3, 1.8};
    case FineLabel::Trunk: return {0.2, 0.8, 0.2, 0.8, 3.0, 8.0};
    case FineLabel::Bush: return {1.0, 3.0, 1.0, 3.0, 0.5, 1.5};
    case FineLabel::Building: return {8.0, 15.0, 1.0, 2.0, 4.0, 10.0};
    case FineLabel::Cyclist: return {0.5, 1.0, 1.5, 1.9, 1.5, 1.9};
    case FineLabel::Unknown: return {2.8, 6.0, 0.3, 1.0, 0.5, 2.5};
  }
  throw std::invalid_argument("class_dimensions: invalid label");
}

double class_intensity(FineLabel label) {
  constexpr std::array<double, kNumFineLabels> base = {0.45, 0.6, 0.25, 0.3, 0.5, 0.7, 0.4};
  return base.at(static_cast<std::size_t>(label));
}

void CorpusSpec::validate() const {
  sensor.validate();
  if (n_frames < 0) throw std::invalid_argument("corpus: n_frames must be >= 0");
  if (objects_per_frame < 0) throw std::invalid_argument("corpus: objects_per_frame must be >= 0");
  double sum = 0.0;
  for (double p : class_mix) {
    if (p < 0.0) throw std::invalid_argument("corpus: class proportions must be >= 0");
    sum += p;
  }
  if (objects_per_frame > 0 && std::abs(sum - 1.0) > 1e-6) {
    throw std::invalid_argument("corpus: class proportions must sum to 1");
  }
  if (!(noise_stddev >= 0.0)) throw std::invalid_argument("corpus: noise_stddev must be >= 0");
  if (!(intensity_jitter >= 0.0)) throw std::invalid_argument("corpus: intensity_jitter must be >= 0");
  if (!(min_object_range > 0.0 && min_object_range < max_object_range)) {
    throw std::invalid_argument("corpus: invalid object range interval");
  }
}

std::uint64_t frame_seed(const CorpusSpec& spec, Split split, int index) {
  return splitmix64(splitmix64(spec.seed ^ (static_cast<std::uint64_t>(split) << 56)) + static_cast<std::uint64_t>(index));
}

Scene generate_scene(const CorpusSpec& spec, std::uint64_t seed, std::vector<std::string>* warnings) {
  std::mt19937_64 rng(seed);
  Scene scene;
  scene.seed = seed;
  scene.ground_z = spec.ground_z;

  double mix_total = 0.0;
  for (double p : spec.class_mix) mix_total += p;
  if (spec.objects_per_frame == 0 || mix_total <= 0.0) return scene;

  std::discrete_distribution<int> pick_class(spec.class_mix.begin(), spec.class_mix.end());
  for (int i = 0; i < spec.objects_per_frame; ++i) {
    const auto label = static_cast<FineLabel>(pick_class(rng));
    const DimensionRange dims = class_dimensions(label);
    SceneObject obj;
    obj.label = label;
    obj.shape = class_shape(label);
    obj.width = uniform(rng, dims.width_min, dims.width_max);
    obj.depth = obj.shape == Shape::Cylinder ? obj.width : uniform(rng, dims.depth_min, dims.depth_max);
    obj.height = uniform(rng, dims.height_min, dims.height_max);
    obj.intensity = std::clamp(class_intensity(label) + uniform(rng, -spec.intensity_jitter, spec.intensity_jitter), 0.0, 1.0);
    const double radius = obj.footprint_radius();

    bool placed = false;
    for (int attempt = 0; attempt < kPlacementRetries && !placed; ++attempt) {
      const double r = uniform(rng, spec.min_object_range + radius, spec.max_object_range);
      const double az = uniform(rng, 0.0, 2.0 * std::numbers::pi);
      obj.x = r * std::cos(az);
      obj.y = r * std::sin(az);
      obj.yaw = uniform(rng, 0.0, std::numbers::pi);
      if (label == FineLabel::Building) {
        // Facades face the street: the wide face points back at the sensor.
        obj.yaw = az - std::numbers::pi / 2 + uniform(rng, -kFacadeJitter, kFacadeJitter);
      }
      placed = std::none_of(scene.objects.begin(), scene.objects.end(), [&](const SceneObject& other) {
        return std::hypot(other.x - obj.x, other.y - obj.y) < radius + other.footprint_radius() + spec.clearance;
      });
    }
    if (placed) {
      scene.objects.push_back(obj);
    } else if (warnings) {
      warnings->push_back("scene " + std::to_string(seed) + ": dropped " + std::string(label_name(label)) +
                          " after " + std::to_string(kPlacementRetries) + " placement attempts");
    }
  }
  return scene;
}

std::optional<double> intersect(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir, const SceneObject& obj,
                                double ground_z) {
  return obj.shape == Shape::Box ? intersect_box(origin, dir, obj, ground_z)
                                 : intersect_cylinder(origin, dir, obj, ground_z);
}

std::optional<double> intersect_ground(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir, double ground_z) {
  if (!(dir.z() < 0.0) || origin.z() < ground_z) return std::nullopt;
  return (ground_z - origin.z()) / dir.z();
}

PointCloud raycast(const Scene& scene, const SensorModel& model, double noise_stddev, std::uint64_t noise_seed,
                   std::vector<int>* object_index) {
  model.validate();
  std::mt19937_64 rng(noise_seed);
  std::normal_distribution<double> range_noise(0.0, 1.0);
  std::normal_distribution<double> intensity_noise(0.0, 0.03);
  const Eigen::Vector3d origin = Eigen::Vector3d::Zero();

  PointCloud cloud;
  if (object_index) object_index->clear();
  for (int row = 0; row < model.n_rows; ++row) {
    for (int col = 0; col < model.n_cols; ++col) {
      const Eigen::Vector3d dir = model.beam_direction(row, col);
      double best = std::numeric_limits<double>::infinity();
      int hit = kGroundHit;
      bool any = false;
      if (scene.has_ground) {
        if (auto t = intersect_ground(origin, dir, scene.ground_z)) {
          best = *t;
          any = true;
        }
      }
      for (std::size_t i = 0; i < scene.objects.size(); ++i) {
        if (auto t = intersect(origin, dir, scene.objects[i], scene.ground_z); t && *t < best) {
          best = *t;
          hit = static_cast<int>(i);
          any = true;
        }
      }
      // Noise is drawn for every beam so the stream does not depend on hits.
      const double dn = noise_stddev * range_noise(rng);
      const double di = intensity_noise(rng);
      if (!any) continue;
      const double r = best + dn;
      if (!(r > 0.0) || r > model.max_range) continue;

      LidarPoint p;
      p.position = (dir * r).cast<float>();
      const double base = hit == kGroundHit ? kGroundIntensity : scene.objects[static_cast<std::size_t>(hit)].intensity;
      p.intensity = static_cast<float>(std::clamp(base + di, 0.0, 1.0));
      p.gt_label = static_cast<std::uint8_t>(hit == kGroundHit
                                                 ? static_cast<int>(FineLabel::Unknown)
                                                 : static_cast<int>(scene.objects[static_cast<std::size_t>(hit)].label));
      cloud.points.push_back(p);
      if (object_index) object_index->push_back(hit);
    }
  }
  return cloud;
}

std::vector<Frame> generate_corpus(const CorpusSpec& spec, Split split) {
  spec.validate();
  std::vector<Frame> frames;
  frames.reserve(static_cast<std::size_t>(spec.n_frames));
  for (int i = 0; i < spec.n_frames; ++i) {
    Frame f;
    f.seed = frame_seed(spec, split, i);
    f.scene = generate_scene(spec, f.seed);
    f.cloud = raycast(f.scene, spec.sensor, spec.noise_stddev, splitmix64(f.seed), &f.object_index);
    f.cloud.frame_id = i;
    frames.push_back(std::move(f));
  }
  return frames;
}

}  // namespace lidarseg
