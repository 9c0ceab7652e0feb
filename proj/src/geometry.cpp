#include "lidarseg/geometry.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <string>

#include "lidarseg/detail/binary_io.hpp"

namespace lidarseg {

namespace {

constexpr double kDegPerRad = 180.0 / std::numbers::pi;
constexpr std::uint16_t kCloudVersion = 1;

}  // namespace

void SensorModel::validate() const {
  if (n_rows < 2) throw std::invalid_argument("sensor: n_rows must be >= 2");
  if (n_cols < 4) throw std::invalid_argument("sensor: n_cols must be >= 4");
  if (!(elev_min_deg < elev_max_deg)) {
    throw std::invalid_argument("sensor: elev_min must be < elev_max");
  }
  if (!(max_range > 0.0)) throw std::invalid_argument("sensor: max_range must be > 0");
}

double SensorModel::row_elevation_deg(int row) const {
  const int bin = n_rows - 1 - row;
  return elev_min_deg + (bin + 0.5) * elevation_step_deg();
}

double SensorModel::col_azimuth_deg(int col) const {
  return wrap_col(col) * azimuth_step_deg();
}

Eigen::Vector3d SensorModel::beam_direction(int row, int col) const {
  const double elev = row_elevation_deg(row) / kDegPerRad;
  const double az = col_azimuth_deg(col) / kDegPerRad;
  return {std::cos(elev) * std::cos(az), std::cos(elev) * std::sin(az), std::sin(elev)};
}

RangeImage::RangeImage(int rows, int cols)
    : range(GridD::Zero(rows, cols)),
      height(GridD::Zero(rows, cols)),
      intensity(GridD::Zero(rows, cols)),
      point_index(GridI::Constant(rows, cols, kNoPoint)) {}

std::size_t RangeImage::occupied() const {
  return static_cast<std::size_t>((range.array() > 0.0).count());
}

RangeImage project(const PointCloud& cloud, const SensorModel& model, ProjectionStats* stats) {
  model.validate();
  RangeImage img(model.n_rows, model.n_cols);
  img.frame_id = cloud.frame_id;

  ProjectionStats local;
  const double elev_step = model.elevation_step_deg();
  const double az_step = model.azimuth_step_deg();

  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    const LidarPoint& p = cloud.points[i];
    const Eigen::Vector3d xyz = p.position.cast<double>();
    const double r = xyz.norm();
    if (!(r > 0.0)) {
      ++local.zero_range;
      continue;
    }
    if (r > model.max_range) {
      ++local.beyond_range;
      continue;
    }
    const double elev = std::atan2(xyz.z(), std::hypot(xyz.x(), xyz.y())) * kDegPerRad;
    if (elev < model.elev_min_deg || elev > model.elev_max_deg) {
      ++local.out_of_fov;
      continue;
    }
    int bin = static_cast<int>(std::floor((elev - model.elev_min_deg) / elev_step));
    bin = std::min(bin, model.n_rows - 1);
    const int row = model.n_rows - 1 - bin;

    const double az = std::atan2(xyz.y(), xyz.x()) * kDegPerRad;
    const int col = model.wrap_col(static_cast<int>(std::floor(az / az_step + 0.5)));

    if (img.has_return(row, col)) {
      ++local.collisions;
      if (!(r < img.range(row, col))) continue;
    }
    img.range(row, col) = r;
    img.height(row, col) = xyz.z();
    img.intensity(row, col) = p.intensity;
    img.point_index(row, col) = static_cast<std::int32_t>(i);
  }
  local.placed = img.occupied();
  if (stats) *stats = local;
  return img;
}

PointCloud unproject(const RangeImage& img, const SensorModel& model) {
  PointCloud cloud;
  cloud.frame_id = img.frame_id;
  for (int row = 0; row < img.rows(); ++row) {
    for (int col = 0; col < img.cols(); ++col) {
      if (!img.has_return(row, col)) continue;
      LidarPoint p;
      p.position = (model.beam_direction(row, col) * img.range(row, col)).cast<float>();
      p.intensity = static_cast<float>(img.intensity(row, col));
      cloud.points.push_back(p);
    }
  }
  return cloud;
}

void write_cloud(std::ostream& os, const PointCloud& cloud) {
  detail::write_magic(os, "LSEG");
  detail::write_le<std::uint16_t>(os, kCloudVersion);
  detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(cloud.points.size()));
  for (const auto& p : cloud.points) {
    detail::write_le<float>(os, p.position.x());
    detail::write_le<float>(os, p.position.y());
    detail::write_le<float>(os, p.position.z());
    detail::write_le<float>(os, p.intensity);
    detail::write_le<std::uint8_t>(os, p.gt_label);
  }
}

PointCloud read_cloud(std::istream& is, std::int64_t frame_id) {
  detail::expect_magic(is, "LSEG");
  const auto version = detail::read_le<std::uint16_t>(is);
  if (version != kCloudVersion) {
    throw FormatError("unsupported LSEG version " + std::to_string(version));
  }
  const auto count = detail::read_le<std::uint32_t>(is);
  PointCloud cloud;
  cloud.frame_id = frame_id;
  cloud.points.resize(count);
  for (auto& p : cloud.points) {
    const float x = detail::read_le<float>(is);
    const float y = detail::read_le<float>(is);
    const float z = detail::read_le<float>(is);
    p.position = {x, y, z};
    p.intensity = detail::read_le<float>(is);
    p.gt_label = detail::read_le<std::uint8_t>(is);
  }
  return cloud;
}

void save_cloud(const std::filesystem::path& path, const PointCloud& cloud) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
  write_cloud(os, cloud);
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

PointCloud load_cloud(const std::filesystem::path& path, std::int64_t frame_id) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path.string());
  return read_cloud(is, frame_id);
}

}  // namespace lidarseg
