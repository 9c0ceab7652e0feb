#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

namespace lidarseg {

template <typename T>
using GridT = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using GridD = GridT<double>;
using GridI = GridT<std::int32_t>;

inline constexpr std::uint8_t kUnlabeled = 255;
inline constexpr std::int32_t kNoPoint = -1;

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LidarPoint {
  Eigen::Vector3f position = Eigen::Vector3f::Zero();
  float intensity = 0.0f;
  std::uint8_t gt_label = kUnlabeled;
};

struct PointCloud {
  std::vector<LidarPoint> points;
  std::int64_t frame_id = 0;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

/// Spinning-beam sensor geometry. Rows index elevation (row 0 is the
/// highest beam), columns index azimuth with column 0 centered on +x and
/// increasing counter-clockwise.
struct SensorModel {
  int n_rows = 32;
  int n_cols = 870;
  double elev_min_deg = -30.67;
  double elev_max_deg = 10.67;
  double max_range = 70.0;

  void validate() const;

  double elevation_step_deg() const { return (elev_max_deg - elev_min_deg) / n_rows; }
  double azimuth_step_deg() const { return 360.0 / n_cols; }

  /// Elevation of the center of a row, degrees.
  double row_elevation_deg(int row) const;
  /// Azimuth of the center of a column, degrees in [0, 360).
  double col_azimuth_deg(int col) const;
  /// Unit direction of the beam through the center of cell (row, col).
  Eigen::Vector3d beam_direction(int row, int col) const;

  int wrap_col(int col) const {
    const int m = col % n_cols;
    return m < 0 ? m + n_cols : m;
  }
};

/// Polar-grid view of one frame. A range of 0 marks NO_RETURN.
struct RangeImage {
  GridD range;
  GridD height;
  GridD intensity;
  GridI point_index;
  std::int64_t frame_id = 0;

  RangeImage() = default;
  RangeImage(int rows, int cols);

  int rows() const { return static_cast<int>(range.rows()); }
  int cols() const { return static_cast<int>(range.cols()); }
  bool has_return(int row, int col) const { return range(row, col) > 0.0; }
  std::size_t occupied() const;
};

struct ProjectionStats {
  std::size_t placed = 0;
  std::size_t out_of_fov = 0;
  std::size_t zero_range = 0;
  std::size_t beyond_range = 0;
  std::size_t collisions = 0;

  std::size_t skipped() const { return out_of_fov + zero_range + beyond_range; }
};

/// Bins every point into its (elevation, azimuth) cell; the nearest point
/// wins a contested cell. Points outside the elevation FOV, at zero range or
/// beyond max_range are skipped and counted in `stats`.
RangeImage project(const PointCloud& cloud, const SensorModel& model,
                   ProjectionStats* stats = nullptr);

/// Lifts every occupied cell to a point along its bin-center beam.
PointCloud unproject(const RangeImage& img, const SensorModel& model);

/// LSEG point cloud file: "LSEG", u16 version, u32 count, then per point
/// little-endian f32 x, y, z, intensity and u8 label.
void write_cloud(std::ostream& os, const PointCloud& cloud);
PointCloud read_cloud(std::istream& is, std::int64_t frame_id = 0);
void save_cloud(const std::filesystem::path& path, const PointCloud& cloud);
PointCloud load_cloud(const std::filesystem::path& path, std::int64_t frame_id = 0);

}  // namespace lidarseg
