#pragma once

#include <array>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "lidarseg/geometry.hpp"
#include "lidarseg/segmentation.hpp"

namespace lidarseg {

using Plane = GridT<float>;

enum Channel : int { kRangeChannel = 0, kHeightChannel = 1, kIntensityChannel = 2 };

/// S x S x 3 network input cropped around one segment. Channel values are
/// normalized to [0, 1]; cells without a return are zero in every channel.
struct Sample {
  std::array<Plane, 3> channels;
  GridT<std::uint8_t> mask;
  int segment_id = 0;
  std::int64_t frame_id = 0;

  int size() const { return static_cast<int>(channels[0].rows()); }
};

struct CropParams {
  int window_rows = 32;
  int window_cols = 128;
  int out_size = 64;
  double range_norm_max = 70.0;
  double height_norm_min = -2.0;
  double height_norm_max = 8.0;

  void validate() const;
};

/// Window centered on the segment's centroid cell, wrapped in azimuth and
/// zero-padded above/below the image, resampled nearest-neighbor to S x S.
Sample extract_sample(const RangeImage& img, const Segment& seg, const CropParams& p);

std::vector<Sample> extract_frame_samples(const RangeImage& img, const PointCloud& cloud,
                                          const std::vector<Segment>& segs, const CropParams& p);

/// Sample file: "LSMP", u16 version, u32 S, u32 count, then per sample
/// i64 frame_id, i32 segment_id and three S*S f32 planes (range, height,
/// intensity). Masks are not persisted.
void write_samples(std::ostream& os, const std::vector<Sample>& samples);
std::vector<Sample> read_samples(std::istream& is);
void save_samples(const std::filesystem::path& path, const std::vector<Sample>& samples);
std::vector<Sample> load_samples(const std::filesystem::path& path);

}  // namespace lidarseg
