#pragma once

#include <vector>

#include "lidarseg/geometry.hpp"

namespace lidarseg {

struct Cell {
  int row = 0;
  int col = 0;

  friend bool operator==(const Cell&, const Cell&) = default;
  friend auto operator<=>(const Cell&, const Cell&) = default;
};

/// A 4-connected (azimuth-wrapped) set of occupied cells assumed to measure
/// one object. Cells are kept in raster order.
struct Segment {
  int id = 0;
  std::vector<Cell> cells;
  std::int64_t frame_id = 0;
  Cell centroid_cell;

  std::size_t size() const { return cells.size(); }
};

struct SegmentationParams {
  double range_diff_threshold = 0.3;
  int min_segment_cells = 5;
  bool ground_removal = true;
  double ground_z_threshold = -1.5;

  void validate() const;
};

/// Cells that take part in region growing: occupied and, when ground removal
/// is on, at or above the ground threshold.
GridT<std::uint8_t> growable_mask(const RangeImage& img, const SegmentationParams& params);

/// Region growing over 4-neighbors with azimuth wraparound. Neighbors join
/// when their absolute range difference is within the threshold. Regions
/// smaller than min_segment_cells are dropped; ids follow raster discovery.
std::vector<Segment> segment(const RangeImage& img, const SegmentationParams& params);

/// Member cell closest to the (wrap-aware) mean cell. Ties go to the smaller
/// row, then to the cell further counter-clockwise-negative, which is the
/// smaller column whenever the segment does not straddle the seam.
Cell segment_centroid(const Segment& seg, const RangeImage& img);

}  // namespace lidarseg
