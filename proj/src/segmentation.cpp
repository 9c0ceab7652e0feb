#include "lidarseg/segmentation.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

namespace lidarseg {

void SegmentationParams::validate() const {
  if (!(range_diff_threshold > 0.0)) {
    throw std::invalid_argument("segmentation: range_diff_threshold must be > 0");
  }
  if (min_segment_cells < 1) {
    throw std::invalid_argument("segmentation: min_segment_cells must be >= 1");
  }
}

GridT<std::uint8_t> growable_mask(const RangeImage& img, const SegmentationParams& params) {
  GridT<std::uint8_t> mask(img.rows(), img.cols());
  for (int r = 0; r < img.rows(); ++r) {
    for (int c = 0; c < img.cols(); ++c) {
      bool ok = img.has_return(r, c);
      if (ok && params.ground_removal && img.height(r, c) < params.ground_z_threshold) ok = false;
      mask(r, c) = ok ? 1 : 0;
    }
  }
  return mask;
}

std::vector<Segment> segment(const RangeImage& img, const SegmentationParams& params) {
  params.validate();
  const int rows = img.rows();
  const int cols = img.cols();
  const GridT<std::uint8_t> mask = growable_mask(img, params);
  GridT<std::uint8_t> visited = GridT<std::uint8_t>::Zero(rows, cols);

  std::vector<Segment> out;
  std::deque<Cell> frontier;
  std::vector<Cell> region;

  for (int r0 = 0; r0 < rows; ++r0) {
    for (int c0 = 0; c0 < cols; ++c0) {
      if (!mask(r0, c0) || visited(r0, c0)) continue;

      region.clear();
      frontier.push_back({r0, c0});
      visited(r0, c0) = 1;
      while (!frontier.empty()) {
        const Cell cur = frontier.front();
        frontier.pop_front();
        region.push_back(cur);
        const double here = img.range(cur.row, cur.col);

        const Cell neighbors[4] = {{cur.row - 1, cur.col},
                                   {cur.row + 1, cur.col},
                                   {cur.row, cur.col == 0 ? cols - 1 : cur.col - 1},
                                   {cur.row, cur.col == cols - 1 ? 0 : cur.col + 1}};
        for (const Cell& n : neighbors) {
          if (n.row < 0 || n.row >= rows) continue;
          if (!mask(n.row, n.col) || visited(n.row, n.col)) continue;
          if (std::abs(img.range(n.row, n.col) - here) > params.range_diff_threshold) continue;
          visited(n.row, n.col) = 1;
          frontier.push_back(n);
        }
      }

      if (static_cast<int>(region.size()) < params.min_segment_cells) continue;
      Segment seg;
      seg.id = static_cast<int>(out.size());
      seg.frame_id = img.frame_id;
      seg.cells = region;
      std::sort(seg.cells.begin(), seg.cells.end());
      seg.centroid_cell = segment_centroid(seg, img);
      out.push_back(std::move(seg));
    }
  }
  return out;
}

Cell segment_centroid(const Segment& seg, const RangeImage& img) {
  if (seg.cells.empty()) throw std::invalid_argument("segment_centroid: empty segment");
  const int cols = img.cols();
  const int ref = seg.cells.front().col;

  // Column offsets unwrapped around the first cell so a region crossing the
  // seam averages correctly.
  auto offset = [&](int col) {
    int d = (col - ref) % cols;
    if (d < 0) d += cols;
    if (d > cols / 2) d -= cols;
    return d;
  };

  // Distances scaled by n^2 stay integral, so ties are exact.
  const auto n = static_cast<std::int64_t>(seg.cells.size());
  std::int64_t sum_row = 0;
  std::int64_t sum_off = 0;
  for (const Cell& c : seg.cells) {
    sum_row += c.row;
    sum_off += offset(c.col);
  }

  Cell best = seg.cells.front();
  std::int64_t best_d2 = std::numeric_limits<std::int64_t>::max();
  int best_off = 0;
  for (const Cell& c : seg.cells) {
    const int off = offset(c.col);
    const std::int64_t dr = n * c.row - sum_row;
    const std::int64_t dc = n * off - sum_off;
    const std::int64_t d2 = dr * dr + dc * dc;
    const bool better = d2 < best_d2 ||
                        (d2 == best_d2 && (c.row < best.row || (c.row == best.row && off < best_off)));
    if (better) {
      best = c;
      best_d2 = d2;
      best_off = off;
    }
  }
  return best;
}

}  // namespace lidarseg
