#pragma once

#include <memory>
#include <vector>

#include "lidarseg/geometry.hpp"
#include "lidarseg/rules.hpp"
#include "lidarseg/samples.hpp"
#include "lidarseg/segmentation.hpp"

namespace lidarseg {

struct PipelineParams {
  SensorModel sensor;
  SegmentationParams segmentation;
  CropParams crop;
};

/// Everything derived from one frame: its segments, one sample per segment,
/// the rule label of each, and (for annotated clouds) the majority-vote
/// ground-truth fine label, or -1 when no member point is labeled.
struct FrameData {
  std::int64_t frame_id = 0;
  std::vector<Segment> segments;
  std::vector<SegmentFeatures> features;
  std::vector<Sample> samples;
  std::vector<int> rule_labels;
  std::vector<int> truth;
};

FrameData process_frame(const PointCloud& cloud, const PipelineParams& params);

/// Most frequent gt_label among the segment's points; ties go to the
/// smaller label id. Returns -1 when no point carries a label.
int majority_label(const Segment& seg, const PointCloud& cloud, const RangeImage& img);

/// Samples of a whole corpus, flattened, with parallel label vectors.
struct SampleTable {
  std::vector<Sample> samples;
  std::vector<int> rule_labels;
  std::vector<int> truth;
  std::vector<SegmentFeatures> features;

  std::size_t size() const { return samples.size(); }
};

SampleTable build_sample_table(const std::vector<PointCloud>& clouds, const PipelineParams& params);

}  // namespace lidarseg
