#include "lidarseg/dataset.hpp"

#include <array>

namespace lidarseg {

int majority_label(const Segment& seg, const PointCloud& cloud, const RangeImage& img) {
  std::array<int, 256> votes{};
  for (const Cell& c : seg.cells) {
    const std::int32_t idx = img.point_index(c.row, c.col);
    if (idx < 0) continue;
    const std::uint8_t label = cloud.points[static_cast<std::size_t>(idx)].gt_label;
    if (label != kUnlabeled) ++votes[label];
  }
  int best = -1;
  int best_votes = 0;
  for (int l = 0; l < 255; ++l) {
    if (votes[static_cast<std::size_t>(l)] > best_votes) {
      best = l;
      best_votes = votes[static_cast<std::size_t>(l)];
    }
  }
  return best;
}

FrameData process_frame(const PointCloud& cloud, const PipelineParams& params) {
  FrameData out;
  out.frame_id = cloud.frame_id;
  const RangeImage img = project(cloud, params.sensor);
  out.segments = segment(img, params.segmentation);
  out.samples = extract_frame_samples(img, cloud, out.segments, params.crop);
  for (const Segment& s : out.segments) {
    const SegmentFeatures f = compute_features(s, cloud, img);
    out.features.push_back(f);
    out.rule_labels.push_back(static_cast<int>(classify_rules(f)));
    out.truth.push_back(majority_label(s, cloud, img));
  }
  return out;
}

SampleTable build_sample_table(const std::vector<PointCloud>& clouds, const PipelineParams& params) {
  SampleTable table;
  for (const PointCloud& cloud : clouds) {
    FrameData fd = process_frame(cloud, params);
    for (std::size_t i = 0; i < fd.samples.size(); ++i) {
      table.samples.push_back(std::move(fd.samples[i]));
      table.rule_labels.push_back(fd.rule_labels[i]);
      table.truth.push_back(fd.truth[i]);
      table.features.push_back(fd.features[i]);
    }
  }
  return table;
}

}  // namespace lidarseg
