#include <doctest.h>

#include <climits>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "lidarseg/dataset.hpp"
#include "lidarseg/samples.hpp"
#include "lidarseg/synthetic.hpp"

using namespace lidarseg;

namespace {

RangeImage roll_columns(const RangeImage& img, int k) {
  RangeImage out(img.rows(), img.cols());
  out.frame_id = img.frame_id;
  for (int r = 0; r < img.rows(); ++r) {
    for (int c = 0; c < img.cols(); ++c) {
      const int d = (c + k) % img.cols();
      out.range(r, d) = img.range(r, c);
      out.height(r, d) = img.height(r, c);
      out.intensity(r, d) = img.intensity(r, c);
      out.point_index(r, d) = img.point_index(r, c);
    }
  }
  return out;
}

bool same_sample(const Sample& a, const Sample& b) {
  for (int ch = 0; ch < 3; ++ch) {
    if (a.channels[static_cast<std::size_t>(ch)] != b.channels[static_cast<std::size_t>(ch)]) return false;
  }
  return a.mask == b.mask;
}

}  // namespace

TEST_CASE("all-NO_RETURN window gives an all-zero sample") {
  RangeImage img(32, 200);
  Segment seg;
  seg.cells = {{10, 10}};
  seg.centroid_cell = {10, 10};
  CropParams p;
  p.out_size = 16;
  const Sample s = extract_sample(img, seg, p);
  for (const auto& ch : s.channels) CHECK(ch.isZero());
  CHECK(s.size() == 16);
}

TEST_CASE("constant 35 m window gives range channel 0.5") {
  RangeImage img(32, 200);
  img.range.setConstant(35.0);
  img.height.setConstant(3.0);
  img.intensity.setConstant(0.25);
  Segment seg;
  seg.cells = {{16, 100}};
  seg.centroid_cell = {16, 100};
  CropParams p;
  p.window_rows = 8;
  p.out_size = 8;
  const Sample s = extract_sample(img, seg, p);
  CHECK((s.channels[kRangeChannel].array() == 0.5f).all());
  CHECK((s.channels[kHeightChannel].array() == 0.5f).all());
  CHECK((s.channels[kIntensityChannel].array() == 0.25f).all());
}

TEST_CASE("rows above and below the image are zero padded") {
  RangeImage img(4, 50);
  img.range.setConstant(10.0);
  Segment seg;
  seg.cells = {{0, 0}};
  seg.centroid_cell = {0, 0};
  CropParams p;
  p.window_rows = 8;
  p.window_cols = 8;
  p.out_size = 8;
  const Sample s = extract_sample(img, seg, p);
  // Window rows -4..3: the top half is outside.
  CHECK(s.channels[kRangeChannel].topRows(4).isZero());
  CHECK((s.channels[kRangeChannel].bottomRows(4).array() > 0).all());
  CHECK(s.mask(4, 4) == 1);
}

TEST_CASE("nearest-neighbor resampling picks the expected source cells") {
  RangeImage img(32, 200);
  for (int c = 0; c < 200; ++c) img.range.col(c).setConstant(1.0 + c);
  Segment seg;
  seg.cells = {{16, 100}};
  seg.centroid_cell = {16, 100};
  CropParams p;
  p.window_cols = 128;
  p.out_size = 64;
  p.range_norm_max = 1000.0;
  const Sample s = extract_sample(img, seg, p);
  // Output column v reads window column 2v+1 of 128, i.e. image column 37+2v.
  for (int v = 0; v < 64; ++v) {
    CHECK(s.channels[kRangeChannel](32, v) == doctest::Approx((1.0 + 37 + 2 * v) / 1000.0).epsilon(1e-6));
  }
}

TEST_CASE("samples are bounded, counted per segment and ordered") {
  CorpusSpec spec;
  spec.n_frames = 4;
  PipelineParams params;
  params.crop.out_size = 32;
  int checked = 0;
  for (const Frame& f : generate_corpus(spec, Split::Train)) {
    const FrameData fd = process_frame(f.cloud, params);
    REQUIRE(fd.samples.size() == fd.segments.size());
    for (std::size_t i = 0; i < fd.samples.size(); ++i) {
      CHECK(fd.samples[i].segment_id == fd.segments[i].id);
      for (const auto& ch : fd.samples[i].channels) {
        CHECK(ch.minCoeff() >= 0.0f);
        CHECK(ch.maxCoeff() <= 1.0f);
      }
      const auto& smp = fd.samples[i];
      for (Eigen::Index j = 0; j < smp.mask.size(); ++j) {
        if (smp.mask.data()[j]) CHECK(smp.channels[kRangeChannel].data()[j] > 0.0f);
      }
      // Columns are taken every window_cols / S, so a segment is only
      // guaranteed to show up if some row has a run at least that long.
      const int stride = params.crop.window_cols / params.crop.out_size;
      const int cols = params.sensor.n_cols;
      std::map<int, std::set<int>> by_row;
      for (const Cell& c : fd.segments[i].cells) {
        int off = ((c.col - fd.segments[i].centroid_cell.col) % cols + cols) % cols;
        if (off >= cols / 2) off -= cols;
        if (off >= -params.crop.window_cols / 2 && off < params.crop.window_cols / 2) by_row[c.row].insert(off);
      }
      bool wide = false;
      for (const auto& [row, offs] : by_row) {
        int run = 0;
        int prev = INT_MIN;
        for (int o : offs) {
          run = (o == prev + 1) ? run + 1 : 1;
          prev = o;
          wide = wide || run >= stride;
        }
      }
      if (wide) {
        ++checked;
        CHECK(smp.mask.cast<int>().sum() > 0);
      }
    }
  }
  CHECK(checked > 20);
}

TEST_CASE("rotating the image in azimuth leaves every sample unchanged") {
  CorpusSpec spec;
  spec.n_frames = 2;
  PipelineParams params;
  params.crop.out_size = 32;
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> shift(1, spec.sensor.n_cols - 1);
  for (const Frame& f : generate_corpus(spec, Split::Test)) {
    const RangeImage img = project(f.cloud, params.sensor);
    const auto segs = segment(img, params.segmentation);
    const auto base = extract_frame_samples(img, f.cloud, segs, params.crop);
    for (int k : {shift(rng), spec.sensor.n_cols / 2}) {
      const RangeImage rolled = roll_columns(img, k);
      const auto rsegs = segment(rolled, params.segmentation);
      const auto rot = extract_frame_samples(rolled, f.cloud, rsegs, params.crop);
      REQUIRE(rot.size() == base.size());
      // Raster ids change under rotation; match segments by their cell sets.
      for (std::size_t i = 0; i < segs.size(); ++i) {
        std::set<Cell> moved;
        for (const auto& c : segs[i].cells) moved.insert({c.row, (c.col + k) % img.cols()});
        bool found = false;
        for (std::size_t j = 0; j < rsegs.size(); ++j) {
          if (std::set<Cell>(rsegs[j].cells.begin(), rsegs[j].cells.end()) == moved) {
            found = true;
            CHECK(same_sample(base[i], rot[j]));
          }
        }
        CHECK(found);
      }
    }
  }
}

TEST_CASE("LSMP round trip") {
  CorpusSpec spec;
  spec.n_frames = 1;
  PipelineParams params;
  params.crop.out_size = 16;
  const FrameData fd = process_frame(generate_corpus(spec, Split::Train)[0].cloud, params);
  std::stringstream ss;
  write_samples(ss, fd.samples);
  const auto back = read_samples(ss);
  REQUIRE(back.size() == fd.samples.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].segment_id == fd.samples[i].segment_id);
    for (int ch = 0; ch < 3; ++ch) CHECK(back[i].channels[static_cast<std::size_t>(ch)] == fd.samples[i].channels[static_cast<std::size_t>(ch)]);
  }
}

TEST_CASE("invalid crop params are rejected") {
  CropParams p;
  p.out_size = 4;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p = CropParams{};
  p.height_norm_min = 9;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
}
