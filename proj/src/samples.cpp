#include "lidarseg/samples.hpp"

#include <algorithm>
#include <fstream>

#include "lidarseg/detail/binary_io.hpp"

namespace lidarseg {

namespace {

constexpr std::uint16_t kSampleVersion = 1;

float clamp01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

}  // namespace

void CropParams::validate() const {
  if (out_size < 8) throw std::invalid_argument("crop: out_size must be >= 8");
  if (window_rows < 1 || window_cols < 1) throw std::invalid_argument("crop: window must be >= 1");
  if (!(range_norm_max > 0.0)) throw std::invalid_argument("crop: range_norm_max must be > 0");
  if (!(height_norm_min < height_norm_max)) {
    throw std::invalid_argument("crop: height_norm_min must be < height_norm_max");
  }
}

Sample extract_sample(const RangeImage& img, const Segment& seg, const CropParams& p) {
  p.validate();
  const int s = p.out_size;
  Sample out;
  for (auto& ch : out.channels) ch = Plane::Zero(s, s);
  out.mask = GridT<std::uint8_t>::Zero(s, s);
  out.segment_id = seg.id;
  out.frame_id = img.frame_id;

  GridT<std::uint8_t> member = GridT<std::uint8_t>::Zero(img.rows(), img.cols());
  for (const Cell& c : seg.cells) member(c.row, c.col) = 1;

  const int top = seg.centroid_cell.row - p.window_rows / 2;
  const int left = seg.centroid_cell.col - p.window_cols / 2;
  const double height_span = p.height_norm_max - p.height_norm_min;

  // Source column per output column, computed once.
  std::vector<int> src_col(static_cast<std::size_t>(s));
  for (int v = 0; v < s; ++v) {
    const int j = static_cast<int>((static_cast<long>(2 * v + 1) * p.window_cols) / (2L * s));
    src_col[static_cast<std::size_t>(v)] = ((left + j) % img.cols() + img.cols()) % img.cols();
  }

  for (int u = 0; u < s; ++u) {
    const int i = static_cast<int>((static_cast<long>(2 * u + 1) * p.window_rows) / (2L * s));
    const int row = top + i;
    if (row < 0 || row >= img.rows()) continue;
    for (int v = 0; v < s; ++v) {
      const int col = src_col[static_cast<std::size_t>(v)];
      if (!img.has_return(row, col)) continue;
      out.channels[kRangeChannel](u, v) = clamp01(img.range(row, col) / p.range_norm_max);
      out.channels[kHeightChannel](u, v) =
          clamp01((img.height(row, col) - p.height_norm_min) / height_span);
      out.channels[kIntensityChannel](u, v) = clamp01(img.intensity(row, col));
      out.mask(u, v) = member(row, col);
    }
  }
  return out;
}

std::vector<Sample> extract_frame_samples(const RangeImage& img, const PointCloud& /*cloud*/,
                                          const std::vector<Segment>& segs, const CropParams& p) {
  std::vector<Sample> out;
  out.reserve(segs.size());
  for (const Segment& seg : segs) out.push_back(extract_sample(img, seg, p));
  return out;
}

void write_samples(std::ostream& os, const std::vector<Sample>& samples) {
  const int s = samples.empty() ? 0 : samples.front().size();
  detail::write_magic(os, "LSMP");
  detail::write_le<std::uint16_t>(os, kSampleVersion);
  detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(s));
  detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(samples.size()));
  for (const Sample& smp : samples) {
    if (smp.size() != s) throw std::invalid_argument("write_samples: mixed sample sizes");
    detail::write_le<std::int64_t>(os, smp.frame_id);
    detail::write_le<std::int32_t>(os, smp.segment_id);
    for (const Plane& ch : smp.channels) {
      for (Eigen::Index k = 0; k < ch.size(); ++k) detail::write_le<float>(os, ch.data()[k]);
    }
  }
}

std::vector<Sample> read_samples(std::istream& is) {
  detail::expect_magic(is, "LSMP");
  if (detail::read_le<std::uint16_t>(is) != kSampleVersion) throw FormatError("unsupported LSMP version");
  const auto s = static_cast<int>(detail::read_le<std::uint32_t>(is));
  const auto count = detail::read_le<std::uint32_t>(is);
  std::vector<Sample> out(count);
  for (Sample& smp : out) {
    smp.frame_id = detail::read_le<std::int64_t>(is);
    smp.segment_id = detail::read_le<std::int32_t>(is);
    for (Plane& ch : smp.channels) {
      ch.resize(s, s);
      for (Eigen::Index k = 0; k < ch.size(); ++k) ch.data()[k] = detail::read_le<float>(is);
    }
    smp.mask = GridT<std::uint8_t>::Zero(s, s);
  }
  return out;
}

void save_samples(const std::filesystem::path& path, const std::vector<Sample>& samples) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
  write_samples(os, samples);
}

std::vector<Sample> load_samples(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path.string());
  return read_samples(is);
}

}  // namespace lidarseg
