#include "acfnet/acf.hpp"

#include <cmath>

namespace acfnet {

std::vector<std::pair<int, int>> ChannelDelayCorrelationMatrix::row_order() const {
  std::vector<std::pair<int, int>> order;
  order.reserve(static_cast<std::size_t>(channels) * channels);
  for (int i = 0; i < channels; ++i) {
    for (int j = 0; j < channels; ++j) order.emplace_back(i, j);
  }
  return order;
}

ChannelDelayCorrelationMatrix build_acf(const FeatureTrack& normalized, int max_delay) {
  ChannelDelayCorrelationMatrix acf;
  acf.channels = static_cast<int>(normalized.channels());
  acf.max_delay = max_delay;
  acf.data = correlation_matrix(normalized.data, max_delay);
  return acf;
}

FeatureTrack acf_to_track(const ChannelDelayCorrelationMatrix& acf) {
  FeatureTrack t;
  t.frame_rate = 0.0;
  t.data = acf.data;
  for (const auto& [i, j] : acf.row_order()) {
    t.channel_names.push_back("r(" + std::to_string(i + 1) + "," + std::to_string(j + 1) + ")");
  }
  return t;
}

ChannelDelayCorrelationMatrix acf_from_track(const FeatureTrack& track) {
  const auto rows = track.channels();
  const auto m = static_cast<Eigen::Index>(std::llround(std::sqrt(static_cast<double>(rows))));
  if (m * m != rows) throw FormatError("ACF row count " + std::to_string(rows) + " is not a square");
  ChannelDelayCorrelationMatrix acf;
  acf.channels = static_cast<int>(m);
  acf.max_delay = static_cast<int>(track.frames() - 1);
  acf.data = track.data;
  return acf;
}

NormStats fit_norm_stats(std::span<const ChannelDelayCorrelationMatrix> acfs) {
  if (acfs.empty()) throw ShapeError("fit_norm_stats needs at least one matrix");
  const auto rows = acfs.front().data.rows();
  const auto cols = acfs.front().data.cols();
  NormStats s;
  s.mean = Eigen::MatrixXd::Zero(rows, cols);
  for (const auto& a : acfs) {
    if (a.data.rows() != rows || a.data.cols() != cols) throw ShapeError("fit_norm_stats: mixed ACF shapes");
    s.mean += a.data;
  }
  s.mean /= static_cast<double>(acfs.size());
  Eigen::MatrixXd var = Eigen::MatrixXd::Zero(rows, cols);
  for (const auto& a : acfs) var.array() += (a.data - s.mean).array().square();
  s.std = (var / static_cast<double>(acfs.size())).array().sqrt();
  return s;
}

ChannelDelayCorrelationMatrix apply_norm(const ChannelDelayCorrelationMatrix& acf, const NormStats& stats) {
  if (acf.data.rows() != stats.mean.rows() || acf.data.cols() != stats.mean.cols() ||
      stats.std.rows() != stats.mean.rows() || stats.std.cols() != stats.mean.cols()) {
    throw ShapeError("apply_norm: ACF shape does not match norm stats");
  }
  ChannelDelayCorrelationMatrix out = acf;
  out.data = (stats.std.array() < kDegenerateStd)
                 .select(0.0, (acf.data - stats.mean).array() / stats.std.array());
  return out;
}

}  // namespace acfnet
