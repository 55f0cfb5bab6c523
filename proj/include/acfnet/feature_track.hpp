#ifndef ACFNET_FEATURE_TRACK_HPP
#define ACFNET_FEATURE_TRACK_HPP

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace acfnet {

// Channels x frames. frame_rate is 0 for non-temporal payloads (cached ACFs).
struct FeatureTrack {
  Eigen::MatrixXd data;
  double frame_rate = 0.0;
  std::vector<std::string> channel_names;

  Eigen::Index channels() const { return data.rows(); }
  Eigen::Index frames() const { return data.cols(); }
  double duration() const { return frame_rate > 0.0 ? static_cast<double>(frames()) / frame_rate : 0.0; }

  // Throws FormatError if any invariant (non-empty, finite, unique names) fails.
  void validate() const;
};

// "ACFT" container: magic, u16 version, f64 frame_rate, u32 M, u32 N,
// M u16-prefixed UTF-8 names, then M*N little-endian f32, channel-major.
std::vector<std::uint8_t> encode_acft(const FeatureTrack& track);
FeatureTrack decode_acft(std::span<const std::uint8_t> bytes);

void save_feature_track(const std::string& path, const FeatureTrack& track);
FeatureTrack load_feature_track(const std::string& path);

}  // namespace acfnet

#endif  // ACFNET_FEATURE_TRACK_HPP
