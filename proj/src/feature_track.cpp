#include "acfnet/feature_track.hpp"

#include <cmath>
#include <set>

#include "acfnet/io_util.hpp"

namespace acfnet {

namespace {
constexpr char kMagic[4] = {'A', 'C', 'F', 'T'};
constexpr std::uint16_t kAcftVersion = 1;
}  // namespace

void FeatureTrack::validate() const {
  if (channels() < 1 || frames() < 1) throw FormatError("feature track must be non-empty");
  if (static_cast<Eigen::Index>(channel_names.size()) != channels()) {
    throw FormatError("channel name count does not match channel count");
  }
  if (std::set<std::string>(channel_names.begin(), channel_names.end()).size() != channel_names.size()) {
    throw FormatError("channel names must be unique");
  }
  if (!data.allFinite()) throw FormatError("feature track contains non-finite values");
  if (!(frame_rate >= 0.0) || !std::isfinite(frame_rate)) throw FormatError("invalid frame rate");
}

std::vector<std::uint8_t> encode_acft(const FeatureTrack& track) {
  track.validate();
  ByteWriter w;
  w.put_bytes(kMagic, 4);
  w.put<std::uint16_t>(kAcftVersion);
  w.put<double>(track.frame_rate);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(track.channels()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(track.frames()));
  for (const auto& name : track.channel_names) w.put_string16(name);
  const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rows =
      track.data.cast<float>();
  w.put_bytes(rows.data(), sizeof(float) * static_cast<std::size_t>(rows.size()));
  return std::move(w.bytes());
}

FeatureTrack decode_acft(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes.data(), bytes.size());
  char magic[4];
  r.get_bytes(magic, 4);
  if (std::string_view(magic, 4) != std::string_view(kMagic, 4)) throw FormatError("bad ACFT magic");
  if (const auto v = r.get<std::uint16_t>(); v != kAcftVersion) {
    throw FormatError("unsupported ACFT version " + std::to_string(v));
  }
  FeatureTrack t;
  t.frame_rate = r.get<double>();
  const auto m = r.get<std::uint32_t>();
  const auto n = r.get<std::uint32_t>();
  if (m == 0 || n == 0) throw FormatError("ACFT file declares an empty matrix");
  t.channel_names.reserve(m);
  for (std::uint32_t i = 0; i < m; ++i) t.channel_names.push_back(r.get_string16());
  const std::size_t count = static_cast<std::size_t>(m) * n;
  if (r.remaining() != count * sizeof(float)) throw FormatError("ACFT payload size mismatch");
  Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rows(m, n);
  r.get_bytes(rows.data(), count * sizeof(float));
  t.data = rows.cast<double>();
  t.validate();
  return t;
}

void save_feature_track(const std::string& path, const FeatureTrack& track) {
  write_file_atomic(path, encode_acft(track));
}

FeatureTrack load_feature_track(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  return decode_acft(bytes);
}

}  // namespace acfnet
